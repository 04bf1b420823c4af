"""Adaptive frequency hopping: channel-map maintenance and hop selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Tuple

from .chanqual import NUM_CHANNELS, PdrTracker, check_channel
from .errors import InvalidStateError

ALL_CHANNELS_MASK = (1 << NUM_CHANNELS) - 1
MAP_BYTES = 5
DEFAULT_HOP_INCREMENT = 7
DEFAULT_CHANNEL_THRESHOLD = 10
DEFAULT_PDR_THRESHOLD = 95.0


@dataclass(frozen=True)
class ChannelMap:
    """37-bit enable bitmap; bit ``i`` set means data channel ``i`` is usable."""

    bits: int = ALL_CHANNELS_MASK

    def __post_init__(self):
        if self.bits & ~ALL_CHANNELS_MASK:
            raise ValueError("channel map has bits above channel 36")

    @classmethod
    def all_enabled(cls) -> "ChannelMap":
        return cls(ALL_CHANNELS_MASK)

    @classmethod
    def from_channels(cls, channels: Iterable[int]) -> "ChannelMap":
        bits = 0
        for c in channels:
            bits |= 1 << check_channel(c)
        return cls(bits)

    def is_enabled(self, channel: int) -> bool:
        return bool(self.bits >> check_channel(channel) & 1)

    def channels(self) -> List[int]:
        return [c for c in range(NUM_CHANNELS) if self.bits >> c & 1]

    def count(self) -> int:
        return bin(self.bits).count("1")

    def disable(self, channel: int) -> "ChannelMap":
        return ChannelMap(self.bits & ~(1 << check_channel(channel)))

    def hex(self) -> str:
        return encode_map(self).hex()

    def __iter__(self):
        return iter(self.channels())


@dataclass(frozen=True)
class HopState:
    last_unmapped_channel: int = 0
    hop_increment: int = DEFAULT_HOP_INCREMENT

    def __post_init__(self):
        check_channel(self.last_unmapped_channel)
        if not 5 <= self.hop_increment <= 16:
            raise ValueError(f"hop_increment must be in [5, 16], got {self.hop_increment}")


@dataclass(frozen=True)
class HopThresholds:
    pdr_threshold: float = DEFAULT_PDR_THRESHOLD
    channel_threshold: int = DEFAULT_CHANNEL_THRESHOLD

    def __post_init__(self):
        if not 0.0 <= self.pdr_threshold <= 100.0:
            raise ValueError(f"pdr_threshold must be a percentage, got {self.pdr_threshold}")
        if not 2 <= self.channel_threshold <= NUM_CHANNELS:
            raise ValueError(f"channel_threshold must be in [2, 37], got {self.channel_threshold}")


def encode_map(cmap: ChannelMap) -> bytes:
    """Pack as 5 little-endian bytes: byte ``j`` carries channels 8j..8j+7."""
    return (cmap.bits & ALL_CHANNELS_MASK).to_bytes(MAP_BYTES, "little")


def decode_map(data: bytes) -> ChannelMap:
    """Inverse of :func:`encode_map`; bits 37-39 are dropped."""
    if len(data) != MAP_BYTES:
        raise ValueError(f"channel map must be {MAP_BYTES} bytes, got {len(data)}")
    return ChannelMap(int.from_bytes(bytes(data), "little") & ALL_CHANNELS_MASK)


def enabled_count(cmap: ChannelMap) -> int:
    return cmap.count()


def update_channel_map(tracker: PdrTracker, last_map: ChannelMap, th: HopThresholds) -> ChannelMap:
    """One pass of the adaptive hopping rule.

    If the previous map is down to fewer than ``channel_threshold``
    channels, start again from all 37; otherwise start from ``last_map``.
    Then drop every channel whose windowed PDR is below ``pdr_threshold``.
    """
    if enabled_count(last_map) < th.channel_threshold:
        bits = ALL_CHANNELS_MASK
    else:
        bits = last_map.bits
    for c in range(NUM_CHANNELS):
        if bits >> c & 1 and tracker.pdr_latest(c) < th.pdr_threshold:
            bits &= ~(1 << c)
    return ChannelMap(bits)


def select_channel(hop: HopState, cmap: ChannelMap) -> Tuple[int, HopState]:
    """Increment-and-remap channel selection over the enabled channels."""
    used = cmap.channels()
    if not used:
        raise InvalidStateError("channel map has no enabled channels")
    unmapped = (hop.last_unmapped_channel + hop.hop_increment) % NUM_CHANNELS
    if cmap.bits >> unmapped & 1:
        channel = unmapped
    else:
        channel = used[unmapped % len(used)]
    return channel, HopState(unmapped, hop.hop_increment)
