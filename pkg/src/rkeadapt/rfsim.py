"""Deterministic 2.4 GHz link simulation.

Model pieces:

* log-distance path loss, so RSSI moves 1:1 with transmit power;
* a per-PHY delivery curve that is 0 at the PHY's sensitivity floor, ramps
  linearly to ``p_max`` at ``saturation_dbm`` and stays flat above it;
* Wi-Fi interferers that block a fixed footprint of BLE channels for a
  ``duty_cycle`` fraction of the time, unless the wanted signal beats the
  interferer by at least the capture margin.

Randomness is a counter-based generator keyed by ``(seed, node, event)``,
so any event's draw can be recomputed without replaying the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .chanqual import NUM_CHANNELS, PdrTracker, check_channel
from .hopctl import ChannelMap, HopState, HopThresholds, select_channel, update_channel_map
from .linkctl import LinkParams, LinkThresholds, PhyMode, adapt, check_txp, initial_link

DEFAULT_CAPTURE_DB = 8.0
DEFAULT_ADAPTATION_PERIOD = 25

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


# -- counter-based RNG ------------------------------------------------------

def mix64(z: int) -> int:
    """SplitMix64 finaliser."""
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def stream_key(seed: int, node: int) -> int:
    return mix64(mix64(seed & _M64) ^ ((node * _GOLDEN) & _M64))


def event_uniform(key: int, event: int) -> float:
    """Uniform draw in [0, 1) for ``event`` on the stream ``key``."""
    return (mix64((key + (event + 1) * _GOLDEN) & _M64) >> 11) * (1.0 / 9007199254740992.0)


# -- physical model ---------------------------------------------------------

@dataclass(frozen=True)
class PathLossParams:
    pl0_db: float = 40.0
    exponent: float = 2.5
    distance_m: float = 1.0

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError("distance_m must be positive")
        if not 1.5 <= self.exponent <= 4.5:
            raise ValueError("path-loss exponent must be in [1.5, 4.5]")

    def loss_db(self) -> float:
        return self.pl0_db + 10.0 * self.exponent * math.log10(self.distance_m)


PHY_FLOORS_DBM = {PhyMode.PHY_2M: -78.0, PhyMode.PHY_1M: -90.0, PhyMode.PHY_CODED: -100.0}


@dataclass(frozen=True)
class PhyCurve:
    floor_dbm: Dict[PhyMode, float] = field(default_factory=lambda: dict(PHY_FLOORS_DBM))
    saturation_dbm: float = -55.0
    p_max: float = 0.995

    def __post_init__(self):
        for phy in PhyMode:
            if phy not in self.floor_dbm:
                raise ValueError(f"missing floor for {phy}")
            if not self.floor_dbm[phy] < self.saturation_dbm:
                raise ValueError(f"floor of {phy} must be below saturation")
        if not 0.0 < self.p_max <= 1.0:
            raise ValueError("p_max must be in (0, 1]")


@dataclass(frozen=True)
class Interferer:
    wifi_channel: int
    rssi_at_receiver_dbm: float
    duty_cycle: float
    active_interval: Tuple[int, Optional[int]] = (0, None)

    def __post_init__(self):
        if not 1 <= self.wifi_channel <= 13:
            raise ValueError("wifi_channel must be in [1, 13]")
        if not 0.0 <= self.duty_cycle <= 1.0:
            raise ValueError("duty_cycle must be in [0, 1]")

    def active_at(self, event: int) -> bool:
        start, end = self.active_interval
        return event >= start and (end is None or event < end)

    @property
    def footprint(self) -> frozenset:
        return affected_ble_channels(self.wifi_channel)


@dataclass(frozen=True)
class EventOutcome:
    event_index: int
    channel: int
    phy: PhyMode
    txp: int
    rssi: float
    success: bool


def rssi_at(txp: int, pl: PathLossParams) -> float:
    return float(txp) - pl.loss_db()


def base_pdr(phy: PhyMode, rssi: float, curve: PhyCurve = PhyCurve()) -> float:
    floor = curve.floor_dbm[PhyMode(phy)]
    if rssi <= floor:
        return 0.0
    if rssi >= curve.saturation_dbm:
        return curve.p_max
    return (rssi - floor) / (curve.saturation_dbm - floor) * curve.p_max


def affected_ble_channels(wifi_channel: int) -> frozenset:
    """BLE data channels degraded by a 2.4 GHz Wi-Fi channel."""
    if isinstance(wifi_channel, bool) or not isinstance(wifi_channel, (int, np.integer)) \
            or not 1 <= wifi_channel <= 13:
        raise ValueError(f"wifi_channel must be an integer in [1, 13], got {wifi_channel!r}")
    f_wifi = 2412 + 5 * (int(wifi_channel) - 1)
    c = (f_wifi - 2404) // 2
    return frozenset(range(max(0, c - 5), min(NUM_CHANNELS - 1, c + 4) + 1))


def success_probability(channel: int, phy: PhyMode, txp: int, pl: PathLossParams,
                        interferers: Iterable[Interferer], curve: PhyCurve = PhyCurve(),
                        capture_db: float = DEFAULT_CAPTURE_DB, event: Optional[int] = None) -> float:
    """Delivery probability on ``channel``.

    ``interferers`` are all assumed active unless ``event`` is given, in which
    case each one's ``active_interval`` is honoured.
    """
    channel = check_channel(channel)
    rssi = rssi_at(txp, pl)
    p = base_pdr(phy, rssi, curve)
    for itf in interferers:
        if event is not None and not itf.active_at(event):
            continue
        if channel in itf.footprint and rssi - itf.rssi_at_receiver_dbm < capture_db:
            p *= 1.0 - itf.duty_cycle
    return p


def channel_probabilities(phy: PhyMode, txp: int, pl: PathLossParams,
                          interferers: Sequence[Interferer], curve: PhyCurve,
                          capture_db: float, event: int) -> np.ndarray:
    return np.array(
        [success_probability(c, phy, txp, pl, interferers, curve, capture_db, event)
         for c in range(NUM_CHANNELS)],
        dtype=np.float64,
    )


# -- link simulation --------------------------------------------------------

@dataclass
class EventSeries:
    """Column arrays, one row per connection event."""

    channel: np.ndarray
    success: np.ndarray
    phy: List[PhyMode]
    txp: np.ndarray
    rssi: np.ndarray
    pdr_latest: np.ndarray
    pdr_total: np.ndarray
    enabled_count: np.ndarray
    map_hex: List[str]

    def __len__(self) -> int:
        return len(self.channel)

    @classmethod
    def concat(cls, parts: Sequence["EventSeries"]) -> "EventSeries":
        return cls(
            np.concatenate([p.channel for p in parts]),
            np.concatenate([p.success for p in parts]),
            [x for p in parts for x in p.phy],
            np.concatenate([p.txp for p in parts]),
            np.concatenate([p.rssi for p in parts]),
            np.concatenate([p.pdr_latest for p in parts]),
            np.concatenate([p.pdr_total for p in parts]),
            np.concatenate([p.enabled_count for p in parts]),
            [x for p in parts for x in p.map_hex],
        )


class LinkSimulator:
    """One BLE link: hop selection, delivery draws, PDR tracking, adaptation.

    Adaptation runs after every ``adaptation_period`` events: the channel map
    is refreshed from the windowed PDRs and the link controller picks the
    next PHY/TXP from that period's mean RSSI and the windowed PDR pooled
    over the channels in use.
    """

    def __init__(self, *, seed: int, node: int = 0, window_size: int = 25,
                 hop_thresholds: HopThresholds = HopThresholds(),
                 link_thresholds: LinkThresholds = LinkThresholds(),
                 adaptation: bool = True, adaptation_period: int = DEFAULT_ADAPTATION_PERIOD,
                 link: Optional[LinkParams] = None, path_loss: PathLossParams = PathLossParams(),
                 interferers: Sequence[Interferer] = (), curve: PhyCurve = PhyCurve(),
                 capture_db: float = DEFAULT_CAPTURE_DB, hop_increment: int = 7,
                 backend: Optional[str] = None):
        if adaptation_period < 1:
            raise ValueError("adaptation_period must be >= 1")
        from . import kernels

        self.kernel = kernels.get_kernel(backend)
        self.key = stream_key(seed, node)
        self.tracker = PdrTracker(window_size)
        self.channel_map = ChannelMap.all_enabled()
        self.hop = HopState(0, hop_increment)
        self.hop_thresholds = hop_thresholds
        self.link_thresholds = link_thresholds
        self.adaptation = adaptation
        self.adaptation_period = adaptation_period
        start = link if link is not None else initial_link()
        self.phy = start.phy
        self.txp = check_txp(start.txp)
        self.path_loss = path_loss
        self.interferers = list(interferers)
        self.curve = curve
        self.capture_db = capture_db
        self.event_index = 0
        self._period_rssi: List[float] = []
        self._prob_cache: Dict[tuple, np.ndarray] = {}
        self.adaptation_log: List[Tuple[int, str, PhyMode, int]] = []

    # -- single-step path ---------------------------------------------------
    def run_connection_event(self) -> EventOutcome:
        """Advance one event through the plain Python path."""
        e = self.event_index
        channel, self.hop = select_channel(self.hop, self.channel_map)
        rssi = rssi_at(self.txp, self.path_loss)
        p = success_probability(channel, self.phy, self.txp, self.path_loss, self.interferers,
                                self.curve, self.capture_db, e)
        ok = event_uniform(self.key, e) < p
        self.tracker.record_outcome(channel, ok)
        if self.adaptation:
            self._period_rssi.append(rssi)
        outcome = EventOutcome(e, channel, self.phy, self.txp, rssi, ok)
        self.event_index += 1
        if self.adaptation and self.event_index % self.adaptation_period == 0:
            self._end_period()
        return outcome

    # -- bulk path ----------------------------------------------------------
    def _segment_end(self, start: int, stop: int) -> int:
        end = stop
        if self.adaptation:
            end = min(stop, (start // self.adaptation_period + 1) * self.adaptation_period)
        for itf in self.interferers:
            for edge in itf.active_interval:
                if edge is not None and start < edge < end:
                    end = edge
        return end

    def run(self, n_events: int) -> EventSeries:
        """Advance ``n_events`` events through the compiled/fallback kernel."""
        stop = self.event_index + n_events
        parts = []
        while self.event_index < stop:
            start = self.event_index
            end = self._segment_end(start, stop)
            n = end - start
            probs = self._probabilities(start)
            enabled = np.zeros(NUM_CHANNELS, dtype=np.uint8)
            for c in self.channel_map.channels():
                enabled[c] = 1
            out_ch = np.empty(n, dtype=np.int64)
            out_ok = np.empty(n, dtype=np.uint8)
            out_latest = np.empty(n, dtype=np.float64)
            out_total = np.empty(n, dtype=np.float64)
            t = self.tracker
            last = self.kernel.run_segment(
                self.key, start, n, self.hop.last_unmapped_channel, self.hop.hop_increment,
                enabled, probs, t.marks, t.head, t.filled, t.win_ok,
                t.total_packet_oks, t.total_packet_errors,
                out_ch, out_ok, out_latest, out_total,
            )
            self.hop = HopState(int(last), self.hop.hop_increment)
            rssi = rssi_at(self.txp, self.path_loss)
            parts.append(EventSeries(
                out_ch, out_ok.astype(bool), [self.phy] * n,
                np.full(n, self.txp, dtype=np.int64), np.full(n, rssi),
                out_latest, out_total,
                np.full(n, self.channel_map.count(), dtype=np.int64),
                [self.channel_map.hex()] * n,
            ))
            if self.adaptation:
                self._period_rssi.extend([rssi] * n)
            self.event_index = end
            if self.adaptation and end % self.adaptation_period == 0:
                self._end_period()
        if not parts:
            return EventSeries.concat([_empty_series()])
        return EventSeries.concat(parts)

    def _probabilities(self, event: int) -> np.ndarray:
        active = tuple(i for i, itf in enumerate(self.interferers) if itf.active_at(event))
        key = (self.phy, self.txp, active)
        probs = self._prob_cache.get(key)
        if probs is None:
            probs = channel_probabilities(self.phy, self.txp, self.path_loss, self.interferers,
                                          self.curve, self.capture_db, event)
            self._prob_cache[key] = probs
        return probs

    # -- adaptation ---------------------------------------------------------
    def pooled_latest(self) -> float:
        return self.tracker.pooled_latest(self.channel_map.channels())

    def _end_period(self) -> None:
        rssi = sum(self._period_rssi) / len(self._period_rssi) if self._period_rssi else -120.0
        self._period_rssi = []
        pdr = self.pooled_latest()
        self.update_map()
        params = LinkParams(self.phy, self.txp, min(max(rssi, -120.0), 20.0), pdr)
        phy, txp = adapt(params, self.link_thresholds)
        if (phy, txp) != (self.phy, self.txp):
            self.adaptation_log.append((self.event_index, "link", phy, txp))
        self.phy, self.txp = phy, txp

    def update_map(self) -> ChannelMap:
        """Refresh the channel map.

        When the map has shrunk below the channel threshold, the disabled
        channels' windows are cleared before the update so that the reset
        re-admits them for a fresh evaluation instead of re-applying the
        stale verdicts that excluded them.
        """
        th = self.hop_thresholds
        if self.channel_map.count() < th.channel_threshold:
            for c in range(NUM_CHANNELS):
                if not self.channel_map.is_enabled(c):
                    self.tracker.clear_window(c)
        new_map = update_channel_map(self.tracker, self.channel_map, th)
        if new_map.count() == 0:
            for c in range(NUM_CHANNELS):
                self.tracker.clear_window(c)
            new_map = ChannelMap.all_enabled()
        if new_map != self.channel_map:
            self.adaptation_log.append((self.event_index, "map", self.phy, self.txp))
        self.channel_map = new_map
        return new_map


def _empty_series() -> EventSeries:
    return EventSeries(
        np.empty(0, dtype=np.int64), np.empty(0, dtype=bool), [], np.empty(0, dtype=np.int64),
        np.empty(0), np.empty(0), np.empty(0), np.empty(0, dtype=np.int64), [],
    )
