"""Per-channel packet delivery rate (PDR) estimation.

Each BLE data channel keeps a ring buffer of its last ``window_size``
transmission outcomes (+1 ok, -1 failed, 0 empty slot) plus lifetime
ok/error counters.  The windowed rate is the real-time channel quality
that the hopping and link controllers consume; the lifetime rate is the
long-run average used for reporting.

The arrays are plain numpy buffers so the simulation kernels can update
them in place without going through the Python methods.
"""

from __future__ import annotations

from typing import Iterable, List, Sequence

import numpy as np

NUM_CHANNELS = 37
DEFAULT_WINDOW_SIZE = 25

MARK_OK = 1
MARK_FAIL = -1
MARK_EMPTY = 0


def check_channel(channel: int) -> int:
    """Validate a BLE data-channel index and return it as ``int``."""
    if isinstance(channel, bool) or not isinstance(channel, (int, np.integer)):
        raise ValueError(f"channel must be an integer, got {channel!r}")
    channel = int(channel)
    if not 0 <= channel < NUM_CHANNELS:
        raise ValueError(f"channel {channel} outside data channels 0..36")
    return channel


def channel_frequency_mhz(channel: int) -> int:
    return 2404 + 2 * check_channel(channel)


def _percent(ok: int, fail: int) -> float:
    n = ok + fail
    if n == 0:
        return 100.0
    return 100.0 * ok / n


class PdrTracker:
    """Windowed and lifetime PDR bookkeeping for the 37 data channels.

    ``marks[c, head[c]]`` is the next slot to write on channel ``c``; once
    the window is full that slot holds the oldest outcome.  ``win_ok`` caches
    the number of +1 marks so ``pdr_latest`` is O(1).
    """

    def __init__(self, window_size: int = DEFAULT_WINDOW_SIZE):
        if isinstance(window_size, bool) or int(window_size) != window_size:
            raise ValueError(f"window_size must be an integer, got {window_size!r}")
        window_size = int(window_size)
        if window_size < 1:
            raise ValueError(f"window_size must be >= 1, got {window_size}")
        self.window_size = window_size
        self.marks = np.zeros((NUM_CHANNELS, window_size), dtype=np.int8)
        self.head = np.zeros(NUM_CHANNELS, dtype=np.int64)
        self.filled = np.zeros(NUM_CHANNELS, dtype=np.int64)
        self.win_ok = np.zeros(NUM_CHANNELS, dtype=np.int64)
        self.total_packet_oks = np.zeros(NUM_CHANNELS, dtype=np.int64)
        self.total_packet_errors = np.zeros(NUM_CHANNELS, dtype=np.int64)

    def record_outcome(self, channel: int, ok: bool) -> None:
        c = check_channel(channel)
        w = self.window_size
        h = int(self.head[c])
        if self.filled[c] == w:
            if self.marks[c, h] == MARK_OK:
                self.win_ok[c] -= 1
        else:
            self.filled[c] += 1
        if ok:
            self.marks[c, h] = MARK_OK
            self.win_ok[c] += 1
            self.total_packet_oks[c] += 1
        else:
            self.marks[c, h] = MARK_FAIL
            self.total_packet_errors[c] += 1
        self.head[c] = (h + 1) % w

    def window(self, channel: int) -> List[int]:
        """Outcome marks currently held for ``channel``, oldest first."""
        c = check_channel(channel)
        n = int(self.filled[c])
        if n < self.window_size:
            return [int(m) for m in self.marks[c, :n]]
        h = int(self.head[c])
        row = self.marks[c]
        return [int(m) for m in np.concatenate((row[h:], row[:h]))]

    def pdr_latest(self, channel: int) -> float:
        c = check_channel(channel)
        ok = int(self.win_ok[c])
        return _percent(ok, int(self.filled[c]) - ok)

    def pdr_total(self, channel: int) -> float:
        c = check_channel(channel)
        return _percent(int(self.total_packet_oks[c]), int(self.total_packet_errors[c]))

    def pdr_latest_all(self) -> List[float]:
        return [self.pdr_latest(c) for c in range(NUM_CHANNELS)]

    def clear_window(self, channel: int) -> None:
        """Forget the windowed history of ``channel``; lifetime counters stay."""
        c = check_channel(channel)
        self.marks[c, :] = MARK_EMPTY
        self.head[c] = 0
        self.filled[c] = 0
        self.win_ok[c] = 0

    def pooled_latest(self, channels: Iterable[int]) -> float:
        """Windowed PDR pooled over the given channels' marks."""
        idx = [check_channel(c) for c in channels]
        ok = int(self.win_ok[idx].sum()) if idx else 0
        n = int(self.filled[idx].sum()) if idx else 0
        return _percent(ok, n - ok)

    def pooled_total(self) -> float:
        """Lifetime PDR pooled over every channel."""
        return _percent(int(self.total_packet_oks.sum()), int(self.total_packet_errors.sum()))

    def copy(self) -> "PdrTracker":
        other = PdrTracker(self.window_size)
        for name in ("marks", "head", "filled", "win_ok", "total_packet_oks", "total_packet_errors"):
            getattr(other, name)[...] = getattr(self, name)
        return other


def new_tracker(window_size: int = DEFAULT_WINDOW_SIZE) -> PdrTracker:
    return PdrTracker(window_size)


def record_outcome(tracker: PdrTracker, channel: int, ok: bool) -> None:
    tracker.record_outcome(channel, ok)


def pdr_latest(tracker: PdrTracker, channel: int) -> float:
    return tracker.pdr_latest(channel)


def pdr_total(tracker: PdrTracker, channel: int) -> float:
    return tracker.pdr_total(channel)


def pdr_latest_all(tracker: PdrTracker) -> List[float]:
    return tracker.pdr_latest_all()


def tracker_from_trace(window_size: int, trace: Sequence[tuple]) -> PdrTracker:
    """Build a tracker by replaying ``(channel, ok)`` pairs in order."""
    tracker = PdrTracker(window_size)
    for channel, ok in trace:
        tracker.record_outcome(channel, ok)
    return tracker
