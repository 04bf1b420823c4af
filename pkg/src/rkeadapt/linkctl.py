"""Adaptive transmit-power and PHY-mode control."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Tuple

TXP_MIN_DBM = -20
TXP_MAX_DBM = 8
TXP_STEP_DB = 4
TXP_LEVELS = tuple(range(TXP_MIN_DBM, TXP_MAX_DBM + 1, TXP_STEP_DB))

RSSI_BOUNDS_DBM = (-120.0, 20.0)


class PhyMode(str, enum.Enum):
    PHY_1M = "PHY_1M"
    PHY_2M = "PHY_2M"
    PHY_CODED = "PHY_CODED"

    def __str__(self) -> str:
        return self.value


def check_txp(dbm: int) -> int:
    if dbm not in TXP_LEVELS:
        raise ValueError(f"TXP {dbm} dBm not in {TXP_LEVELS}")
    return int(dbm)


@dataclass(frozen=True)
class LinkThresholds:
    rssi_high: float = -55.0
    rssi_low: float = -70.0
    pdr_high: float = 95.0
    pdr_low: float = 85.0

    def __post_init__(self):
        if not self.rssi_low < self.rssi_high:
            raise ValueError("rssi_low must be below rssi_high")
        if not self.pdr_low < self.pdr_high:
            raise ValueError("pdr_low must be below pdr_high")


@dataclass(frozen=True)
class LinkParams:
    phy: PhyMode
    txp: int
    rssi_current: float = -40.0
    pdr_current: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "phy", PhyMode(self.phy))
        check_txp(self.txp)
        lo, hi = RSSI_BOUNDS_DBM
        if not lo <= self.rssi_current <= hi:
            raise ValueError(f"rssi_current {self.rssi_current} dBm outside [{lo}, {hi}]")
        if not 0.0 <= self.pdr_current <= 100.0:
            raise ValueError(f"pdr_current {self.pdr_current} is not a percentage")


def initial_link() -> LinkParams:
    """Widest-range starting point: coded PHY at full power."""
    return LinkParams(PhyMode.PHY_CODED, TXP_MAX_DBM)


def adapt(link: LinkParams, th: LinkThresholds) -> Tuple[PhyMode, int]:
    """Return the next ``(phy, txp)``.

    A strong, clean link first sheds power in 4 dB steps and only once at the
    floor moves to 2M; a weak, lossy link first adds power and only once at the
    ceiling falls back to coded.  Anything in between is left alone.
    """
    phy, txp = link.phy, link.txp
    if link.rssi_current > th.rssi_high and link.pdr_current > th.pdr_high:
        if txp > TXP_MIN_DBM:
            txp = txp - TXP_STEP_DB
        elif phy != PhyMode.PHY_2M:
            phy = PhyMode.PHY_2M
    elif link.rssi_current < th.rssi_low and link.pdr_current < th.pdr_low:
        if txp < TXP_MAX_DBM:
            txp = txp + TXP_STEP_DB
        elif phy != PhyMode.PHY_CODED:
            phy = PhyMode.PHY_CODED
    return phy, txp
