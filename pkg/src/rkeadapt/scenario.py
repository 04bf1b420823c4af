"""Scenario configuration, orchestration and metrics export.

A scenario is one seeded run: provision the key pair and complete an
authentication round, then simulate the data link for ``duration_events``
connection events.  Attacks listed in the config are launched at their
trigger events against a snapshot of the live deployment, so they never
disturb the link being measured.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import attacks as attacks_mod
from .attacks import AttackDescriptor, AttackKind, AttackOutcome
from .chanqual import NUM_CHANNELS
from .errors import ConfigError
from .hopctl import HopThresholds
from .linkctl import TXP_LEVELS, LinkParams, LinkThresholds, PhyMode, initial_link
from .protocol import DEFAULT_VIN, Defenses, provision, run_round
from .rfsim import (
    DEFAULT_CAPTURE_DB,
    EventSeries,
    Interferer,
    LinkSimulator,
    PathLossParams,
)

CSV_COLUMNS = (
    "event_index",
    "time_slot",
    "channel",
    "phy",
    "txp_dbm",
    "rssi_dbm",
    "success",
    "pdr_latest_overall",
    "pdr_total_overall",
    "enabled_channel_count",
    "channel_map_hex",
)

STEADY_STATE_FRACTION = 0.2
PRESETS = ("mild", "strong", "dynamic")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    duration_events: int = 10_000
    adaptation: bool = True
    window_size: int = 25
    pdr_threshold: float = 95.0
    channel_threshold: int = 10
    adaptation_period: int = 25
    # starting point when adaptive; ``baseline_link`` is held fixed otherwise
    link: LinkParams = field(default_factory=initial_link)
    baseline_link: Optional[LinkParams] = None
    path_loss: PathLossParams = PathLossParams()
    interferers: Tuple[Interferer, ...] = ()
    attacks: Tuple[AttackDescriptor, ...] = ()
    link_thresholds: LinkThresholds = LinkThresholds()
    capture_db: float = DEFAULT_CAPTURE_DB
    hop_increment: int = 7
    events_per_second: int = 50
    vin: str = DEFAULT_VIN
    name: str = "custom"

    def __post_init__(self):
        if self.duration_events < self.adaptation_period:
            raise ConfigError("duration_events", "must be >= adaptation_period")

    @property
    def effective_link(self) -> LinkParams:
        if self.adaptation or self.baseline_link is None:
            return self.link
        return self.baseline_link

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)


# -- loading ---------------------------------------------------------------

_TOP_KEYS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(raw: dict, key: str, path: str, lo=None, hi=None, default=None):
    v = raw.get(key, default)
    where = f"{path}{key}"
    if not _is_int(v):
        raise ConfigError(where, f"expected an integer, got {v!r}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(where, f"{v} outside [{lo}, {hi}]")
    return v


def _num(raw: dict, key: str, path: str, lo=None, hi=None, default=None) -> float:
    v = raw.get(key, default)
    where = f"{path}{key}"
    if not _is_num(v):
        raise ConfigError(where, f"expected a number, got {v!r}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(where, f"{v} outside [{lo}, {hi}]")
    return float(v)


def _mapping(v, path: str, allowed) -> dict:
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(path, f"expected a mapping, got {type(v).__name__}")
    for k in v:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else str(k), "unknown key")
    return v


def _link(raw, path: str, default: LinkParams) -> LinkParams:
    raw = _mapping(raw, path, {"phy", "txp_dbm"})
    phy = raw.get("phy", default.phy.value)
    try:
        phy = PhyMode(phy)
    except ValueError:
        raise ConfigError(f"{path}.phy", f"must be one of {[p.value for p in PhyMode]}") from None
    txp = _int(raw, "txp_dbm", f"{path}.", default=default.txp)
    if txp not in TXP_LEVELS:
        raise ConfigError(f"{path}.txp_dbm", f"must be one of {list(TXP_LEVELS)}")
    return LinkParams(phy, txp)


def _wrap(path: str, fn, *args, **kw):
    # turn a sub-config's own invariant failure into a located ConfigError
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def config_from_dict(raw: Dict[str, Any]) -> ScenarioConfig:
    """Validate a parsed config mapping and fill in defaults."""
    raw = _mapping(raw, "", _TOP_KEYS)
    if "seed" not in raw:
        raise ConfigError("seed", "required")
    kw: Dict[str, Any] = {}
    kw["seed"] = _int(raw, "seed", "", 0, 2**64 - 1)
    kw["adaptation_period"] = _int(raw, "adaptation_period", "", 1, default=25)
    kw["duration_events"] = _int(raw, "duration_events", "", kw["adaptation_period"], default=10_000)
    adaptation = raw.get("adaptation", True)
    if not isinstance(adaptation, bool):
        raise ConfigError("adaptation", "expected true or false")
    kw["adaptation"] = adaptation
    kw["window_size"] = _int(raw, "window_size", "", 1, 10_000, default=25)
    kw["pdr_threshold"] = _num(raw, "pdr_threshold", "", 0, 100, default=95.0)
    kw["channel_threshold"] = _int(raw, "channel_threshold", "", 2, NUM_CHANNELS, default=10)
    kw["hop_increment"] = _int(raw, "hop_increment", "", 5, 16, default=7)
    kw["events_per_second"] = _int(raw, "events_per_second", "", 1, default=50)
    kw["capture_db"] = _num(raw, "capture_db", "", default=DEFAULT_CAPTURE_DB)
    for key in ("vin", "name"):
        if key in raw:
            if not isinstance(raw[key], str) or not raw[key]:
                raise ConfigError(key, "expected a non-empty string")
            kw[key] = raw[key]
    if "vin" in kw and not (len(kw["vin"]) <= 17 and kw["vin"].isascii()):
        raise ConfigError("vin", "must be at most 17 ASCII characters")

    kw["link"] = _link(raw.get("link"), "link", initial_link())
    if raw.get("baseline_link") is not None:
        kw["baseline_link"] = _link(raw["baseline_link"], "baseline_link", kw["link"])

    pl = _mapping(raw.get("path_loss"), "path_loss", {"pl0_db", "exponent", "distance_m"})
    d = PathLossParams()
    kw["path_loss"] = _wrap("path_loss", PathLossParams,
                            _num(pl, "pl0_db", "path_loss.", default=d.pl0_db),
                            _num(pl, "exponent", "path_loss.", 1.5, 4.5, default=d.exponent),
                            _num(pl, "distance_m", "path_loss.", default=d.distance_m))

    lt = _mapping(raw.get("link_thresholds"), "link_thresholds",
                  {"rssi_high", "rssi_low", "pdr_high", "pdr_low"})
    d2 = LinkThresholds()
    kw["link_thresholds"] = _wrap(
        "link_thresholds", LinkThresholds,
        *(_num(lt, k, "link_thresholds.", default=getattr(d2, k))
          for k in ("rssi_high", "rssi_low", "pdr_high", "pdr_low")),
    )

    itfs = raw.get("interferers") or []
    if not isinstance(itfs, list):
        raise ConfigError("interferers", "expected a list")
    parsed = []
    for i, item in enumerate(itfs):
        p = f"interferers[{i}]"
        item = _mapping(item, p, {"wifi_channel", "rssi_dbm", "duty_cycle", "start_event", "end_event"})
        for req in ("wifi_channel", "rssi_dbm", "duty_cycle"):
            if req not in item:
                raise ConfigError(f"{p}.{req}", "required")
        start = _int(item, "start_event", p + ".", 0, default=0)
        end = item.get("end_event")
        if end is not None:
            end = _int(item, "end_event", p + ".", start + 1)
        parsed.append(Interferer(
            _int(item, "wifi_channel", p + ".", 1, 13),
            _num(item, "rssi_dbm", p + "."),
            _num(item, "duty_cycle", p + ".", 0.0, 1.0),
            (start, end),
        ))
    kw["interferers"] = tuple(parsed)

    atks = raw.get("attacks") or []
    if not isinstance(atks, list):
        raise ConfigError("attacks", "expected a list")
    descs = []
    for i, item in enumerate(atks):
        p = f"attacks[{i}]"
        item = _mapping(item, p, {"kind", "trigger_event", "defense_enabled"})
        try:
            kind = AttackKind(item.get("kind"))
        except ValueError:
            raise ConfigError(f"{p}.kind", f"must be one of {[k.value for k in AttackKind]}") from None
        trig = _int(item, "trigger_event", p + ".", 0, kw["duration_events"] - 1, default=0)
        enabled = item.get("defense_enabled", True)
        if not isinstance(enabled, bool):
            raise ConfigError(f"{p}.defense_enabled", "expected true or false")
        descs.append(AttackDescriptor(kind, trig, enabled))
    kw["attacks"] = tuple(descs)
    return ScenarioConfig(**kw)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"could not parse {path}: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    raw.setdefault("name", path.stem)
    return config_from_dict(raw)


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {list(PRESETS)}")
    return Path(str(resources.files("rkeadapt") / "presets" / f"{name}.yaml"))


def load_preset(name: str) -> ScenarioConfig:
    return load_scenario(preset_path(name))


def resolve_config(spec: str) -> ScenarioConfig:
    """A preset name or a path to a config file."""
    if spec in PRESETS and not Path(spec).exists():
        return load_preset(spec)
    return load_scenario(spec)


def dynamic_schedule(channels: Sequence[int], duration_events: int, rssi_dbm: float,
                     duty_cycle: float) -> Tuple[Interferer, ...]:
    """One interferer per channel, switching at equal fractions of the run."""
    k = len(channels)
    edges = [duration_events * i // k for i in range(k + 1)]
    return tuple(
        Interferer(ch, rssi_dbm, duty_cycle, (edges[i], None if i == k - 1 else edges[i + 1]))
        for i, ch in enumerate(channels)
    )


# -- running ---------------------------------------------------------------

@dataclass
class RunMetrics:
    config: ScenarioConfig
    series: EventSeries
    auth_executed: bool
    attacks: List[AttackOutcome] = field(default_factory=list)
    adaptation_log: list = field(default_factory=list)
    final_channel_map_hex: str = ""
    final_enabled_channels: int = NUM_CHANNELS
    phases: List[dict] = field(default_factory=list)

    @property
    def n_events(self) -> int:
        return len(self.series)

    @property
    def pdr_total(self) -> float:
        """Lifetime delivery ratio of the whole run, as a fraction."""
        n = self.n_events
        return float(np.count_nonzero(self.series.success)) / n if n else 1.0

    @property
    def steady_state_pdr_latest(self) -> float:
        """Mean windowed PDR over the final fifth of the run, as a fraction."""
        n = self.n_events
        tail = self.series.pdr_latest[n - max(1, int(round(n * STEADY_STATE_FRACTION))):]
        return float(np.mean(tail)) / 100.0

    @property
    def attacks_ok(self) -> bool:
        return all(o.as_expected for o in self.attacks)

    def time_slots(self) -> np.ndarray:
        return np.arange(self.n_events) // self.config.events_per_second

    def slot_pdr_total(self) -> np.ndarray:
        """Lifetime PDR (fraction) at the end of each time slot."""
        eps = self.config.events_per_second
        idx = np.arange(eps - 1, self.n_events, eps)
        return self.series.pdr_total[idx] / 100.0

    def summary(self) -> dict:
        cfg = self.config
        out = {
            "name": cfg.name,
            "seed": cfg.seed,
            "adaptation": cfg.adaptation,
            "duration_events": self.n_events,
            "pdr_total": self.pdr_total,
            "steady_state_pdr_latest": self.steady_state_pdr_latest,
            "final_phy": self.series.phy[-1].value if self.n_events else None,
            "final_txp_dbm": int(self.series.txp[-1]) if self.n_events else None,
            "final_enabled_channels": self.final_enabled_channels,
            "final_channel_map_hex": self.final_channel_map_hex,
            "auth_executed": self.auth_executed,
            "attacks": [o.summary() for o in self.attacks],
            "attacks_ok": self.attacks_ok,
        }
        if self.phases:
            out["phases"] = self.phases
        return out


def _simulator(cfg: ScenarioConfig, backend: Optional[str] = None) -> LinkSimulator:
    return LinkSimulator(
        seed=cfg.seed,
        window_size=cfg.window_size,
        hop_thresholds=HopThresholds(cfg.pdr_threshold, cfg.channel_threshold),
        link_thresholds=cfg.link_thresholds,
        adaptation=cfg.adaptation,
        adaptation_period=cfg.adaptation_period,
        link=cfg.effective_link,
        path_loss=cfg.path_loss,
        interferers=cfg.interferers,
        capture_db=cfg.capture_db,
        hop_increment=cfg.hop_increment,
        backend=backend,
    )


def run_scenario(cfg: ScenarioConfig, backend: Optional[str] = None) -> RunMetrics:
    rng = random.Random(f"auth:{cfg.seed}")
    dep = provision(rng, vin=cfg.vin, defenses=Defenses())
    auth = run_round(dep, rng)

    sim = _simulator(cfg, backend)
    pending = sorted(enumerate(cfg.attacks), key=lambda x: (x[1].trigger_event, x[0]))
    outcomes: List[Tuple[int, AttackOutcome]] = []
    parts = []
    for idx, desc in pending:
        if desc.trigger_event > sim.event_index:
            parts.append(sim.run(desc.trigger_event - sim.event_index))
        snapshot = copy.deepcopy(dep)
        atk_rng = random.Random(f"attack:{cfg.seed}:{idx}")
        outcomes.append((idx, attacks_mod.run_attack(desc, snapshot, atk_rng)))
    if sim.event_index < cfg.duration_events:
        parts.append(sim.run(cfg.duration_events - sim.event_index))

    return RunMetrics(
        config=cfg,
        series=EventSeries.concat(parts),
        auth_executed=auth.executed,
        attacks=[o for _, o in sorted(outcomes, key=lambda x: x[0])],
        adaptation_log=list(sim.adaptation_log),
        final_channel_map_hex=sim.channel_map.hex(),
        final_enabled_channels=sim.channel_map.count(),
    )


def run_dynamic_wifi(cfg: ScenarioConfig, backend: Optional[str] = None) -> RunMetrics:
    """Run a switching-interferer scenario and add per-phase delivery ratios.

    Phases are the interferers' active intervals, which must tile the run
    back to back.
    """
    itfs = sorted(cfg.interferers, key=lambda i: i.active_interval[0])
    if not itfs:
        raise ConfigError("interferers", "dynamic run needs an interferer schedule")
    cursor = 0
    for i, itf in enumerate(itfs):
        start, end = itf.active_interval
        if start != cursor:
            raise ConfigError(f"interferers[{i}].start_event", "phases must tile the run back to back")
        cursor = cfg.duration_events if end is None else end
    if cursor != cfg.duration_events:
        raise ConfigError("interferers", "schedule must cover the whole run")

    m = run_scenario(cfg, backend)
    for itf in itfs:
        start, end = itf.active_interval
        end = cfg.duration_events if end is None else min(end, cfg.duration_events)
        ok = m.series.success[start:end]
        m.phases.append({
            "wifi_channel": itf.wifi_channel,
            "start_event": start,
            "end_event": end,
            "pdr": float(np.count_nonzero(ok)) / len(ok) if len(ok) else 1.0,
        })
    return m


def compare(cfg: ScenarioConfig, dynamic: bool = False, backend: Optional[str] = None
            ) -> Tuple[RunMetrics, RunMetrics]:
    """Adaptive and non-adaptive twins from the same seed, run side by side."""
    runner = run_dynamic_wifi if dynamic else run_scenario
    twins = (cfg.with_overrides(adaptation=True), cfg.with_overrides(adaptation=False))
    with ThreadPoolExecutor(max_workers=2) as pool:
        adaptive, baseline = pool.map(lambda c: runner(c, backend), twins)
    return adaptive, baseline


# -- export ----------------------------------------------------------------

def _csv_text(metrics: RunMetrics) -> str:
    s = metrics.series
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    slots = metrics.time_slots()
    for i in range(len(s)):
        w.writerow((
            i,
            int(slots[i]),
            int(s.channel[i]),
            s.phy[i].value,
            int(s.txp[i]),
            f"{s.rssi[i]:.2f}",
            int(bool(s.success[i])),
            f"{s.pdr_latest[i] / 100.0:.6f}",
            f"{s.pdr_total[i] / 100.0:.6f}",
            int(s.enabled_count[i]),
            s.map_hex[i],
        ))
    buf.write("# summary " + json.dumps(metrics.summary(), sort_keys=True) + "\n")
    return buf.getvalue()


def emit_csv(metrics: RunMetrics, path) -> None:
    Path(path).write_text(_csv_text(metrics), encoding="utf-8")


def emit_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_csv(path) -> Tuple[List[dict], dict]:
    """Parse a file written by :func:`emit_csv` into rows and the summary."""
    rows, summary = [], {}
    with open(path, encoding="utf-8") as fh:
        data = [line for line in fh if not line.startswith("#")]
        fh.seek(0)
        for line in fh:
            if line.startswith("# summary "):
                summary = json.loads(line[len("# summary "):])
    rows = list(csv.DictReader(data))
    return rows, summary
