import hashlib
import textwrap

import numpy as np
import pytest

from rkeadapt import scenario
from rkeadapt.attacks import AttackDescriptor, AttackKind
from rkeadapt.errors import ConfigError
from rkeadapt.linkctl import LinkParams, PhyMode


def write(tmp_path, body, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(body))
    return p


class TestLoading:
    def test_minimal(self, tmp_path):
        cfg = scenario.load_scenario(write(tmp_path, "seed: 4\nduration_events: 500\n"))
        assert cfg.seed == 4 and cfg.duration_events == 500
        assert cfg.window_size == 25
        assert cfg.pdr_threshold == 95.0
        assert cfg.channel_threshold == 10
        assert cfg.adaptation_period == 25
        assert cfg.adaptation is True
        assert (cfg.link.phy, cfg.link.txp) == (PhyMode.PHY_CODED, 8)
        assert cfg.interferers == () and cfg.attacks == ()
        assert cfg.name == "cfg"

    @pytest.mark.parametrize(
        "body,field",
        [
            ("seed: 1\npdr_threshold: 150\n", "pdr_threshold"),
            ("duration_events: 100\n", "seed"),
            ("seed: 1\nbogus: 3\n", "bogus"),
            ("seed: 1\nwindow_size: 0\n", "window_size"),
            ("seed: 1\nduration_events: 10\n", "duration_events"),
            ("seed: 1\nadaptation: maybe\n", "adaptation"),
            ("seed: 1\nlink: {phy: PHY_9M}\n", "link.phy"),
            ("seed: 1\nlink: {txp_dbm: 5}\n", "link.txp_dbm"),
            ("seed: 1\npath_loss: {distance_m: -2}\n", "path_loss"),
            ("seed: 1\npath_loss: {exponent: 9}\n", "path_loss.exponent"),
            ("seed: 1\nlink_thresholds: {rssi_high: -90}\n", "link_thresholds"),
            ("seed: 1\ninterferers: [{wifi_channel: 14, rssi_dbm: -50, duty_cycle: 0.5}]\n",
             "interferers[0].wifi_channel"),
            ("seed: 1\ninterferers: [{wifi_channel: 1, rssi_dbm: -50, duty_cycle: 1.5}]\n",
             "interferers[0].duty_cycle"),
            ("seed: 1\ninterferers: [{wifi_channel: 1, rssi_dbm: -50}]\n", "interferers[0].duty_cycle"),
            ("seed: 1\ninterferers: [{wifi_channel: 1, rssi_dbm: -50, duty_cycle: 0.1, colour: red}]\n",
             "interferers[0].colour"),
            ("seed: 1\nattacks: [{kind: DOS}]\n", "attacks[0].kind"),
            ("seed: 1\nduration_events: 100\nattacks: [{kind: REPLAY_CONTROL, trigger_event: 100}]\n",
             "attacks[0].trigger_event"),
            ("seed: -1\n", "seed"),
            ("seed: 1\nchannel_threshold: 1\n", "channel_threshold"),
        ],
    )
    def test_validation_names_field(self, tmp_path, body, field):
        with pytest.raises(ConfigError) as exc:
            scenario.load_scenario(write(tmp_path, body))
        assert exc.value.field == field
        assert str(exc.value).startswith(field)

    def test_not_a_mapping(self, tmp_path):
        with pytest.raises(ConfigError):
            scenario.load_scenario(write(tmp_path, "- 1\n- 2\n"))

    def test_bad_yaml(self, tmp_path):
        with pytest.raises(ConfigError):
            scenario.load_scenario(write(tmp_path, "seed: [1\n"))

    def test_mild_preset(self):
        cfg = scenario.load_preset("mild")
        (itf,) = cfg.interferers
        assert itf.rssi_at_receiver_dbm == -55.0
        assert itf.duty_cycle == 0.6 and itf.wifi_channel == 1
        assert len(cfg.attacks) == 4

    def test_strong_preset(self):
        (itf,) = scenario.load_preset("strong").interferers
        assert (itf.rssi_at_receiver_dbm, itf.duty_cycle) == (-25.0, 0.85)

    def test_dynamic_preset(self):
        cfg = scenario.load_preset("dynamic")
        assert [i.wifi_channel for i in cfg.interferers] == [1, 5, 10, 13]
        assert [i.active_interval[0] for i in cfg.interferers] == [0, 2500, 5000, 7500]
        assert cfg.interferers == scenario.dynamic_schedule([1, 5, 10, 13], 10_000, -55, 0.6)

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            scenario.load_preset("hurricane")

    def test_resolve(self, tmp_path):
        assert scenario.resolve_config("mild").name == "mild"
        assert scenario.resolve_config(str(write(tmp_path, "seed: 2\n"))).seed == 2


@pytest.fixture(scope="module")
def mild_run():
    return scenario.run_scenario(scenario.load_preset("mild"))


class TestRun:
    def test_summary_recomputable(self, mild_run):
        s = mild_run.summary()
        ser = mild_run.series
        assert s["pdr_total"] == np.count_nonzero(ser.success) / len(ser)
        tail = ser.pdr_latest[-2000:]
        assert s["steady_state_pdr_latest"] == pytest.approx(tail.mean() / 100, abs=1e-12)
        assert s["final_phy"] == ser.phy[-1].value
        assert s["duration_events"] == 10_000

    def test_auth_and_attacks(self, mild_run):
        s = mild_run.summary()
        assert s["auth_executed"] and s["attacks_ok"]
        assert [a["verdict"] for a in s["attacks"]] == ["rejected"] * 4
        replay = [a for a in s["attacks"] if a["kind"] == "REPLAY_CONTROL"][0]
        assert not replay["executed"]

    def test_attacks_do_not_disturb_link(self, mild_run):
        cfg = scenario.load_preset("mild").with_overrides(attacks=())
        plain = scenario.run_scenario(cfg)
        assert np.array_equal(plain.series.success, mild_run.series.success)

    def test_flipped_attack_in_config(self):
        cfg = scenario.load_preset("mild").with_overrides(
            duration_events=200,
            attacks=(AttackDescriptor(AttackKind.REPLAY_CONTROL, 50, defense_enabled=False),),
        )
        m = scenario.run_scenario(cfg)
        assert m.attacks[0].verdict == "succeeded" and m.attacks_ok

    def test_baseline_uses_fixed_link(self):
        cfg = scenario.load_preset("strong").with_overrides(adaptation=False, duration_events=1000)
        m = scenario.run_scenario(cfg)
        assert set(m.series.phy) == {PhyMode.PHY_2M}
        assert set(m.series.txp.tolist()) == {0}

    def test_time_slots(self, mild_run):
        slots = mild_run.time_slots()
        assert slots[0] == 0 and slots[49] == 0 and slots[50] == 1 and slots[-1] == 199
        assert len(mild_run.slot_pdr_total()) == 200

    def test_strong_baseline_band(self):
        cfg = scenario.load_preset("strong").with_overrides(adaptation=False)
        m = scenario.run_scenario(cfg)
        assert 0.65 <= m.steady_state_pdr_latest <= 0.85

    def test_dynamic_phases(self):
        m = scenario.run_dynamic_wifi(scenario.load_preset("dynamic"))
        assert [p["wifi_channel"] for p in m.phases] == [1, 5, 10, 13]
        p0 = m.phases[0]
        assert p0["pdr"] == np.count_nonzero(m.series.success[:2500]) / 2500

    def test_dynamic_needs_tiling(self):
        cfg = scenario.load_preset("mild").with_overrides(
            interferers=(scenario.dynamic_schedule([1, 6], 10_000, -55, 0.6)[1],))
        with pytest.raises(ConfigError):
            scenario.run_dynamic_wifi(cfg)

    def test_adaptive_never_worse(self):
        for name in scenario.PRESETS:
            a, b = scenario.compare(scenario.load_preset(name), dynamic=name == "dynamic")
            assert a.steady_state_pdr_latest >= b.steady_state_pdr_latest
            assert a.config.adaptation and not b.config.adaptation


class TestExport:
    def test_csv(self, mild_run, tmp_path):
        out = tmp_path / "m.csv"
        scenario.emit_csv(mild_run, out)
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(scenario.CSV_COLUMNS)
        assert lines[0] == ("event_index,time_slot,channel,phy,txp_dbm,rssi_dbm,success,"
                            "pdr_latest_overall,pdr_total_overall,enabled_channel_count,channel_map_hex")
        rows, summary = scenario.read_csv(out)
        assert len(rows) == 10_000
        assert rows[0]["channel_map_hex"] == "ffffffff1f"
        recount = sum(int(r["success"]) for r in rows) / len(rows)
        assert summary["pdr_total"] == pytest.approx(recount, abs=1e-12)
        assert float(rows[-1]["pdr_total_overall"]) == pytest.approx(recount, abs=1e-6)

    def test_csv_rerun_identical(self, tmp_path):
        cfg = scenario.load_preset("mild")
        scenario.emit_csv(scenario.run_scenario(cfg), tmp_path / "a.csv")
        scenario.emit_csv(scenario.run_scenario(cfg), tmp_path / "b.csv")
        h = [hashlib.sha256((tmp_path / n).read_bytes()).hexdigest() for n in ("a.csv", "b.csv")]
        assert h[0] == h[1]

    def test_python_backend_same_csv(self, mild_run, tmp_path):
        scenario.emit_csv(mild_run, tmp_path / "a.csv")
        scenario.emit_csv(scenario.run_scenario(mild_run.config, backend="python"), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_json(self, mild_run, tmp_path):
        import json

        scenario.emit_json(mild_run.summary(), tmp_path / "s.json")
        data = json.loads((tmp_path / "s.json").read_text())
        assert data == json.loads(json.dumps(mild_run.summary()))
