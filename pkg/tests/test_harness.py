import json

import numpy as np
import pytest

from nrlimit import harness
from nrlimit.cli import main
from nrlimit.harness import ConfigError, RunConfig, compare_csv, load_config, parse_config, run, worker_count
from nrlimit.kgm import BlowupError

SMALL = {
    "grid": {"n": 16, "L": 16.0},
    "time": {"T": 0.02},
    "sweep": {"c_values": [1.0, 2.0]},
    "diagnostics": {"cadence": 2},
    "data": {"electron": {"width": 1.0}, "positron": {"amplitude": 0.5, "width": 1.0}},
}


def _small(tmp_path, **overrides):
    doc = json.loads(json.dumps(SMALL))
    doc["output"] = {"directory": str(tmp_path / "out")}
    for k, v in overrides.items():
        doc[k] = v
    return doc


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("{}")
        assert cfg == RunConfig()
        assert cfg.mode == "kgm_sweep" and cfg.dt is None
        assert cfg.c_values == (2.0, 4.0, 8.0, 16.0)
        assert cfg.dt_for(16.0) == pytest.approx(0.1 / 256)

    def test_explicit_dt(self):
        cfg = parse_config('{"time": {"T": 0.5, "dt_policy": 0.001}}')
        assert cfg.dt_for(16.0) == 0.001

    @pytest.mark.parametrize("doc,path", [
        ('{"grid": {"n": 15}}', "grid.n"),
        ('{"grid": {"m": 8}}', "grid"),
        ('{"colour": 1}', "<document>"),
        ('{"sweep": {"c_values": [4, 2]}}', "sweep.c_values"),
        ('{"sweep": {"c_values": [1, -2]}}', "sweep.c_values[1]"),
        ('{"time": {"T": 0}}', "time.T"),
        ('{"time": {"T": 0.1, "dt_policy": 0.1}, "diagnostics": {"cadence": 5}}', "diagnostics.cadence"),
        ('{"mode": "free_kg", "model": {"coupled": true}}', "model.coupled"),
        ('{"mode": "fast"}', "mode"),
        ('{"data": {"preset": "random", "electron": {}}}', "data.electron"),
        ('{"data": {"electron": {"width": -1}}}', "data.electron.width"),
        ('{"output": {"emit_plots": "yes"}}', "output.emit_plots"),
        ('{"estimates": {"kernel_mus": []}}', "estimates.kernel_mus"),
        ("{not json", "<document>"),
    ])
    def test_errors_name_the_field(self, doc, path):
        with pytest.raises(ConfigError) as info:
            parse_config(doc)
        assert str(info.value).startswith(path + ":")

    def test_not_increasing_message(self):
        with pytest.raises(ConfigError, match="c_values not increasing"):
            parse_config('{"sweep": {"c_values": [2, 2]}}')

    def test_free_mode_defaults_to_uncoupled(self):
        assert parse_config('{"mode": "free_kg"}').coupled is False

    def test_complex_amplitude(self):
        cfg = parse_config('{"data": {"electron": {"amplitude": [0.5, 0.5]}}}')
        assert cfg.data.alpha[0].amplitude == 0.5 + 0.5j

    def test_random_preset_is_seeded(self):
        a = parse_config('{"seed": 3, "data": {"preset": "random"}}')
        b = parse_config('{"seed": 3, "data": {"preset": "random"}}')
        assert a.data.fingerprint() == b.data.fingerprint()
        assert a.fingerprint() == b.fingerprint()

    def test_fingerprint_ignores_output(self):
        a = parse_config('{"output": {"directory": "x"}}')
        b = parse_config('{"output": {"directory": "y", "emit_plots": true}}')
        assert a.fingerprint() == b.fingerprint()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")


class TestWorkers:
    def test_cap(self, monkeypatch):
        monkeypatch.setenv("NRLIMIT_THREADS", "3")
        assert worker_count(8) == 3
        assert worker_count(2) == 2

    @pytest.mark.parametrize("raw", ["zero", "0", "-2"])
    def test_invalid(self, monkeypatch, raw):
        monkeypatch.setenv("NRLIMIT_THREADS", raw)
        with pytest.raises(ConfigError):
            worker_count(4)


class TestRuns:
    def test_csv_shape_and_no_plots(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NRLIMIT_THREADS", "1")
        cfg = parse_config(json.dumps(_small(tmp_path)))
        result, gates, paths = run(cfg)
        lines = paths["csv"].read_text().splitlines()
        assert lines[0].split(",")[:3] == ["run_id", "c", "t"]
        assert len(lines) - 1 == len(cfg.c_values) * (cfg.cadence + 1)
        assert not list((tmp_path / "out").glob("*.svg"))
        summary = json.loads(paths["summary"].read_text())
        assert set(summary["acceptance"]) == set(gates)
        assert "energy_conservation" in gates

    def test_plots_when_requested(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NRLIMIT_THREADS", "1")
        doc = _small(tmp_path, mode="free_kg")
        doc["output"]["emit_plots"] = True
        _, gates, paths = run(parse_config(json.dumps(doc)))
        assert paths["plot_errors"].exists() and paths["plot_energy"].exists()
        assert gates["free_stepper_exact"]["passed"]

    def test_determinism_across_worker_counts(self, tmp_path, monkeypatch):
        blobs = []
        for threads in ("1", "2", "1"):
            monkeypatch.setenv("NRLIMIT_THREADS", threads)
            doc = _small(tmp_path)
            doc["output"]["directory"] = str(tmp_path / f"out{len(blobs)}")
            _, _, paths = run(parse_config(json.dumps(doc)))
            blobs.append(paths["csv"].read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]

    def test_failure_is_isolated(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NRLIMIT_THREADS", "1")
        real = harness.run_kgm

        def flaky(state, *args, **kwargs):
            if state.c == 2.0:
                raise BlowupError("synthetic blow-up", state)
            return real(state, *args, **kwargs)

        monkeypatch.setattr(harness, "run_kgm", flaky)
        cfg = parse_config(json.dumps(_small(tmp_path, sweep={"c_values": [1.0, 2.0, 3.0]})))
        result, gates, paths = run(cfg)
        assert list(result.failures) == [2.0]
        assert "synthetic" in result.failures[2.0]
        assert result.completed() == [1.0, 3.0]
        assert not gates["all_c_completed"]["passed"]
        rows = paths["csv"].read_text().splitlines()[1:]
        assert {r.split(",")[1] for r in rows} == {"1", "3"}

    def test_sp_only(self, tmp_path):
        doc = _small(tmp_path, mode="sp_only", time={"T": 0.2}, grid={"n": 32, "L": 16.0})
        _, gates, paths = run(parse_config(json.dumps(doc)))
        assert all(g["passed"] for g in gates.values())
        assert paths["csv"].name == "sp.csv"


class TestCompare:
    def _csv(self, path, rows):
        path.write_text("\n".join(",".join(map(str, r)) for r in rows) + "\n")
        return path

    def test_identical_and_tolerant(self, tmp_path):
        a = self._csv(tmp_path / "a.csv", [["run_id", "x"], ["r", "1.0"], ["r", "2.0"]])
        b = self._csv(tmp_path / "b.csv", [["run_id", "x"], ["r", "1.0000000000001"], ["r", "2.0"]])
        assert compare_csv(a, a).ok
        assert compare_csv(a, b, rtol=1e-9).ok
        assert not compare_csv(a, b, rtol=1e-15).ok

    def test_structural(self, tmp_path):
        a = self._csv(tmp_path / "a.csv", [["run_id", "x"], ["r", "1.0"]])
        b = self._csv(tmp_path / "b.csv", [["run_id", "y"], ["r", "1.0"]])
        c = self._csv(tmp_path / "c.csv", [["run_id", "x"], ["r", "1.0"], ["r", "1.0"]])
        assert "headers" in compare_csv(a, b).structural
        assert "row counts" in compare_csv(a, c).structural

    def test_labels_must_match(self, tmp_path):
        a = self._csv(tmp_path / "a.csv", [["run_id", "x"], ["r1", "1.0"]])
        b = self._csv(tmp_path / "b.csv", [["run_id", "x"], ["r2", "1.0"]])
        assert compare_csv(a, b).mismatches == [(1, "run_id", "r1", "r2")]


class TestCli:
    def test_exit_codes(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("NRLIMIT_THREADS", "1")
        ok = _write(tmp_path, _small(tmp_path, mode="sp_only", time={"T": 0.1}, grid={"n": 32, "L": 16.0}))
        assert main(["run", str(ok)]) == 0
        assert "PASS  sp_time_reversal" in capsys.readouterr().out

        bad = tmp_path / "bad.json"
        bad.write_text('{"grid": {"n": 7}}')
        assert main(["run", str(bad)]) == 2
        assert "grid.n" in capsys.readouterr().err
        assert main(["run", str(tmp_path / "missing.json")]) == 2

        monkeypatch.setenv("NRLIMIT_THREADS", "nope")
        assert main(["run", str(ok)]) == 2

    def test_numeric_failure_exit(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NRLIMIT_THREADS", "1")
        monkeypatch.setattr(harness, "run_kgm", lambda state, *a, **k: (_ for _ in ()).throw(BlowupError("x", state)))
        cfg = _write(tmp_path, _small(tmp_path))
        assert main(["run", str(cfg)]) == 1

    def test_verify_estimates(self, tmp_path, capsys):
        doc = _small(tmp_path, estimates={
            "kernel_mus": [1.0], "kernel_t_max_exponent": 4, "commutator_samples": 1000,
            "delta_c_values": [1.0], "delta_random_samples": 500,
        })
        code = main(["verify-estimates", str(_write(tmp_path, doc))])
        out = capsys.readouterr().out
        assert code == 0, out
        assert "PASS  mestimates" in out
        assert (tmp_path / "out" / "summary.txt").exists()

    def test_compare(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        a.write_text("run_id,x\nr,1.0\n")
        b = tmp_path / "b.csv"
        b.write_text("run_id,x\nr,1.5\n")
        assert main(["compare", str(a), str(a), "--rtol", "1e-9"]) == 0
        assert main(["compare", str(a), str(b)]) == 1
        assert "MISMATCH row 1 column x" in capsys.readouterr().out
        assert main(["compare", str(a), str(tmp_path / "none.csv")]) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["launch"])
        assert info.value.code == 2
