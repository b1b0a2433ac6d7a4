"""Exit codes, flag handling, and an end-to-end run through the console entry."""

import json

import pytest

from megaheat import cli, pipeline

CFG = {
    "window": [1956, 1966],
    "seed": 11,
    "metrics": ["TAVG", "TMAX"],
    "seasons": ["JJA"],
    "synth": {
        "n_pairs": 1,
        "uc_stations": 3,
        "nonuc_stations": 3,
        "end_year": 1966,
        "daily": False,
        "noise_sd_c": 0.4,
    },
}


def _cfg_file(tmp_path, extra=None):
    doc = dict(CFG)
    if extra:
        doc.update(extra)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return str(path)


class TestUsageErrors:
    def test_no_stage_is_usage_error(self, capsys):
        assert cli.main([]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_stage(self, capsys):
        assert cli.main(["frobnicate", "--out", "x"]) == 1

    def test_missing_out_flag(self):
        assert cli.main(["ingest"]) == 1

    def test_threads_must_be_positive(self, tmp_path):
        assert cli.main(["synth", "--out", str(tmp_path), "--threads", "0"]) == 1

    def test_seed_range(self, tmp_path):
        assert cli.main(["synth", "--out", str(tmp_path), "--seed", "-3"]) == 1
        assert cli.main(["synth", "--out", str(tmp_path), "--seed", str(2**64)]) == 1

    def test_config_file_missing(self, tmp_path, capsys):
        rc = cli.main(["synth", "--out", str(tmp_path), "--config", str(tmp_path / "no.json")])
        assert rc == 1
        assert "cannot read config file" in capsys.readouterr().err

    def test_config_unknown_key(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"wndow": [1956, 2015]}')
        assert cli.main(["synth", "--out", str(tmp_path), "--config", str(bad)]) == 1

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as err:
            cli.main(["--version"])
        assert err.value.code == 0
        assert "megaheat" in capsys.readouterr().out


class TestDataErrors:
    def test_ingest_without_inputs(self, tmp_path, capsys):
        assert cli.main(["ingest", "--out", str(tmp_path)]) == 2
        assert "megaheat: error" in capsys.readouterr().err

    def test_trends_before_indices(self, tmp_path):
        assert cli.main(["trends", "--out", str(tmp_path)]) == 2


class TestRuns:
    def test_synth_then_all(self, tmp_path, capsys):
        out = tmp_path / "run"
        cfg = _cfg_file(tmp_path)
        assert cli.main(["synth", "--out", str(out), "--config", cfg]) == 0
        assert cli.main(["all", "--out", str(out), "--config", cfg, "--threads", "2"]) == 0

        lines = capsys.readouterr().out.splitlines()
        assert [ln.split(":")[0] for ln in lines[-8:]] == list(pipeline.STAGE_ORDER)

        timings = json.loads((out / cli.F_TIMINGS).read_text())
        assert list(timings) == list(pipeline.STAGE_ORDER)
        assert all(t >= 0 for t in timings.values())

        manifest = json.loads((out / "report" / "manifest.json").read_text())
        assert "timings.json" not in manifest["bundle"]
        assert not (out / "report" / "timings.json").exists()

    def test_single_stage_rerun(self, tmp_path):
        out = tmp_path / "run"
        cfg = _cfg_file(tmp_path)
        assert cli.main(["synth", "--out", str(out), "--config", cfg]) == 0
        assert cli.main(["all", "--out", str(out), "--config", cfg]) == 0
        before = (out / pipeline.F_COMPARISON).read_bytes()
        assert cli.main(["compare", "--out", str(out), "--config", cfg]) == 0
        assert (out / pipeline.F_COMPARISON).read_bytes() == before
        timings = json.loads((out / cli.F_TIMINGS).read_text())
        assert list(timings) == ["compare"]

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = _cfg_file(tmp_path)
        worlds = {}
        for name, seed in (("a", "500"), ("b", "500"), ("c", "501")):
            out = tmp_path / name
            assert cli.main(["synth", "--out", str(out), "--config", cfg, "--seed", seed]) == 0
            worlds[name] = (out / "ghcnm.dat").read_bytes()
        assert worlds["a"] == worlds["b"]
        assert worlds["a"] != worlds["c"]
