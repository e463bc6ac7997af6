import csv
import json

import numpy as np
import pytest

import netsir.scenarios as sc
from netsir import config as cfgmod
from netsir.cli import main
from netsir.errors import ConfigurationError, NetsirError
from netsir.games import fixture_path

SMALL = {
    "topology": "block",
    "graph": {"n": 80, "n_connect": 10},
    "epidemic": {"init_infected": 5, "steps": 150},
    "control": {"vacc_total": 40},
}


def data_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


class TestConfig:
    def test_empty_file(self, tmp_path, capsys):
        p = tmp_path / "empty.json"
        p.write_text("")
        with pytest.raises(ConfigurationError, match="missing required key: topology"):
            cfgmod.load_config(p)
        assert main(["simulate", "--config", str(p)]) == 2
        assert "missing required key: topology" in capsys.readouterr().err

    def test_unknown_key_named(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"topology": "hom", "graph": {"nn": 3}}))
        with pytest.raises(ConfigurationError, match="graph.nn"):
            cfgmod.load_config(p)

    def test_minimal_resolves_to_defaults(self, tmp_path):
        p = tmp_path / "min.json"
        p.write_text('{"topology": "hom"}')
        cfg = cfgmod.load_config(p)
        topo = cfg.topology_config()
        assert (topo.n, topo.n_connect, topo.skew) == (1000, 50, 0.5)
        assert cfg.epidemic.beta_avg == 0.08 and cfg.n_iter == 50

    def test_desk_scale(self):
        cfg = cfgmod.apply_overrides(cfgmod.default_config("hom"), desk_scale=True)
        assert cfg.n_iter == 10 and cfg.tolerances["infection_load"] == 0.03
        assert cfg.to_dict()["tolerances"]["infection_load"] == 0.03

    def test_seed_precedence(self, monkeypatch):
        cfg = cfgmod.default_config("hom")
        monkeypatch.delenv(cfgmod.SEED_ENV, raising=False)
        assert cfgmod.resolve_seed(cfg, None).seed == 0
        monkeypatch.setenv(cfgmod.SEED_ENV, "17")
        assert cfgmod.resolve_seed(cfg, None).seed == 17
        assert cfgmod.resolve_seed(cfgmod.apply_overrides(cfg, seed=3), None).seed == 3
        assert cfgmod.resolve_seed(cfg, 9).seed == 9

    def test_fingerprint_ignores_output_location(self):
        a = cfgmod.default_config("hom")
        b = cfgmod.apply_overrides(a, out="elsewhere", threads=4)
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != cfgmod.default_config("block").fingerprint()

    def test_schema_lists_sections(self):
        schema = cfgmod.config_schema()
        assert schema["required"] == ["topology"]
        assert {"graph", "epidemic", "control", "game"} <= set(schema["properties"])


def test_generate_graph(small_config, tmp_path):
    out = tmp_path / "g"
    assert main(["generate-graph", "--config", str(small_config), "--out", str(out)]) == 0
    for name in ("edges.csv", "labels.csv", "degree_histogram.csv", "graph_stats.json", "config.json"):
        assert (out / name).exists()
    fp = cfgmod.from_dict(json.loads((out / "config.json").read_text())).fingerprint()
    for name in ("edges.csv", "labels.csv", "degree_histogram.csv"):
        assert f"fingerprint={fp}" in (out / name).read_text().splitlines()[1]
    edges = np.array(data_rows(out / "edges.csv")[1:], dtype=int)
    assert edges.shape[1] == 2 and np.all(edges < 80)
    hist = np.array(data_rows(out / "degree_histogram.csv")[1:], dtype=int)
    assert hist[:, 1].sum() == 80


def test_simulate_outputs(small_config, tmp_path):
    out = tmp_path / "s"
    rc = main(["simulate", "--config", str(small_config), "--out", str(out), "--n-iter", "2",
               "--strategies", "Conf,ConfVacc", "--seed", "4"])
    assert rc == 0
    rows = data_rows(out / "metrics.csv")
    assert rows[0][:3] == ["replication", "seed", "infection_load"] and len(rows) == 3
    assert sorted(p.name for p in (out / "records").iterdir()) == ["rep_000.json", "rep_001.json"]
    rec = json.loads((out / "records" / "rep_000.json").read_text())
    assert rec["config_fingerprint"] and "wall_clock" in rec and rec["conservation"] <= 0.03
    assert (out / "trajectory.csv").exists() and json.loads((out / "events.json").read_text())


def test_experiment1_table_and_rerun(small_config, tmp_path):
    args = ["experiment1", "--config", str(small_config), "--desk-scale", "--n-iter", "1"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    rows = data_rows(a / "experiment1.csv")
    assert rows[0] == ["timing", "No", "Conf", "Vacc", "ConfVacc"]
    assert [r[0] for r in rows[1:]] == ["Early", "Mid", "Late"]
    summary = json.loads((a / "experiment1_summary.json").read_text())
    assert summary["tolerances"]["infection_load"] == 0.03
    for name in ("experiment1.csv", "experiment1_sd.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_env_seed_fallback(small_config, tmp_path, monkeypatch):
    monkeypatch.setenv("NETSIR_SEED", "31")
    out = tmp_path / "e"
    assert main(["simulate", "--config", str(small_config), "--out", str(out), "--n-iter", "1"]) == 0
    assert json.loads((out / "config.json").read_text())["seed"] == 31


def test_payoff_small(small_config, tmp_path):
    out = tmp_path / "p"
    assert main(["payoff", "--config", str(small_config), "--out", str(out), "--n-iter", "1"]) == 0
    values, strategies, meta = sc.read_bimatrix_csv(out / "payoff_block.csv")
    assert values.shape == (4, 4, 2) and np.all(values[0, 0] == 0)
    assert len(meta["baseline"]) == 2
    info = json.loads((out / "baseline_block.json").read_text())
    assert {"nash", "interaction_cooperative", "interaction_unilateral"} <= set(info)
    # the written matrix feeds straight into the game commands
    assert main(["nash", "--payoff", str(out / "payoff_block.csv"), "--intensities", "3,3"]) == 0


def test_nash_on_reference_tables(capsys, tmp_path):
    path = str(fixture_path("compounded"))
    assert main(["nash", "--payoff", path, "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.split()
    assert printed == ["Conf,ConfVacc", "ConfVacc,Conf"]
    assert data_rows(tmp_path / "nash.csv")[1:] == [["Conf", "ConfVacc"], ["ConfVacc", "Conf"]]
    hom = str(fixture_path("homogeneous"))
    assert main(["nash", "--payoff", hom, "--intensities", "3,3", "--objective", "11"]) == 0
    assert capsys.readouterr().out.split() == ["Conf,ConfVacc", "ConfVacc,Conf"]
    # compounding a table without a baseline line is a configuration error
    assert main(["nash", "--payoff", path, "--intensities", "3,3"]) == 2


def test_sweep_on_reference_tables(tmp_path):
    out = tmp_path / "sw"
    rc = main(["sweep", "--hom", str(fixture_path("homogeneous")),
               "--block", str(fixture_path("block")), "--intensities", "3-7", "--out", str(out)])
    assert rc == 0
    rows = data_rows(out / "nash_map.csv")
    assert rows[0] == ["topology", "objective", "I0", "I1", "cell_row", "cell_col"]
    block12 = {tuple(r[4:]) for r in rows[1:] if r[0] == "block" and r[1] == "12"}
    assert block12 == {("ConfVacc", "ConfVacc")}
    ranges = data_rows(out / "nash_ranges.csv")
    assert ["block", "12", "ConfVacc", "ConfVacc", "3-7", "3-7"] in ranges
    assert main(["sweep", "--out", str(out)]) == 2


def test_failure_exit_code_keeps_partial_records(small_config, tmp_path, monkeypatch, capsys):
    real = sc.run_cell
    calls = {"n": 0}

    def flaky(rep, *a, **kw):
        calls["n"] += 1
        if calls["n"] == 2:
            raise NetsirError("injected failure")
        return real(rep, *a, **kw)

    monkeypatch.setattr(sc, "run_cell", flaky)
    out = tmp_path / "f"
    rc = main(["simulate", "--config", str(small_config), "--out", str(out), "--n-iter", "3"])
    assert rc == 1
    err = capsys.readouterr().err
    assert "seed" in err and "partial records kept" in err
    assert len(list((out / "records").iterdir())) == 2
