import json

import pytest

from mpptbench.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read(path):
    return path.read_bytes()


def test_curve_three_peaks(tmp_path, capsys):
    code, out, _ = run(capsys, "curve", "ThreePeaks", "--out", str(tmp_path))
    assert code == 0
    summary = json.loads(out)
    assert summary["local_maxima"] == 3
    assert (tmp_path / "ThreePeaks_curve.csv").exists()
    assert (tmp_path / "ThreePeaks_curve.svg").read_text().startswith("<?xml")


def test_curve_stc_peak_voltage(tmp_path, capsys):
    code, out, _ = run(capsys, "curve", "STC", "--out", str(tmp_path))
    summary = json.loads(out)
    assert code == 0 and summary["local_maxima"] == 1
    assert summary["gmpp_voltage_V"] == pytest.approx(0.650, abs=0.0065)


def test_mpp_with_temperature(capsys):
    _, hot, _ = run(capsys, "mpp", "STC", "--temperature", "75")
    _, cold, _ = run(capsys, "mpp", "STC")
    assert json.loads(hot)["voltage_V"] < json.loads(cold)["voltage_V"]


def test_unknown_scenario_exits_2(capsys):
    code, _, err = run(capsys, "curve", "Nope")
    assert code == 2
    assert "ThreePeaks" in err and "profile1" in err


def test_bad_argument_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--algorithm", "pso"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_simulate_profile1(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--scenario", "profile1", "--no-plot", "--out", str(tmp_path))
    assert code == 0
    rep = json.loads(out)
    assert rep["ss_oscillation"] < 0.01
    stem = tmp_path / "adaptive_gd_profile1_interleaved_boost_2ph"
    assert json.loads((tmp_path / (stem.name + "_metrics.json")).read_text()) == rep
    header = (tmp_path / (stem.name + "_log.csv")).read_text().splitlines()[0]
    assert header == "t_s,duty,v_pv_V,i_pv_A,p_pv_W,p_max_W,mode"
    assert not list(tmp_path.glob("*.svg"))


def test_simulate_po_is_less_efficient(tmp_path, capsys):
    etas = {}
    for algo in ("po", "adaptive_gd"):
        _, out, _ = run(capsys, "simulate", "--scenario", "STC", "--algorithm", algo, "--duration", "0.005",
                        "--no-plot", "--out", str(tmp_path))
        etas[algo] = json.loads(out)["eta_mppt"]
    assert etas["po"] < etas["adaptive_gd"]


def test_simulate_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("scenario: STC\nalgorithm: hc\nconverter: {topology: cuk}\nsim: {duration: 0.002}\n")
    code, _, _ = run(capsys, "simulate", str(cfg), "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "hc_STC_cuk_log.json").exists()
    assert (tmp_path / "hc_STC_cuk.svg").exists()


@pytest.mark.parametrize("text", ["scenario: [unclosed\n", "scenari0: STC\n", "algorithm: pso\n",
                                  "sim: {dt: 1}\n", "converter: {topology: boost, colour: red}\n"])
def test_simulate_config_errors_exit_2(tmp_path, capsys, text):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(text)
    code, _, err = run(capsys, "simulate", str(cfg), "--out", str(tmp_path))
    assert code == 2 and "error" in err


def test_simulate_missing_config_exits_2(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", str(tmp_path / "absent.yaml"))
    assert code == 2


def test_non_actuatable_converter_exits_1(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--scenario", "STC", "--converter", "resonant", "--duration", "0.001",
                     "--out", str(tmp_path))
    assert code == 1


BENCH_YAML = "algorithms: [po, adaptive_gd]\nscenarios: [STC, ThreePeaks]\nsim: {duration: 0.005}\n"


def test_bench_matrix_and_determinism(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "bench.yaml"
    cfg.write_text(BENCH_YAML)
    code, _, _ = run(capsys, "bench", str(cfg), "--workers", "2", "--out", str(tmp_path / "a"))
    assert code == 0
    monkeypatch.setenv("MPPTBENCH_THREADS", "1")
    run(capsys, "bench", str(cfg), "--out", str(tmp_path / "b"))
    for name in ("bench.csv", "bench.json", "bench_eta.svg"):
        assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)
    rows = json.loads((tmp_path / "a" / "bench.json").read_text())["rows"]
    assert len(rows) == 4
    eta = {(r["algorithm"], r["scenario"]): r["eta_pct"] for r in rows}
    assert eta[("adaptive_gd", "STC")] >= 99.5
    assert eta[("po", "STC")] < eta[("adaptive_gd", "STC")]
    assert all(not r["error"] for r in rows)


def test_bench_records_cell_errors(tmp_path, capsys):
    cfg = tmp_path / "bench.yaml"
    cfg.write_text("algorithms: [adaptive_gd]\nscenarios: [STC]\nconverters: [boost, resonant]\n"
                   "sim: {duration: 0.001}\nworkers: 1\n")
    code, out, _ = run(capsys, "bench", str(cfg), "--no-plot", "--out", str(tmp_path))
    assert code == 0 and "1 failed" in out
    rows = {r["converter"]: r for r in json.loads((tmp_path / "bench.json").read_text())["rows"]}
    assert rows["resonant"]["error"] and not rows["boost"]["error"]


def test_bench_unknown_scenario_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bench.yaml"
    cfg.write_text("scenarios: [Nowhere]\n")
    code, _, _ = run(capsys, "bench", str(cfg), "--out", str(tmp_path))
    assert code == 2


def test_cost(capsys):
    code, out, _ = run(capsys, "cost", "po", "adaptive_gd", "--paths")
    data = json.loads(out)
    assert code == 0
    assert data["po"]["worst_case_X"] < data["adaptive_gd"]["worst_case_X"]
    assert max(p["X"] for p in data["adaptive_gd"]["paths"].values()) == data["adaptive_gd"]["worst_case_X"]


def test_cost_custom_weights(tmp_path, capsys):
    w = tmp_path / "w.yaml"
    w.write_text("cost_weights: {div: 1, mul: 1}\n")
    _, cheap, _ = run(capsys, "cost", "adaptive_gd", "--weights", str(w))
    _, dflt, _ = run(capsys, "cost", "adaptive_gd")
    assert json.loads(cheap)["adaptive_gd"]["worst_case_X"] < json.loads(dflt)["adaptive_gd"]["worst_case_X"]
    w.write_text("cost_weights: {sqrt: 3}\n")
    assert run(capsys, "cost", "--weights", str(w))[0] == 2


def test_fom_audit(tmp_path, capsys):
    code, out, _ = run(capsys, "fom-audit")
    assert code == 0
    rep = json.loads(out)
    assert rep["n_rows"] == 35 and "Proposed / Proposed" in rep["flagged"]
    code, out, _ = run(capsys, "fom-audit", "--out", str(tmp_path / "audit.json"))
    assert out.startswith("32/35 rows consistent")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(capsys, "fom-audit", str(empty))[0] == 2
    assert run(capsys, "fom-audit", str(tmp_path / "absent.csv"))[0] == 2


def test_profiles(tmp_path, capsys):
    code, out, _ = run(capsys, "profiles", "list")
    assert code == 0 and out.splitlines()[0].startswith("profile1\t")
    code, out, _ = run(capsys, "profiles", "dump", "profile1")
    lines = out.splitlines()
    assert lines[0] == "quantity,t_start_s,t_end_s,kind,start_value,end_value"
    assert len(lines) > 2
    assert run(capsys, "profiles", "dump")[0] == 2
    assert run(capsys, "profiles", "dump", "profile9")[0] == 2
