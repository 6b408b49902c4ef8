import csv
import statistics

import pytest

from crmsim import cli, harness
from crmsim.config import parse_config
from crmsim.harness import RAW_COLUMNS, SUMMARY_COLUMNS, MatrixResult, best_points, run_matrix, write_csv

TINY = """
name: tiny
topology: {kind: short_hop, n_per_region: 2}
duration_s: 0.05
seeds: [0, 1]
"""


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_matrix_counts():
    cfg = parse_config("""
topology: {kind: short_hop, n_per_region: 2}
duration_s: 0.02
seeds: [0, 1, 2, 3, 4]
sweep: {th_res: [0.4, 0.6, 0.8, 1.0]}
""")
    m = run_matrix(cfg, workers=1)
    assert len(m.results) == 60
    assert len(m.cells()) == 12
    assert not m.errors


def test_single_cell_matrix():
    cfg = parse_config(TINY.replace("seeds: [0, 1]", "seeds: [0]") + "variant: ftkn_crm\n")
    m = run_matrix(cfg, workers=1)
    assert len(m.results) == 1 and len(m.cells()) == 1


def test_one_failed_run_is_recorded_without_aborting(monkeypatch):
    real = harness.run

    def flaky(spec, seed, trace=False):
        if seed == 1 and spec.variant == "fixed_reservation":
            raise RuntimeError("boom")
        return real(spec, seed, trace)

    monkeypatch.setattr(harness, "run", flaky)
    m = run_matrix(parse_config(TINY), workers=1)
    assert len(m.results) == 6
    assert [(r.variant, r.seed) for r in m.errors] == [("fixed_reservation", 1)]
    assert "boom" in m.errors[0].error
    cell = m.cell("fixed_reservation")
    assert cell.seed_count == 1 and cell.errors == 1


def test_parallel_matches_serial():
    cfg = parse_config(TINY)
    a = run_matrix(cfg, workers=1)
    b = run_matrix(cfg, workers=2)
    assert [(r.variant, r.seed, r.report.trace_hash) for r in a.results] == \
           [(r.variant, r.seed, r.report.trace_hash) for r in b.results]


def test_worker_env(monkeypatch):
    monkeypatch.setenv(harness.WORKERS_ENV, "3")
    assert harness.worker_count() == 3
    monkeypatch.setenv(harness.WORKERS_ENV, "many")
    with pytest.raises(ValueError):
        harness.worker_count()


def test_empty_results_give_header_only_csv(tmp_path):
    summary, raw = write_csv(MatrixResult(parse_config(TINY)), tmp_path)
    assert open(summary).read().strip() == ",".join(SUMMARY_COLUMNS)
    assert open(raw).read().strip() == ",".join(RAW_COLUMNS)


def test_summary_means_recompute_from_raw_rows(tmp_path):
    m = run_matrix(parse_config(TINY), workers=1)
    summary, raw = write_csv(m, tmp_path)
    rows = read_csv(raw)
    assert len(rows) == 6
    for cell in read_csv(summary):
        mine = [r for r in rows if r["variant"] == cell["variant"] and r["sweep_value"] == cell["sweep_value"]]
        thr = [float(r["throughput"]) for r in mine]
        energy = [float(r["energy_mJ"]) for r in mine]
        assert int(cell["seed_count"]) == len(mine)
        assert float(cell["throughput_mean"]) == pytest.approx(statistics.fmean(thr), rel=1e-12)
        assert float(cell["throughput_std"]) == pytest.approx(statistics.stdev(thr), rel=1e-9, abs=1e-9)
        assert float(cell["energy_mean_mJ"]) == pytest.approx(statistics.fmean(energy), rel=1e-12)
        assert "," not in cell["throughput_mean"]


def test_best_point_selection():
    cfg = parse_config(TINY + "variant: fixed_reservation\nsweep: {fixed_offset: [2000, 64000]}\n")
    m = run_matrix(cfg, workers=1)
    best = best_points(m, "fixed_reservation")
    assert best.throughput_mean == max(c.throughput_mean for c in m.cells())
    with pytest.raises(ValueError):
        best_points(m, "fixed_reservation", key="energy")


def test_cli_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(TINY)
    out = tmp_path / "out"
    code = cli.main(["simulate", str(cfg), "--seeds", "1", "--variant", "baseline_csma,ftkn_crm",
                     "--sweep", "th_res=0.5,0.8", "--out", str(out), "--trace", "--quiet"])
    assert code == 0
    rows = read_csv(out / "summary_v1.csv")
    assert len(rows) == 4
    assert {r["sweep_value"] for r in rows} == {"params.th_res=0.5", "params.th_res=0.8"}
    assert len(list(out.glob("trace_*.ndjson"))) == 4
    assert "scenario tiny" in capsys.readouterr().out


def test_cli_validation_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("topology: {kind: chain}\nparams: {th_res: 0}\n")
    assert cli.main(["simulate", str(cfg)]) == 2
    assert "params.th_res" in capsys.readouterr().err
    assert cli.main(["simulate", str(tmp_path / "missing.yaml")]) == 2
    cfg.write_text("topology: [\n")
    assert cli.main(["simulate", str(cfg)]) == 2


def test_cli_nonzero_when_a_run_fails(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.WORKERS_ENV, "1")
    monkeypatch.setattr(harness, "run", lambda spec, seed, trace=False: 1 / 0)
    cfg = tmp_path / "s.yaml"
    cfg.write_text(TINY)
    assert cli.main(["simulate", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 1
    rows = read_csv(tmp_path / "o" / "runs_v1.csv")
    assert all("ZeroDivisionError" in r["error"] for r in rows)


def test_sweep_argument_parsing():
    assert cli.parse_sweep("fixed_offset=8000,16000") == ("fixed_offset", [8000, 16000])
    assert cli.parse_sweep("th_res=0.5") == ("th_res", [0.5])
    with pytest.raises(Exception):
        cli.parse_sweep("th_res")
