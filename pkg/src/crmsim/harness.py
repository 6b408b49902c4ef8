"""Run a scenario over every (variant, sweep point, seed) and aggregate."""

from __future__ import annotations

import csv
import os
import statistics
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .config import ScenarioConfig
from .metrics import MetricsReport
from .simulator import run

SCHEMA_VERSION = 1
WORKERS_ENV = "CRMSIM_WORKERS"

SUMMARY_COLUMNS = ["scenario", "variant", "sweep_value", "seed_count", "throughput_mean", "throughput_std",
                   "delay_mean_us", "delay_std_us", "energy_mean_mJ", "energy_std_mJ", "collisions", "drops"]
RAW_COLUMNS = ["scenario", "variant", "sweep_value", "seed", "throughput", "delay_us", "energy_mJ",
               "collisions", "drops", "reservation_utilization", "trace_hash", "error"]


@dataclass
class RunResult:
    variant: str
    point: dict
    seed: int
    report: MetricsReport | None = None
    error: str | None = None
    trace_lines: list[str] | None = None


@dataclass
class CellSummary:
    """Mean and sample standard deviation over the seeds of one cell."""

    scenario: str
    variant: str
    sweep_value: str
    seed_count: int
    throughput_mean: float
    throughput_std: float
    delay_mean_us: float | None
    delay_std_us: float | None
    energy_mean_mJ: float
    energy_std_mJ: float
    collisions: float
    drops: float
    errors: int = 0

    def row(self) -> dict:
        return {c: getattr(self, c) for c in SUMMARY_COLUMNS}


@dataclass
class MatrixResult:
    config: ScenarioConfig
    results: list[RunResult] = field(default_factory=list)

    @property
    def errors(self) -> list[RunResult]:
        return [r for r in self.results if r.error is not None]

    def cells(self) -> list[CellSummary]:
        groups: dict[tuple[str, str], list[RunResult]] = {}
        for r in self.results:
            groups.setdefault((r.variant, point_label(r.point)), []).append(r)
        out = []
        for (variant, label), rows in groups.items():
            ok = [r.report for r in rows if r.report is not None]
            thr = [m.end_to_end_throughput_bits_per_s for m in ok]
            delay = [m.mean_end_to_end_delay_us for m in ok if m.mean_end_to_end_delay_us is not None]
            energy = [m.mean_energy_mJ for m in ok]
            out.append(CellSummary(
                self.config.name, variant, label, len(ok),
                _mean(thr), _std(thr),
                _mean(delay) if delay else None, _std(delay) if delay else None,
                _mean(energy), _std(energy),
                _mean([m.collisions for m in ok]), _mean([m.total_drops for m in ok]),
                errors=len(rows) - len(ok),
            ))
        return out

    def cell(self, variant: str, point: dict | None = None) -> CellSummary:
        label = point_label(point or {})
        for c in self.cells():
            if c.variant == variant and c.sweep_value == label:
                return c
        raise KeyError((variant, label))

    def reports(self, variant: str, point: dict | None = None) -> list[MetricsReport]:
        label = point_label(point or {})
        return [r.report for r in self.results
                if r.variant == variant and point_label(r.point) == label and r.report is not None]


def _mean(xs) -> float:
    return statistics.fmean(xs) if xs else 0.0


def _std(xs) -> float:
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def point_label(point: dict) -> str:
    return ";".join(f"{k}={point[k]}" for k in sorted(point))


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _one(cfg: ScenarioConfig, variant: str, point: dict, seed: int, keep_trace: bool) -> RunResult:
    try:
        spec = cfg.at_point(point).build(seed, variant)
        report, trace = run(spec, seed, trace=keep_trace)
        return RunResult(variant, point, seed, report, None, list(trace.lines()) if keep_trace else None)
    except Exception as exc:  # a failing cell must not take the matrix down
        detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return RunResult(variant, point, seed, None, detail)


def run_matrix(cfg: ScenarioConfig, workers: int | None = None, keep_trace: bool = False,
               progress=None) -> MatrixResult:
    """Execute every combination; results come back in a fixed order whatever the worker count."""
    jobs = [(v, p, s) for p in cfg.sweep_points() for v in cfg.variants for s in cfg.seeds]
    workers = worker_count() if workers is None else workers
    result = MatrixResult(cfg)
    if workers <= 1 or len(jobs) == 1:
        for v, p, s in jobs:
            r = _one(cfg, v, p, s, keep_trace)
            result.results.append(r)
            if progress:
                progress(r)
        return result
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        futures = [pool.submit(_one, cfg, v, p, s, keep_trace) for v, p, s in jobs]
        for (v, p, s), fut in zip(jobs, futures):
            try:
                r = fut.result()
            except Exception as exc:  # worker process died
                r = RunResult(v, p, s, None, f"{type(exc).__name__}: {exc}")
            result.results.append(r)
            if progress:
                progress(r)
    return result


def best_points(matrix: MatrixResult, variant: str, key: str = "throughput") -> CellSummary:
    """Best sweep point for one variant: highest throughput or lowest delay."""
    cells = [c for c in matrix.cells() if c.variant == variant and c.seed_count]
    if not cells:
        raise KeyError(variant)
    if key == "throughput":
        return max(cells, key=lambda c: c.throughput_mean)
    if key == "delay":
        return min(cells, key=lambda c: float("inf") if c.delay_mean_us is None else c.delay_mean_us)
    raise ValueError(f"unknown selection key {key!r}")


def write_csv(matrix: MatrixResult, out_dir) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, f"summary_v{SCHEMA_VERSION}.csv")
    raw_path = os.path.join(out_dir, f"runs_v{SCHEMA_VERSION}.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS)
        w.writeheader()
        for c in matrix.cells():
            w.writerow(c.row())
    with open(raw_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, RAW_COLUMNS)
        w.writeheader()
        for r in matrix.results:
            m = r.report
            w.writerow({
                "scenario": matrix.config.name, "variant": r.variant, "sweep_value": point_label(r.point),
                "seed": r.seed,
                "throughput": m.end_to_end_throughput_bits_per_s if m else "",
                "delay_us": m.mean_end_to_end_delay_us if m and m.mean_end_to_end_delay_us is not None else "",
                "energy_mJ": m.mean_energy_mJ if m else "",
                "collisions": m.collisions if m else "",
                "drops": m.total_drops if m else "",
                "reservation_utilization": m.reservation_utilization if m and m.reservation_utilization is not None
                else "",
                "trace_hash": m.trace_hash if m else "",
                "error": r.error or "",
            })
    return summary_path, raw_path


def write_traces(matrix: MatrixResult, out_dir) -> list[str]:
    paths = []
    os.makedirs(out_dir, exist_ok=True)
    for r in matrix.results:
        if r.trace_lines is None:
            continue
        label = point_label(r.point).replace(";", "_").replace("=", "-") or "base"
        path = os.path.join(out_dir, f"trace_{r.variant}_{label}_seed{r.seed}.ndjson")
        with open(path, "w", encoding="utf-8") as fh:
            for line in r.trace_lines:
                fh.write(line + "\n")
        paths.append(path)
    return paths


def format_summary(matrix: MatrixResult) -> str:
    """Plain-text comparison of the variants at each sweep point."""
    cells = matrix.cells()
    lines = [f"scenario {matrix.config.name}"]
    header = f"  {'variant':<20}{'seeds':>6}{'throughput Mb/s':>18}{'delay ms':>14}{'energy mJ':>12}{'drops':>9}"
    for label in dict.fromkeys(c.sweep_value for c in cells):
        lines.append(f"sweep point: {label or '(none)'}")
        lines.append(header)
        for c in cells:
            if c.sweep_value != label:
                continue
            delay = "n/a" if c.delay_mean_us is None else f"{c.delay_mean_us / 1000:.2f}"
            lines.append(f"  {c.variant:<20}{c.seed_count:>6}{c.throughput_mean / 1e6:>18.3f}{delay:>14}"
                         f"{c.energy_mean_mJ:>12.2f}{c.drops:>9.1f}" + (f"  ({c.errors} failed)" if c.errors else ""))
    if len({c.sweep_value for c in cells}) > 1:
        lines.append("best point per variant (throughput):")
        for v in matrix.config.variants:
            try:
                b = best_points(matrix, v)
            except KeyError:
                continue
            lines.append(f"  {v:<20}{b.sweep_value}")
    return "\n".join(lines)


def progress_printer(stream=sys.stderr):
    def _print(r: RunResult) -> None:
        status = "error: " + r.error if r.error else "ok"
        stream.write(f"[{r.variant} {point_label(r.point) or '-'} seed {r.seed}] {status}\n")
    return _print
