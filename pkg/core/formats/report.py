"""
Report Files

report_<method>.csv: one row per seed (method, seed, f1, accuracy,
test_mse, stopped_epoch) followed by "mean" and "std" rows in the seed
column. Standard deviations are population (divide by N). Cells are
fixed-precision so identical runs give identical bytes.
"""

import csv
from pathlib import Path
from typing import Dict, List, Optional, Union

from core.errors import FormatError
from core.evaluation import format_mean_std
from core.state import REPORT_METRICS, EpochRecord, RunResult, SeedResult


REPORT_COLUMNS = ("method", "seed") + REPORT_METRICS
HISTORY_COLUMNS = ("stage", "epoch", "loss", "mse", "activity", "similarity", "val_f1", "val_mse")
SUMMARY_COLUMNS = ("method", "seeds") + REPORT_METRICS
PRECISION = 6


def _cell(value: Optional[float], digits: int = PRECISION) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def report_name(method: str) -> str:
    return f"report_{method}.csv"


def history_name(method: str, seed: int) -> str:
    return f"history_{method}_seed{seed}.csv"


def _write_rows(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_report(result: RunResult, path: Union[str, Path]) -> Path:
    rows = []
    for seed_result in result.seeds:
        rows.append([
            result.method,
            str(seed_result.seed),
            _cell(seed_result.f1),
            _cell(seed_result.accuracy),
            _cell(seed_result.test_mse),
            str(seed_result.stopped_epoch),
        ])
    aggregate = result.aggregate()
    for label, attr in (("mean", "mean"), ("std", "std")):
        rows.append([result.method, label] + [
            _cell(None if aggregate[name] is None else getattr(aggregate[name], attr))
            for name in REPORT_METRICS
        ])
    return _write_rows(Path(path), REPORT_COLUMNS, rows)


def read_report(path: Union[str, Path]) -> List[Dict[str, str]]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise FormatError(f"{path}: expected columns {', '.join(REPORT_COLUMNS)}")
        return list(reader)


def _history_rows(stage: str, history: List[EpochRecord]) -> List[List[str]]:
    return [
        [stage, str(r.epoch), _cell(r.loss), _cell(r.mse), _cell(r.activity), _cell(r.similarity),
         _cell(r.val_f1), _cell(r.val_mse)]
        for r in history
    ]


def write_history(result: SeedResult, path: Union[str, Path]) -> Path:
    """Per-epoch training history; the two-step method lists its regression stage first."""
    rows = _history_rows("regression", result.regression_history) + _history_rows("train", result.history)
    return _write_rows(Path(path), HISTORY_COLUMNS, rows)


def summarize_reports(out_dir: Union[str, Path], digits: int = 4) -> Path:
    """
    Collect every report_*.csv under out_dir into summary.csv with
    "mean ± std" cells, one row per method.
    """
    out_dir = Path(out_dir)
    reports = sorted(out_dir.glob("report_*.csv"))
    if not reports:
        raise FormatError(f"no report_*.csv files under {out_dir}")
    rows = []
    for report in reports:
        records = read_report(report)
        by_seed = {r["seed"]: r for r in records}
        if "mean" not in by_seed or "std" not in by_seed:
            raise FormatError(f"{report}: missing mean/std rows")
        seeds = len(records) - 2
        cells = []
        for name in REPORT_METRICS:
            mean, std = by_seed["mean"][name], by_seed["std"][name]
            cells.append(format_mean_std(float(mean), float(std), digits) if mean and std else "")
        rows.append([records[0]["method"], str(seeds)] + cells)
    return _write_rows(out_dir / "summary.csv", SUMMARY_COLUMNS, rows)
