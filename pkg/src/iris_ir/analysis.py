"""Error analysis and leaderboard tables over evaluation outcomes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cmetrics import FLAG_FEATURES, StaticMetrics, feature_flags
from .errors import EmptyInput

OUTCOME_CRITERIA = ("compile", "io")


@dataclass(frozen=True)
class FailureRecord:
    sample_id: str
    flags: dict[str, bool]
    metrics: StaticMetrics
    outcome: str  # "success" | "failure"

    @property
    def failed(self) -> bool:
        return self.outcome == "failure"

    @classmethod
    def from_result(cls, sample_id: str, metrics: StaticMetrics, result, criterion: str = "compile") -> "FailureRecord":
        """Label one candidate result; ``criterion`` picks compile or I/O success."""
        if criterion not in OUTCOME_CRITERIA:
            raise ValueError(f"unknown criterion {criterion!r}")
        ok = result.compiled if criterion == "compile" else result.io_passed
        return cls(sample_id, feature_flags(metrics), metrics, "success" if ok else "failure")


@dataclass(frozen=True)
class FeatureRate:
    feature: str
    n_present: int
    n_absent: int
    f_present: int
    f_absent: int
    fail_present_pct: float | None  # None when the side is empty
    fail_absent_pct: float | None
    delta_pp: float | None

    @property
    def defined(self) -> bool:
        return self.delta_pp is not None


def _features(records: Sequence[FailureRecord]) -> list[str]:
    names = list(FLAG_FEATURES)
    for r in records:
        for f in r.flags:
            if f not in names:
                names.append(f)
    return names


def conditional_failure_rates(records: Iterable[FailureRecord], features: Sequence[str] | None = None) -> list[FeatureRate]:
    """P(fail | feature present) and P(fail | absent) per feature.

    Features with both sides populated come first, sorted by the gap
    (present minus absent) descending; one-sided features follow with no gap.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no records")
    rates = []
    for f in features or _features(records):
        pres = [r for r in records if r.flags.get(f, False)]
        absn = [r for r in records if not r.flags.get(f, False)]
        fp = sum(r.failed for r in pres)
        fa = sum(r.failed for r in absn)
        pp = 100.0 * fp / len(pres) if pres else None
        pa = 100.0 * fa / len(absn) if absn else None
        delta = pp - pa if pp is not None and pa is not None else None
        rates.append(FeatureRate(f, len(pres), len(absn), fp, fa, pp, pa, delta))
    defined = sorted((r for r in rates if r.defined), key=lambda r: -r.delta_pp)
    return defined + [r for r in rates if not r.defined]


@dataclass(frozen=True)
class DistributionBins:
    metric: str
    edges: np.ndarray
    density_success: np.ndarray | None
    density_failure: np.ndarray | None
    n_success: int
    n_failure: int


def fd_edges(values: np.ndarray, min_bins: int = 5, max_bins: int = 1000) -> np.ndarray:
    """Freedman-Diaconis bin edges over ``values``, clamped to [min_bins, max_bins] bins."""
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.linspace(lo - 0.5, lo + 0.5, min_bins + 1)
    q75, q25 = np.percentile(values, [75, 25])
    width = 2 * (q75 - q25) / len(values) ** (1 / 3)
    n_bins = math.ceil((hi - lo) / width) if width > 0 else min_bins
    return np.linspace(lo, hi, min(max(n_bins, min_bins), max_bins) + 1)


def _metric_values(records: Sequence[FailureRecord], metric: str) -> np.ndarray:
    return np.array([float(getattr(r.metrics, metric)) for r in records])


def metric_distributions(records: Iterable[FailureRecord], metric: str, bins: int | np.ndarray | None = None) -> DistributionBins:
    """Normalized densities of ``metric`` for successes and failures on shared edges."""
    records = list(records)
    if not records:
        raise EmptyInput("no records")
    pooled = _metric_values(records, metric)
    if bins is None:
        edges = fd_edges(pooled)
    elif np.ndim(bins) == 0:
        edges = np.histogram_bin_edges(pooled, bins=int(bins))
    else:
        edges = np.asarray(bins, dtype=float)
    widths = np.diff(edges)

    def density(side: list[FailureRecord]):
        if not side:
            return None
        counts, _ = np.histogram(_metric_values(side, metric), bins=edges)
        return counts / (len(side) * widths)

    succ = [r for r in records if not r.failed]
    fail = [r for r in records if r.failed]
    return DistributionBins(metric, edges, density(succ), density(fail), len(succ), len(fail))


def threshold_summary(records: Iterable[FailureRecord], metric: str, threshold: float) -> dict[str, float | None]:
    """Success rate (percent) below and at-or-above ``threshold``; None for an empty side."""
    records = list(records)
    if not records:
        raise EmptyInput("no records")
    below = [r for r in records if getattr(r.metrics, metric) < threshold]
    above = [r for r in records if getattr(r.metrics, metric) >= threshold]

    def rate(side):
        return 100.0 * sum(not r.failed for r in side) / len(side) if side else None

    return {
        "success_rate_below": rate(below),
        "success_rate_at_or_above": rate(above),
        "n_below": len(below),
        "n_at_or_above": len(above),
    }


@dataclass(frozen=True)
class LeaderboardRow:
    model: str
    params_billions: float
    compile_rate_pct: float
    io_rate_pct: float


def leaderboard(entries: Sequence[tuple]) -> tuple[list[LeaderboardRow], list[tuple[float, float]]]:
    """Rows sorted by parameter count (largest first) and (log10 params, I/O rate) scatter points.

    Each entry is ``(model, params_billions, report)`` where ``report`` has
    ``compile_rate_pct`` and ``io_rate_pct`` attributes or keys.
    """
    if not entries:
        raise EmptyInput("no leaderboard entries")
    rows = []
    for model, params, rep in entries:
        get = rep.get if isinstance(rep, dict) else lambda k: getattr(rep, k)
        rows.append(LeaderboardRow(model, float(params), float(get("compile_rate_pct")), float(get("io_rate_pct"))))
    rows.sort(key=lambda r: -r.params_billions)  # sort is stable: ties keep input order
    scatter = [(math.log10(r.params_billions), r.io_rate_pct) for r in rows]
    return rows, scatter


# -- writers ----------------------------------------------------------------------------

RATES_HEADER = ["feature", "n_present", "n_absent", "fail_present_pct", "fail_absent_pct", "delta_pp"]
DIST_HEADER = ["bin_lo", "bin_hi", "density_success", "density_failure"]
LEADERBOARD_HEADER = ["model", "params_billions", "log10_params", "compile_rate_pct", "io_rate_pct"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def write_rates_csv(rates: Sequence[FeatureRate], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATES_HEADER)
        for r in rates:
            w.writerow([r.feature, r.n_present, r.n_absent, _fmt(r.fail_present_pct), _fmt(r.fail_absent_pct), _fmt(r.delta_pp)])


def write_distribution_csv(dist: DistributionBins, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIST_HEADER)
        for i in range(len(dist.edges) - 1):
            ds = None if dist.density_success is None else float(dist.density_success[i])
            df = None if dist.density_failure is None else float(dist.density_failure[i])
            w.writerow([_fmt(float(dist.edges[i])), _fmt(float(dist.edges[i + 1])), _fmt(ds), _fmt(df)])


def write_leaderboard_csv(rows: Sequence[LeaderboardRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEADERBOARD_HEADER)
        for r in rows:
            w.writerow([r.model, _fmt(r.params_billions), _fmt(math.log10(r.params_billions)), _fmt(r.compile_rate_pct), _fmt(r.io_rate_pct)])


def format_rates(rates: Sequence[FeatureRate]) -> str:
    def cell(v):
        return "n/a" if v is None else f"{v:.2f}"

    lines = [f"{'feature':<30} {'P(fail|1)':>10} {'P(fail|0)':>10} {'delta':>8}"]
    for r in rates:
        lines.append(f"{r.feature:<30} {cell(r.fail_present_pct):>10} {cell(r.fail_absent_pct):>10} {cell(r.delta_pp):>8}")
    return "\n".join(lines)
