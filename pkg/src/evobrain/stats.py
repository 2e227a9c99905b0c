"""Metrics and hypothesis tests over generation logs.

Variances use the unbiased (n - 1) estimator throughout.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as _sps

EXACT_SPEARMAN_MAX_N = 10


@dataclass(frozen=True)
class TestReport:
    statistic: float
    p_value: float
    method: str
    sizes: tuple[int, ...]
    ci: tuple[float, float] | None = None
    extra: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this

    def __post_init__(self):
        if not (math.isnan(self.p_value) or 0.0 <= self.p_value <= 1.0):
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        if self.ci is not None and self.ci[0] > self.ci[1]:
            raise ValueError("CI lower bound above upper bound")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        d["ci"] = list(self.ci) if self.ci is not None else None
        return d


@dataclass(frozen=True)
class SeedSeries:
    seed: int
    agreement: np.ndarray
    fitness: np.ndarray

    def __post_init__(self):
        if len(self.agreement) != len(self.fitness):
            raise ValueError("agreement and fitness series must align")

    @property
    def generations(self) -> int:
        return len(self.fitness)


def _var(x) -> float:
    return float(np.var(np.asarray(x, dtype=np.float64), ddof=1))


def _clip_p(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


# -- trajectory metrics -------------------------------------------------------

def convergence_generation(series: Sequence[float], tol: float = 0.01, window: int = 10) -> int | None:
    """First index whose ``window``-long stretch spans at most ``2 * tol``."""
    x = np.asarray(series, dtype=np.float64)
    if x.size < window:
        raise ValueError("series shorter than the window")
    for g in range(x.size - window + 1):
        w = x[g:g + window]
        if w.max() - w.min() <= 2 * tol + 1e-12:
            return g
    return None


def late_slope(series: Sequence[float], window: int = 10) -> float:
    x = np.asarray(series, dtype=np.float64)
    if x.size < window:
        raise ValueError("series shorter than the window")
    y = x[-window:]
    t = np.arange(window, dtype=np.float64)
    t -= t.mean()
    return float((t * (y - y.mean())).sum() / (t * t).sum())


def first_reaching(series: Sequence[float], threshold: float) -> int | None:
    for g, v in enumerate(series):
        if v >= threshold:
            return g
    return None


# -- rank correlation ---------------------------------------------------------

def _ranks(x) -> np.ndarray:
    return _sps.rankdata(x, method="average")


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float((a * a).sum() * (b * b).sum()))
    return float((a * b).sum() / den) if den > 0 else float("nan")


def spearman(x, y) -> TestReport:
    """Rank correlation with a two-sided p.

    Exact by enumerating all permutations of ``y``'s ranks for n <= 10,
    t approximation beyond.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if n != y.size:
        raise ValueError("x and y must have equal length")
    if n < 3:
        return TestReport(float("nan"), float("nan"), "spearman: degenerate (n < 3)", (n,))
    rx, ry = _ranks(x), _ranks(y)
    rho = _pearson(rx, ry)
    if math.isnan(rho):
        return TestReport(float("nan"), float("nan"), "spearman: degenerate (constant input)", (n,))
    if n <= EXACT_SPEARMAN_MAX_N:
        obs = abs(rho) - 1e-12
        hits = total = 0
        for perm in itertools.permutations(ry):
            total += 1
            hits += abs(_pearson(rx, np.array(perm))) >= obs
        return TestReport(rho, _clip_p(hits / total), "spearman: exact permutation", (n,))
    if abs(rho) >= 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = 2.0 * _sps.t.sf(abs(t), n - 2)
    return TestReport(rho, _clip_p(p), "spearman: t approximation", (n,))


# -- variance comparisons -----------------------------------------------------

def variance_ratio_series(on: Sequence[SeedSeries], off: Sequence[SeedSeries]):
    """Per-generation cross-seed agreement variances and their ratio (None where OFF is 0)."""
    if len(on) < 2 or len(off) < 2:
        raise ValueError("need at least two seeds per condition")
    n = min(min(s.generations for s in on), min(s.generations for s in off))
    a_on = np.array([s.agreement[:n] for s in on], dtype=np.float64)
    a_off = np.array([s.agreement[:n] for s in off], dtype=np.float64)
    var_on = a_on.var(axis=0, ddof=1)
    var_off = a_off.var(axis=0, ddof=1)
    ratio = [float(v1 / v0) if v0 > 0 else None for v1, v0 in zip(var_on, var_off)]
    return var_on, var_off, ratio


def crossover_generation(ratio: Sequence[float | None], persistence: int = 5) -> int | None:
    """First generation where ratio > 1 holds for ``persistence`` consecutive generations."""
    run = 0
    for g, r in enumerate(ratio):
        run = run + 1 if (r is not None and r > 1.0) else 0
        if run >= persistence:
            return g - persistence + 1
    return None


def variance_crossover(on: Sequence[SeedSeries], off: Sequence[SeedSeries], persistence: int = 5):
    """(ratio series, crossover generation, Spearman of ratio vs generation)."""
    var_on, var_off, ratio = variance_ratio_series(on, off)
    gens = [g for g, r in enumerate(ratio) if r is not None]
    vals = [ratio[g] for g in gens]
    rep = spearman(gens, vals)
    undefined = [g for g, r in enumerate(ratio) if r is None]
    rep = TestReport(rep.statistic, rep.p_value, rep.method, rep.sizes,
                     extra={"undefined_generations": undefined})
    return ratio, crossover_generation(ratio, persistence), rep


def permutation_variance_test(a, b, iters: int = 100_000, rng: np.random.Generator | None = None) -> TestReport:
    """One-sided test of var(a) > var(b) by label permutation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two values")
    rng = rng or np.random.default_rng(0)
    vb = _var(b)
    observed = _var(a) / vb if vb > 0 else float("inf")
    pooled = np.concatenate([a, b])
    na = a.size
    hits = 0
    for _ in range(iters):
        perm = rng.permutation(pooled)
        pb = perm[na:].var(ddof=1)
        if pb == 0:
            hits += 1
            continue
        with np.errstate(over="ignore"):
            hits += perm[:na].var(ddof=1) / pb >= observed
    p = (hits + 1) / (iters + 1)
    return TestReport(observed, _clip_p(p), "permutation: variance ratio, one-sided", (a.size, b.size))


def bootstrap_ratio_ci(a, b, iters: int = 100_000, level: float = 0.95,
                       rng: np.random.Generator | None = None) -> TestReport:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two values")
    rng = rng or np.random.default_rng(0)
    vb = _var(b)
    point = _var(a) / vb if vb > 0 else float("inf")
    ratios = []
    attempts = 0
    while len(ratios) < iters and attempts < 10 * iters:
        attempts += 1
        ra = a[rng.integers(a.size, size=a.size)]
        rb = b[rng.integers(b.size, size=b.size)]
        va, vb_ = ra.var(ddof=1), rb.var(ddof=1)
        if va == 0 or vb_ == 0:
            continue
        ratios.append(va / vb_)
    if not ratios:
        return TestReport(point, float("nan"), "bootstrap: degenerate (no usable resample)", (a.size, b.size))
    r = np.array(ratios)
    lo, hi = np.quantile(r, [(1 - level) / 2, 1 - (1 - level) / 2])
    lo, hi = float(lo), float(hi)
    if math.isfinite(point):
        lo, hi = min(lo, point), max(hi, point)
    return TestReport(point, float("nan"), f"bootstrap: percentile {level:.0%} CI", (a.size, b.size), (lo, hi),
                      {"resamples": len(ratios), "attempts": attempts})


# -- contingency and location tests ------------------------------------------

def _hypergeom_pmf(x: int, row1: int, col1: int, n: int) -> float:
    return math.comb(col1, x) * math.comb(n - col1, row1 - x) / math.comb(n, row1)


def fisher_exact(table) -> TestReport:
    """Two-sided Fisher test summing tables no more probable than the observed one."""
    (a, b), (c, d) = [[int(v) for v in row] for row in table]
    if min(a, b, c, d) < 0:
        raise ValueError("counts must be non-negative")
    n = a + b + c + d
    row1, col1 = a + b, a + c
    sizes = (a, b, c, d)
    odds = (a * d) / (b * c) if b * c else float("inf") if a * d else float("nan")
    if n == 0 or row1 in (0, n) or col1 in (0, n):
        return TestReport(odds, 1.0, "fisher: two-sided, degenerate margin", sizes)
    lo, hi = max(0, row1 + col1 - n), min(row1, col1)
    probs = {x: _hypergeom_pmf(x, row1, col1, n) for x in range(lo, hi + 1)}
    p_obs = probs[a]
    p = sum(v for v in probs.values() if v <= p_obs * (1 + 1e-7))
    return TestReport(odds, _clip_p(p), "fisher: two-sided", sizes)


def welch_t(a, b) -> TestReport:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two values")
    va, vb = _var(a) / a.size, _var(b) / b.size
    diff = float(a.mean() - b.mean())
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return TestReport(0.0, 1.0, "welch: degenerate (zero variance, equal means)", (a.size, b.size))
        return TestReport(math.copysign(math.inf, diff), 0.0, "welch: degenerate (zero variance)", (a.size, b.size))
    t = diff / math.sqrt(se2)
    # normalised form; the textbook one underflows for tiny variances
    df = 1.0 / ((va / se2) ** 2 / (a.size - 1) + (vb / se2) ** 2 / (b.size - 1))
    p = 2.0 * _sps.t.sf(abs(t), df)
    return TestReport(t, _clip_p(p), "welch: two-sided", (a.size, b.size), extra={"df": df})


def icc1(matrix) -> float:
    """One-way random-effects ICC(1); rows are groups (seeds), columns repeats."""
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("need at least a 2 x 2 matrix")
    n, k = x.shape
    grand = x.mean()
    if float(((x - grand) ** 2).sum()) == 0.0:
        return 0.0
    row_means = x.mean(axis=1)
    msb = k * float(((row_means - grand) ** 2).sum()) / (n - 1)
    msw = float(((x - row_means[:, None]) ** 2).sum()) / (n * (k - 1))
    icc = (msb - msw) / (msb + (k - 1) * msw)
    return float(min(1.0, max(-1.0, icc)))


def levene(a, b) -> TestReport:
    """Levene's test with absolute deviations from the group means."""
    groups = [np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)]
    if min(g.size for g in groups) < 2:
        raise ValueError("each group needs at least two values")
    z = [np.abs(g - g.mean()) for g in groups]
    n = sum(g.size for g in z)
    zbar = np.concatenate(z).mean()
    between = sum(g.size * (g.mean() - zbar) ** 2 for g in z)
    within = sum(((g - g.mean()) ** 2).sum() for g in z)
    sizes = tuple(g.size for g in groups)
    if within <= 1e-12 * max(1.0, between):
        return TestReport(float("nan"), float("nan"), "levene: degenerate (zero within-group spread)", sizes)
    f = (n - 2) * between / within
    p = _sps.f.sf(f, 1, n - 2)
    return TestReport(float(f), _clip_p(p), "levene: mean-centred", sizes)


def cohen_d(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    pooled = ((a.size - 1) * _var(a) + (b.size - 1) * _var(b)) / (a.size + b.size - 2)
    diff = float(a.mean() - b.mean())
    if pooled == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / math.sqrt(pooled)


# -- log handling -------------------------------------------------------------

def series_from_log(path: str | Path, seed: int | None = None) -> SeedSeries:
    from .evolution import read_log

    header, rows = read_log(path)
    elite = sorted((r for r in rows if r["is_elite"]), key=lambda r: r["gen"])
    if seed is None:
        seed = int(header.get("config", {}).get("seed", 0))
    return SeedSeries(seed, np.array([r["A"] for r in elite]), np.array([r["F"] for r in elite]))


def endpoint_summary(series: Sequence[SeedSeries]) -> dict:
    ends = [float(s.agreement[-1]) for s in series]
    return {"endpoint_agreement": ends,
            "mean": float(np.mean(ends)),
            "sd": float(np.std(ends, ddof=1)) if len(ends) > 1 else 0.0}


def trajectory_summary(s: SeedSeries, threshold: float = 0.95) -> dict:
    d = {"seed": s.seed, "first_agreement": float(s.agreement[0]), "final_agreement": float(s.agreement[-1]),
         "first_reaching": first_reaching(s.agreement, threshold)}
    if s.generations >= 10:
        d["late_slope"] = late_slope(s.fitness)
        d["convergence_generation"] = convergence_generation(s.fitness)
    return d


def crossover_report(on: Sequence[SeedSeries], off: Sequence[SeedSeries], iters: int = 10_000,
                     seed: int = 0) -> tuple[dict, list[tuple]]:
    """Report dict and plot rows (generation, var_on, var_off, ratio) for an ON/OFF comparison."""
    var_on, var_off, ratio = variance_ratio_series(on, off)
    ratio, cross, rho = variance_crossover(on, off)
    end_on = [float(s.agreement[-1]) for s in on]
    end_off = [float(s.agreement[-1]) for s in off]
    rng = np.random.default_rng(seed)
    report = {
        "variance_ratio": ratio,
        "crossover_generation": cross,
        "spearman": rho.to_dict(),
        "endpoint_on": end_on,
        "endpoint_off": end_off,
    }
    if _var(end_off) > 0 or _var(end_on) > 0:
        report["permutation"] = permutation_variance_test(end_on, end_off, iters, rng).to_dict()
        report["bootstrap"] = bootstrap_ratio_ci(end_on, end_off, iters, rng=rng).to_dict()
        report["levene"] = levene(end_on, end_off).to_dict()
        report["welch"] = welch_t(end_on, end_off).to_dict()
        report["cohen_d"] = cohen_d(end_on, end_off)
    n = min(len(s.agreement) for s in list(on) + list(off))
    tail = max(2, min(20, n))
    if n >= 2:
        report["icc_on"] = icc1([s.agreement[-tail:] for s in on])
        report["icc_off"] = icc1([s.agreement[-tail:] for s in off])
    rows = [(g, float(var_on[g]), float(var_off[g]), ratio[g]) for g in range(len(ratio))]
    return report, rows


def write_plot_csv(path: str | Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("generation", "var_on", "var_off", "ratio"))
        for g, a, b, r in rows:
            w.writerow((g, f"{a:.10g}", f"{b:.10g}", "" if r is None else f"{r:.10g}"))


def _clean(o):
    """JSON-safe copy: numpy scalars unwrapped, NaN and infinities as null."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, TestReport):
        return _clean(o.to_dict())
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, np.generic):
        o = o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return None
    return o


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(_clean(report), indent=1, sort_keys=True, allow_nan=False) + "\n")

