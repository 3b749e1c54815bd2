"""Aggregate per-point optima into corpus-level analysis products.

Conventions (recorded in every report): standard deviations are
population (divide by N), quartiles are Tukey hinges (halves include the
median for odd counts), box-whisker whiskers sit at the data extremes,
and degenerate points are excluded from error moments but reported as a
count.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import PointCloud
from .knn import NeighborIndex
from .optimizer import ParameterGrid, fixed_pair_errors

CONVENTIONS = {"sd": "population", "quartiles": "tukey-hinges", "whiskers": "data-extremes"}


@dataclass
class SummaryStats:
    minimum: float
    mean: float
    maximum: float
    sd: float
    count: int
    n_degenerate: int


@dataclass
class LocalABRow:
    """Fractions of non-degenerate points per decrease case.

    For each parameter the three cases are exhaustive: the value sits at
    the grid minimum, one grid step down stays evaluable, or one grid
    step down degenerates for every k.
    """

    a0: float
    a_dec: float
    not_a_dec: float
    b_eq_a: float
    b_dec: float
    not_b_dec: float
    count: int


def summary_stats(errors) -> SummaryStats:
    """Moments of the finite entropy values; +inf entries count as degenerate."""
    e = np.asarray(errors, dtype=np.float64)
    finite = e[np.isfinite(e)]
    n_deg = int(e.size - finite.size)
    if finite.size == 0:
        raise ValueError("all values are degenerate; no finite errors to summarize")
    return SummaryStats(
        minimum=float(finite.min()),
        mean=float(finite.mean()),
        maximum=float(finite.max()),
        sd=float(finite.std()),  # population
        count=int(finite.size),
        n_degenerate=n_deg,
    )


def ab_histogram(optima, grid: ParameterGrid):
    """Counts per admissible (a, b) cell, stratified by the winning k.

    Returns (cells, n_degenerate); cell counts plus the degenerate count
    add up to the number of points exactly.
    """
    if not optima:
        raise ValueError("no optima to aggregate")
    pairs = grid.admissible_pairs()
    pos = {pair: i for i, pair in enumerate(pairs)}
    cells = [
        {"a": a, "b": b, "count": 0, "k_strata": {int(k): 0 for k in grid.K}}
        for (a, b) in pairs
    ]
    n_degenerate = 0
    for opt in optima:
        if opt.all_degenerate:
            n_degenerate += 1
            continue
        cell = cells[pos[(opt.a_star, opt.b_star)]]
        cell["count"] += 1
        cell["k_strata"][opt.k_star] += 1
    return cells, n_degenerate


def k_histogram(optima, grid: ParameterGrid = None):
    """Fraction of non-degenerate points per k, plus mean and population sd."""
    ks = np.array([o.k_star for o in optima if not o.all_degenerate], dtype=np.float64)
    if ks.size == 0:
        raise ValueError("no non-degenerate points")
    domain = list(grid.K) if grid is not None else sorted(int(k) for k in set(ks))
    fractions = {int(k): float((ks == k).sum() / ks.size) for k in domain}
    return {
        "fractions": fractions,
        "mean": float(ks.mean()),
        "sd": float(ks.std()),
        "count": int(ks.size),
    }


def _prev_value(values, v):
    """Largest grid value strictly below v, or None."""
    below = [x for x in values if x < v]
    return max(below) if below else None


def local_ab_classification(optima, grid: ParameterGrid) -> LocalABRow:
    """Classify each point by whether its winning thresholds could decrease.

    A decrease means one grid step down in that parameter (the other held
    at its optimum); it counts as forbidden when the stepped-down pair
    degenerated for every k in the grid, which is exactly the sweep's
    per-pair degeneracy record.
    """
    pairs = grid.admissible_pairs()
    pos = {pair: i for i, pair in enumerate(pairs)}
    counts = {"a0": 0, "a_dec": 0, "not_a_dec": 0, "b_eq_a": 0, "b_dec": 0, "not_b_dec": 0}
    total = 0
    for opt in optima:
        if opt.all_degenerate:
            continue
        if opt.pair_all_degenerate is None:
            raise ValueError("optima lack the per-pair degeneracy record")
        total += 1
        a, b = opt.a_star, opt.b_star

        prev_a = _prev_value(grid.A, a)
        if prev_a is None:
            counts["a0"] += 1
        elif opt.pair_all_degenerate[pos[(prev_a, b)]]:
            counts["not_a_dec"] += 1
        else:
            counts["a_dec"] += 1

        prev_b = _prev_value([x for x in grid.B if x >= a], b)
        if b == a or prev_b is None:
            counts["b_eq_a"] += 1
        elif opt.pair_all_degenerate[pos[(a, prev_b)]]:
            counts["not_b_dec"] += 1
        else:
            counts["b_dec"] += 1

    if total == 0:
        raise ValueError("no non-degenerate points")
    return LocalABRow(
        a0=counts["a0"] / total,
        a_dec=counts["a_dec"] / total,
        not_a_dec=counts["not_a_dec"] / total,
        b_eq_a=counts["b_eq_a"] / total,
        b_dec=counts["b_dec"] / total,
        not_b_dec=counts["not_b_dec"] / total,
        count=total,
    )


def _tukey_hinges(sorted_vals: np.ndarray):
    n = len(sorted_vals)
    med = float(np.median(sorted_vals))
    half = (n + 1) // 2  # odd n: halves include the median
    lower = sorted_vals[:half]
    upper = sorted_vals[n - half:]
    return float(np.median(lower)), med, float(np.median(upper))


def k_sd_distribution(sds):
    """Five-number summary (whiskers at extremes, Tukey-hinge quartiles)."""
    vals = np.sort(np.asarray(sds, dtype=np.float64))
    if vals.size == 0:
        raise ValueError("no standard deviations given")
    q1, med, q3 = _tukey_hinges(vals)
    return float(vals[0]), q1, med, q3, float(vals[-1])


def summary_report(
    corpus: str,
    cloud: PointCloud,
    index: NeighborIndex,
    optima,
    grid: ParameterGrid,
    threads: int = 1,
) -> dict:
    """Assemble the machine-readable corpus summary.

    stats_optimal uses each point's winning triple; stats_equal holds the
    thresholds at (pi, pi) (equal weights) and minimizes over k only.
    """
    e_opt = np.array([o.e_star for o in optima])
    e_eq = fixed_pair_errors(cloud, index, grid.K, math.pi, math.pi, threads=threads)
    cells, n_degenerate = ab_histogram(optima, grid)
    khist = k_histogram(optima, grid)
    local = local_ab_classification(optima, grid)
    return {
        "corpus": corpus,
        "n_points": len(cloud),
        "n_degenerate": n_degenerate,
        "stats_optimal": asdict(summary_stats(e_opt)),
        "stats_equal": asdict(summary_stats(e_eq)),
        "k": {
            "mean": khist["mean"],
            "sd": khist["sd"],
            "hist": [
                {"k": k, "fraction": f} for k, f in sorted(khist["fractions"].items())
            ],
        },
        "ab_hist": [
            {
                "a": c["a"],
                "b": c["b"],
                "count": c["count"],
                "k_strata": [
                    {"k": k, "count": v} for k, v in sorted(c["k_strata"].items())
                ],
            }
            for c in cells
        ],
        "local_ab": {
            "a0": local.a0,
            "a_dec": local.a_dec,
            "not_a_dec": local.not_a_dec,
            "b_eq_a": local.b_eq_a,
            "b_dec": local.b_dec,
            "not_b_dec": local.not_b_dec,
        },
        "conventions": dict(CONVENTIONS),
    }


# ---------------------------------------------------------------------------
# optional SVG rendering (presentation only; numbers match the JSON)
# ---------------------------------------------------------------------------

def _svg_header(width, height, title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{width / 2}" y="16" text-anchor="middle" font-size="13">{title}</text>',
    ]


def write_ab_hist_svg(path, cells, title="(a*, b*) histogram"):
    """Stacked bars per (a, b) cell, one stratum per k."""
    width, height, base, top = max(640, 26 * len(cells) + 80), 360, 320, 40
    total_max = max(c["count"] for c in cells) or 1
    parts = _svg_header(width, height, title)
    x = 50
    for c in cells:
        y = base
        for k, cnt in sorted(c["k_strata"].items()):
            if cnt == 0:
                continue
            h = (base - top) * cnt / total_max
            shade = 30 + int(60 * (k % 16) / 16)
            parts.append(
                f'<rect x="{x}" y="{y - h:.2f}" width="18" height="{h:.2f}" '
                f'fill="hsl(210,60%,{shade}%)"><title>k={k}: {cnt}</title></rect>'
            )
            y -= h
        label = f"({c['a']:.2f},{c['b']:.2f})"
        parts.append(
            f'<text x="{x + 9}" y="{base + 14}" text-anchor="middle" font-size="7" '
            f'transform="rotate(45 {x + 9} {base + 14})">{label}</text>'
        )
        x += 26
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def write_k_hist_svg(path, fractions, title="k* distribution"):
    width, height, base, top = max(480, 34 * len(fractions) + 80), 300, 260, 40
    fmax = max(fractions.values()) or 1.0
    parts = _svg_header(width, height, title)
    x = 50
    for k, f in sorted(fractions.items()):
        h = (base - top) * f / fmax
        parts.append(
            f'<rect x="{x}" y="{base - h:.2f}" width="24" height="{h:.2f}" '
            f'fill="hsl(210,60%,45%)"><title>k={k}: {f:.6f}</title></rect>'
        )
        parts.append(
            f'<text x="{x + 12}" y="{base + 14}" text-anchor="middle" font-size="10">{k}</text>'
        )
        x += 34
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
