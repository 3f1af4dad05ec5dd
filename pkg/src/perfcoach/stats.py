"""Rank statistics for comparing rating samples.

The two-sided Mann-Whitney test switches between an exact
distribution (small tie-free samples) and a tie-corrected normal
approximation with continuity correction. Multiple comparisons over the
same question are adjusted with Holm's step-down procedure.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import InvalidInput

EXACT_LIMIT = 16


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..N with ties sharing the average of their rank block."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


@lru_cache(maxsize=None)
def _exact_ways(m: int, n: int, u: int) -> int:
    """Number of rank arrangements of m-vs-n samples with statistic u."""
    if u < 0:
        return 0
    if m == 0 or n == 0:
        return 1 if u == 0 else 0
    return _exact_ways(m - 1, n, u - n) + _exact_ways(m, n - 1, u)


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Two-sided Mann-Whitney test.

    Returns (U_a, p). Exact p when both samples are tie-free and small;
    otherwise a tie-corrected normal approximation with continuity
    correction. A completely degenerate pooled sample gives p = 1.
    """
    a = np.asarray(list(a), dtype=np.float64)
    b = np.asarray(list(b), dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InvalidInput("both samples must be non-empty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInput("samples must be finite")
    n_a, n_b = len(a), len(b)
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    r_a = float(ranks[:n_a].sum())
    u_a = r_a - n_a * (n_a + 1) / 2

    has_ties = len(np.unique(pooled)) < len(pooled)
    if not has_ties and n_a + n_b <= EXACT_LIMIT:
        total = math.comb(n_a + n_b, n_a)
        u_int = int(round(u_a))
        below = sum(_exact_ways(n_a, n_b, k) for k in range(u_int + 1))
        above = sum(_exact_ways(n_a, n_b, k) for k in range(u_int, n_a * n_b + 1))
        p = min(1.0, 2 * min(below / total, above / total))
        return u_a, p

    mu = n_a * n_b / 2
    n = n_a + n_b
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts))
    sigma_sq = n_a * n_b / 12 * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma_sq <= 0:
        return u_a, 1.0
    z = max(0.0, abs(u_a - mu) - 0.5) / math.sqrt(sigma_sq)
    return u_a, math.erfc(z / math.sqrt(2))


def holm(p_values) -> list[float]:
    """Step-down adjusted p-values, returned in the input order."""
    p_values = [float(p) for p in p_values]
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise InvalidInput(f"p-value {p} outside [0, 1]")
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p_values[idx]))
        adjusted[idx] = running
    return adjusted


# -- subjective study summaries ----------------------------------------------------------

_REQUIRED_KEYS = ("participant", "category", "dataset_group", "model", "rating")


def summarize_subjective(records, scale: tuple[int, int] = (1, 4)) -> dict:
    """Aggregate study ratings and compare models within each category.

    Cells are (category, dataset_group, model) with mean and standard
    error (None below two ratings). Each model pair is tested per
    dataset group; the Holm family for adjustment is all dataset groups
    of one (category, model pair).
    """
    records = list(records)
    if not records:
        raise InvalidInput("no ratings to summarize")
    lo, hi = scale
    cells: dict[tuple, list[float]] = {}
    for rec in records:
        for key in _REQUIRED_KEYS:
            if key not in rec:
                raise InvalidInput(f"rating record missing {key!r}")
        rating = float(rec["rating"])
        if not lo <= rating <= hi:
            raise InvalidInput(f"rating {rating} outside scale {lo}..{hi}")
        cells.setdefault((rec["category"], rec["dataset_group"], rec["model"]), []).append(rating)

    cell_rows = []
    for (category, group, model) in sorted(cells):
        values = cells[(category, group, model)]
        sem = None
        if len(values) >= 2:
            sem = float(np.std(values, ddof=1) / math.sqrt(len(values)))
        cell_rows.append(
            {
                "category": category,
                "dataset_group": group,
                "model": model,
                "n": len(values),
                "mean": float(np.mean(values)),
                "sem": sem,
            }
        )

    comparisons = []
    categories = sorted({c for c, _, _ in cells})
    for category in categories:
        models = sorted({m for c, _, m in cells if c == category})
        groups = sorted({g for c, g, _ in cells if c == category})
        for i, model_a in enumerate(models):
            for model_b in models[i + 1 :]:
                family = []
                for group in groups:
                    sample_a = cells.get((category, group, model_a))
                    sample_b = cells.get((category, group, model_b))
                    if not sample_a or not sample_b:
                        continue
                    u, p = mann_whitney_u(sample_a, sample_b)
                    family.append(
                        {
                            "category": category,
                            "model_a": model_a,
                            "model_b": model_b,
                            "dataset_group": group,
                            "u": u,
                            "p": p,
                        }
                    )
                adjusted = holm([row["p"] for row in family])
                for row, p_holm in zip(family, adjusted):
                    row["p_holm"] = p_holm
                comparisons.extend(family)

    return {"cells": cell_rows, "comparisons": comparisons}
