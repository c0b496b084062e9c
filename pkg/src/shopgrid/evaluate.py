"""Row-holdout evaluation: splits, metrics, and the model-comparison runner.

Whole non-empty regions are removed from training (a harsher protocol than
hiding single entries, since a held-out region keeps no shopping signal at
all) and the removed rows' non-zero entries form the test set. Each
experiment cell trains every requested variant on the identical split so
the comparison is paired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError
from .factorize import Hyperparams, RegularizerSpec, predict, train
from .patterns import MobilityPatternMatrix, ShoppingPatternMatrix
from .seeding import STREAM_SPLIT, STREAM_TRAIN, child_seed

DEFAULT_VARIANTS = ("MF", "CMF", "CMF+N", "CMF+I")


@dataclass(frozen=True)
class RowHoldoutSplit:
    """One train/test partition at the region-row level."""

    held_out_rows: frozenset
    train_mask: np.ndarray
    test_entries: tuple  # of (row, col, true value)


@dataclass
class MetricsReport:
    """Per (variant, fraction) metrics across repeats, plus improvements.

    ``cells[variant][fraction]`` holds dicts with per-repeat rmse/mae lists
    and their means. ``improvements[fraction]`` lists percentage gains of
    each variant over the previous one, ending with the last variant vs the
    first.
    """

    variants: tuple
    fractions: tuple
    repeats: int
    seed: int
    cells: dict = field(default_factory=dict)
    improvements: dict = field(default_factory=dict)

    def mean(self, variant: str, fraction: float, metric: str) -> float:
        return self.cells[variant][fraction][f"{metric}_mean"]

    def runs(self, variant: str, fraction: float, metric: str) -> list:
        return self.cells[variant][fraction][metric]


def split_rows(shopping: ShoppingPatternMatrix, train_fraction: float,
               seed: int) -> RowHoldoutSplit:
    """Hold out ceil((1 - fraction) * #non-empty rows) rows for testing.

    Non-empty means the row is observed and carries at least one non-zero
    value. The training mask zeroes held-out rows entirely; their non-zero
    entries become the test set.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InputError(f"train_fraction must be in (0, 1), got {train_fraction}")
    observed = shopping.mask.any(axis=1)
    nonzero = (shopping.values != 0).any(axis=1)
    candidates = np.nonzero(observed & nonzero)[0]
    if candidates.size < 2:
        raise InputError(f"need at least 2 non-empty rows, found {candidates.size}")
    k = math.ceil((1.0 - train_fraction) * candidates.size)
    rng = np.random.default_rng(seed)
    held = np.sort(rng.choice(candidates, size=k, replace=False))
    train_mask = shopping.mask.copy()
    train_mask[held] = 0.0
    entries = []
    for i in held:
        for j in np.nonzero(shopping.values[i])[0]:
            entries.append((int(i), int(j), float(shopping.values[i, j])))
    return RowHoldoutSplit(frozenset(int(i) for i in held), train_mask, tuple(entries))


def _residuals(truth, pred):
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.ndim != 1 or pred.ndim != 1:
        raise InputError("metric inputs must be 1-dimensional")
    if truth.shape != pred.shape:
        raise InputError(f"length mismatch: {truth.shape[0]} vs {pred.shape[0]}")
    if truth.size == 0:
        raise InputError("metric inputs must be non-empty")
    return truth - pred


def rmse(truth, pred) -> float:
    """Root mean squared error over paired values."""
    res = _residuals(truth, pred)
    return float(np.sqrt(np.mean(res * res)))


def mae(truth, pred) -> float:
    """Mean absolute error over paired values."""
    res = _residuals(truth, pred)
    return float(np.mean(np.abs(res)))


def improvement_pct(baseline: float, improved: float) -> float:
    """Percentage reduction of ``improved`` relative to ``baseline``."""
    if not baseline > 0:
        raise InputError(f"baseline must be positive, got {baseline}")
    return 100.0 * (baseline - improved) / baseline


def _split_shopping(shopping: ShoppingPatternMatrix, split: RowHoldoutSplit):
    return ShoppingPatternMatrix(shopping.values * split.train_mask, split.train_mask)


def run_experiment(shopping: ShoppingPatternMatrix, mobility: MobilityPatternMatrix,
                   regularizers: dict, fractions, repeats: int, h: Hyperparams,
                   seed: int, variants=DEFAULT_VARIANTS) -> MetricsReport:
    """Train every variant on shared splits and report paired metrics.

    ``regularizers`` maps variant name to its RegularizerSpec (only needed
    for variants that use one). Child seeds are derived from the master
    seed per (fraction index, repeat index), identically across variants,
    so all variants see the same split and the same factor initialization.
    Metrics are computed in the original (unscaled) units.
    """
    if repeats < 1:
        raise InputError("repeats must be >= 1")
    variants = tuple(variants)
    fractions = tuple(float(f) for f in fractions)
    report = MetricsReport(variants=variants, fractions=fractions,
                           repeats=repeats, seed=seed)
    none_reg = RegularizerSpec("none")
    for variant in variants:
        report.cells[variant] = {
            f: {"rmse": [], "mae": []} for f in fractions
        }

    for fi, fraction in enumerate(fractions):
        for rep in range(repeats):
            split = split_rows(shopping, fraction,
                               child_seed(seed, STREAM_SPLIT, fi, rep))
            train_shopping = _split_shopping(shopping, split)
            run_h = replace(h, seed=child_seed(seed, STREAM_TRAIN, fi, rep))
            truth = np.array([e[2] for e in split.test_entries])
            rows = np.array([e[0] for e in split.test_entries])
            cols = np.array([e[1] for e in split.test_entries])
            for variant in variants:
                reg = regularizers.get(variant, none_reg)
                try:
                    model, _ = train(train_shopping, mobility, reg, run_h, variant)
                except Exception as exc:
                    raise type(exc)(
                        f"{exc} [variant={variant}, fraction={fraction}, repeat={rep}]"
                    ) from exc
                pred = predict(model)[rows, cols]
                cell = report.cells[variant][fraction]
                cell["rmse"].append(rmse(truth, pred))
                cell["mae"].append(mae(truth, pred))

    for variant in variants:
        for fraction in fractions:
            cell = report.cells[variant][fraction]
            cell["rmse_mean"] = float(np.mean(cell["rmse"]))
            cell["mae_mean"] = float(np.mean(cell["mae"]))

    for fraction in fractions:
        chain = []
        for prev, cur in zip(variants, variants[1:]):
            chain.append({
                "variant": cur,
                "vs": prev,
                "rmse_pct": improvement_pct(report.mean(prev, fraction, "rmse"),
                                            report.mean(cur, fraction, "rmse")),
                "mae_pct": improvement_pct(report.mean(prev, fraction, "mae"),
                                           report.mean(cur, fraction, "mae")),
            })
        if len(variants) > 1:
            first, last = variants[0], variants[-1]
            chain.append({
                "variant": last,
                "vs": first,
                "rmse_pct": improvement_pct(report.mean(first, fraction, "rmse"),
                                            report.mean(last, fraction, "rmse")),
                "mae_pct": improvement_pct(report.mean(first, fraction, "mae"),
                                           report.mean(last, fraction, "mae")),
                "total": True,
            })
        report.improvements[fraction] = chain
    return report
