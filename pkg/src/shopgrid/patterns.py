"""Pattern extraction: count matrices, NMF, and region-level aggregation.

Raw event logs (browsing records keyed by cell tower, check-ins keyed by
user) are aggregated into nonnegative count matrices, factorized with NMF
into pattern bases and per-entity coefficients, and the coefficients are
then rolled up to the region level:

* shopping side: tower coefficients summed per region, with an observation
  mask marking regions that have at least one tower;
* mobility side: user coefficients averaged into regions weighted by each
  user's share of check-in activity there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError
from .grid import GeoPoint, RegionGrid, region_of

_DENOM_EPS = 1e-12


@dataclass(frozen=True)
class BrowsingRecord:
    """One product-page visit: the serving cell tower and a category id."""

    location_id: str
    product_category_id: int


@dataclass(frozen=True)
class CheckinRecord:
    """One check-in: user, POI category, position, epoch seconds."""

    user_id: str
    poi_category_id: int
    point: GeoPoint
    timestamp: float


@dataclass(frozen=True)
class CountMatrix:
    """Entities x categories nonnegative integer counts.

    Rows follow first-appearance order of the entities; all-zero rows are
    dropped at construction.
    """

    row_keys: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InputError("count matrix must be 2-dimensional")
        if len(self.row_keys) != values.shape[0]:
            raise InputError("row_keys length does not match value rows")
        if values.size and values.min() < 0:
            raise InputError("count matrix entries must be non-negative")
        keep = values.sum(axis=1) > 0
        if not keep.all():
            object.__setattr__(self, "row_keys", tuple(k for k, f in zip(self.row_keys, keep) if f))
            values = values[keep]
        object.__setattr__(self, "values", np.ascontiguousarray(values))


@dataclass(frozen=True)
class ActivityShareMatrix:
    """Users x regions shares of in-grid check-in activity; rows sum to 1."""

    user_ids: tuple
    values: np.ndarray


@dataclass(frozen=True)
class ShoppingPatternMatrix:
    """Region shopping-pattern weights with an observation mask.

    ``values`` is r x n, zero wherever ``mask`` is zero. The mask is
    row-constant in everything this package produces (a region is observed
    or not as a whole), though per-entry masks are accepted on input.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        mask = np.ascontiguousarray(np.asarray(self.mask, dtype=np.float64))
        if values.shape != mask.shape or values.ndim != 2:
            raise InputError("values and mask must be identical 2-d shapes")
        if not np.isin(mask, (0.0, 1.0)).all():
            raise InputError("mask entries must be 0 or 1")
        if np.any((mask == 0.0) & (values != 0.0)):
            raise InputError("values must be zero where the mask is zero")
        if values.size and values.min() < 0:
            raise InputError("shopping pattern values must be non-negative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n_regions(self) -> int:
        return self.values.shape[0]

    @property
    def n_patterns(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MobilityPatternMatrix:
    """Dense r x m region mobility-pattern weights."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if values.ndim != 2:
            raise InputError("mobility matrix must be 2-dimensional")
        if values.size and values.min() < 0:
            raise InputError("mobility pattern values must be non-negative")
        object.__setattr__(self, "values", values)


def build_count_matrix(records, n_categories: int) -> CountMatrix:
    """Count (entity, category) occurrences; entity order is first appearance."""
    if n_categories < 1:
        raise InputError("n_categories must be >= 1")
    order: dict = {}
    rows: list[np.ndarray] = []
    for rec in records:
        entity, cat = rec
        cat = int(cat)
        if not 0 <= cat < n_categories:
            raise InputError(f"category id {cat} outside [0, {n_categories}) for entity {entity!r}")
        if entity not in order:
            order[entity] = len(rows)
            rows.append(np.zeros(n_categories))
        rows[order[entity]][cat] += 1
    values = np.array(rows) if rows else np.zeros((0, n_categories))
    return CountMatrix(tuple(order.keys()), values)


def _multiplicative_updates(X, k, max_iters, tol, seed):
    """Frobenius-loss multiplicative updates; returns (C, H, loss trace).

    X ~ C @ H with C (entities x k) and H (k x categories). A small epsilon
    guards the update denominators. The squared-error trace is checked to
    be non-increasing, which the update rule guarantees up to rounding.
    """
    rng = np.random.default_rng(seed)
    n_rows, n_cols = X.shape
    scale = np.sqrt(X.mean() / k)
    # entries uniform on (0, 1], scale-matched to the data
    C = (1.0 - rng.random((n_rows, k))) * scale
    H = (1.0 - rng.random((k, n_cols))) * scale

    def loss():
        diff = X - C @ H
        return 0.5 * float((diff * diff).sum())

    losses = [loss()]
    for _ in range(max_iters):
        H *= (C.T @ X) / (C.T @ C @ H + _DENOM_EPS)
        C *= (X @ H.T) / (C @ (H @ H.T) + _DENOM_EPS)
        losses.append(loss())
        prev, cur = losses[-2], losses[-1]
        if cur > prev * (1.0 + 1e-9) + 1e-12:
            raise NumericalError(
                f"multiplicative update increased the loss ({prev} -> {cur})"
            )
        if prev > 0 and (prev - cur) / prev < tol:
            break
    return C, H, losses


def nmf(X, k: int, max_iters: int = 500, tol: float = 1e-6, seed: int = 0):
    """Factorize a nonnegative matrix into (pattern basis, coefficients).

    Returns (P, C) with X ~ C @ P. P is k x categories and row-normalized
    to sum 1; the row scales are absorbed into C so the product is
    unchanged. Deterministic for a given seed.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2:
        raise InputError("nmf input must be 2-dimensional")
    if X.size and X.min() < 0:
        raise InputError("nmf input must be non-negative")
    if not 1 <= k <= min(X.shape):
        raise InputError(f"pattern count {k} outside [1, min{X.shape}]")
    n_rows, n_cols = X.shape
    if X.size == 0 or X.max() == 0.0:
        # degenerate input: zero coefficients against a uniform basis
        return np.full((k, n_cols), 1.0 / n_cols), np.zeros((n_rows, k))
    C, H, _ = _multiplicative_updates(X, k, max_iters, tol, seed)
    row_sums = H.sum(axis=1)
    P = np.empty_like(H)
    C = C * row_sums[None, :]
    for j, s in enumerate(row_sums):
        if s > 0:
            P[j] = H[j] / s
        else:
            # dead pattern: keep the basis row-stochastic; its coefficient
            # column is already zero so the product is unaffected
            P[j] = 1.0 / n_cols
    return P, C


def aggregate_shopping(C, row_keys, tower_positions, g: RegionGrid) -> ShoppingPatternMatrix:
    """Sum tower pattern coefficients into their regions.

    ``C`` is towers x patterns with ``row_keys`` naming the towers. The
    mask marks regions containing at least one located tower; towers
    outside the grid are dropped.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.shape[0] != len(row_keys):
        raise InputError("coefficient rows do not match tower keys")
    values = np.zeros((g.n_regions, C.shape[1]))
    mask_rows = np.zeros(g.n_regions, dtype=bool)
    for row, key in enumerate(row_keys):
        if key not in tower_positions:
            raise InputError(f"no position for location id {key!r}")
        region = region_of(tower_positions[key], g)
        if region is None:
            continue
        values[region] += C[row]
        mask_rows[region] = True
    mask = np.repeat(mask_rows[:, None], C.shape[1], axis=1).astype(np.float64)
    values[~mask_rows] = 0.0
    return ShoppingPatternMatrix(values, mask)


def activity_shares(checkins, g: RegionGrid) -> ActivityShareMatrix:
    """Per-user share of check-in activity in each region.

    Out-of-grid check-ins are excluded from both numerator and denominator;
    users with no in-grid check-ins are omitted. Rows sum to 1.
    """
    order: dict = {}
    rows: list[np.ndarray] = []
    for rec in checkins:
        region = region_of(rec.point, g)
        if region is None:
            continue
        if rec.user_id not in order:
            order[rec.user_id] = len(rows)
            rows.append(np.zeros(g.n_regions))
        rows[order[rec.user_id]][region] += 1
    values = np.array(rows) if rows else np.zeros((0, g.n_regions))
    if values.size:
        values /= values.sum(axis=1, keepdims=True)
    return ActivityShareMatrix(tuple(order.keys()), values)


def aggregate_mobility(w: ActivityShareMatrix, U) -> MobilityPatternMatrix:
    """Region mobility weights: entry (i, j) = sum_k w[k, i] * U[k, j]."""
    U = np.asarray(U, dtype=np.float64)
    if w.values.shape[0] != U.shape[0]:
        raise InputError(
            f"user count mismatch: {w.values.shape[0]} shares vs {U.shape[0]} coefficient rows"
        )
    return MobilityPatternMatrix(w.values.T @ U)


def top_categories(P, pattern: int, k: int):
    """The k largest-weight categories of one pattern row, descending.

    Ties break toward the lower category id.
    """
    P = np.asarray(P)
    if not 0 <= pattern < P.shape[0]:
        raise InputError(f"pattern index {pattern} outside [0, {P.shape[0]})")
    row = P[pattern]
    order = sorted(range(len(row)), key=lambda c: (-row[c], c))
    return [(c, float(row[c])) for c in order[: min(k, len(row))]]
