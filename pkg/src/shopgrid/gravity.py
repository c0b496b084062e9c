"""Gravity-model interactions: flow tables, log-linear fitting, weights.

Trips are binned into region-to-region flow counts. The gravity law

    q[i, j] = c * O[i]**a * D[j]**b * exp(-g * dis[i, j])

is fitted by ordinary least squares on its log transform over the pairs
with positive flow. The fitted law is materialized as an interaction
matrix Q per transport mode, and the per-mode column-normalized inflow
weights are averaged into the combined weight matrix used by the
interaction regularizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IdentifiabilityError, InputError
from .grid import GeoPoint, RegionGrid, neighbors, region_of

MODES = ("bus", "taxi")

_RANK_RTOL = 1e-10
_COLUMN_NAMES = ("ln_origin", "ln_destination", "distance", "intercept")


@dataclass(frozen=True)
class TripRecord:
    """One trip of a transport mode with origin and destination points."""

    mode: str
    origin: GeoPoint
    destination: GeoPoint

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown transport mode {self.mode!r}")


@dataclass(frozen=True)
class FlowTable:
    """r x r trip counts plus departure/arrival totals per region.

    ``from_counts`` derives the totals as the row/column sums, which is the
    invariant maintained for every table built from trips. Constructing the
    dataclass directly allows externally supplied totals, e.g. model-implied
    flows in tests.
    """

    q: np.ndarray
    departures: np.ndarray
    arrivals: np.ndarray

    def __post_init__(self):
        q = np.ascontiguousarray(np.asarray(self.q, dtype=np.float64))
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise InputError("flow matrix must be square")
        if q.size and q.min() < 0:
            raise InputError("flow counts must be non-negative")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "departures", np.asarray(self.departures, dtype=np.float64))
        object.__setattr__(self, "arrivals", np.asarray(self.arrivals, dtype=np.float64))
        if self.departures.shape != (q.shape[0],) or self.arrivals.shape != (q.shape[0],):
            raise InputError("departure/arrival vectors must have length r")

    @classmethod
    def from_counts(cls, q) -> "FlowTable":
        q = np.asarray(q, dtype=np.float64)
        if q.size and not np.equal(np.mod(q, 1.0), 0.0).all():
            raise InputError("trip counts must be integers")
        return cls(q, q.sum(axis=1), q.sum(axis=0))

    @property
    def n_regions(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class GravityParams:
    """Fitted gravity-law coefficients for one transport mode.

    ``g`` is the distance-decay rate per km, i.e. the coefficient of
    -dis in log space.
    """

    a: float
    b: float
    g: float
    ln_c: float
    mode: str
    n_pairs_used: int | None = None

    def __post_init__(self):
        for name in ("a", "b", "g", "ln_c"):
            if not np.isfinite(getattr(self, name)):
                raise InputError(f"gravity parameter {name} is not finite")


def build_flows(trips, g: RegionGrid, mode: str) -> FlowTable:
    """Bin trips of one mode into a region-to-region flow table.

    Trips with either endpoint outside the grid are dropped.
    """
    q = np.zeros((g.n_regions, g.n_regions))
    for trip in trips:
        if trip.mode != mode:
            continue
        i = region_of(trip.origin, g)
        j = region_of(trip.destination, g)
        if i is None or j is None:
            continue
        q[i, j] += 1
    return FlowTable.from_counts(q)


def _check_rank(X):
    """Raise IdentifiabilityError naming the offending column if X is rank deficient."""
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < _RANK_RTOL * sv[0]:
        _, _, vt = np.linalg.svd(X, full_matrices=False)
        null = np.abs(vt[-1])
        # prefer naming a data column over the intercept
        col = int(np.argmax(null[:-1])) if null[:-1].max() > 1e-8 else 3
        raise IdentifiabilityError(
            f"gravity regression design is rank deficient: column "
            f"{_COLUMN_NAMES[col]!r} is collinear with the others"
        )


def fit_gravity(f: FlowTable, dis: np.ndarray, mode: str = "taxi") -> GravityParams:
    """Fit (a, b, g, ln_c) by OLS on the log-transformed gravity law.

    Only pairs with positive flow enter the regression (the log of a zero
    flow is undefined). Solved via normal equations with a QR fallback when
    the normal system is ill-conditioned.
    """
    q = f.q
    dis = np.asarray(dis, dtype=np.float64)
    if dis.shape != q.shape:
        raise InputError("distance matrix shape does not match flows")
    rows, cols = np.nonzero(q > 0)
    if rows.size < 4:
        raise InputError(f"need at least 4 positive-flow pairs, found {rows.size}")
    O = f.departures[rows]
    D = f.arrivals[cols]
    if O.min() <= 0 or D.min() <= 0:
        raise InputError("positive-flow pairs with zero departure/arrival totals")
    X = np.column_stack([np.log(O), np.log(D), -dis[rows, cols], np.ones(rows.size)])
    y = np.log(q[rows, cols])
    _check_rank(X)
    gram = X.T @ X
    try:
        beta = np.linalg.solve(gram, X.T @ y)
        if not np.all(np.isfinite(beta)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        Q, R = np.linalg.qr(X)
        beta = scipy.linalg.solve_triangular(R, Q.T @ y)
    a, b, g_coef, ln_c = (float(v) for v in beta)
    return GravityParams(a=a, b=b, g=g_coef, ln_c=ln_c, mode=mode, n_pairs_used=int(rows.size))


def interaction_matrix(p: GravityParams, f: FlowTable, dis: np.ndarray) -> np.ndarray:
    """Materialize the fitted law: Q[i, j] = c * O_i^a * D_j^b * exp(-g * dis).

    Zero-mass regions produce zero rows/columns (0**a = 0 for a > 0); the
    diagonal is included since within-region distance is zero.
    """
    O = f.departures
    D = f.arrivals
    dis = np.asarray(dis, dtype=np.float64)
    if dis.shape != (O.size, O.size):
        raise InputError("distance matrix shape does not match flows")
    if O.min() < 0 or D.min() < 0:
        raise InputError("region masses must be non-negative")
    if (p.a <= 0 and (O == 0).any()) or (p.b <= 0 and (D == 0).any()):
        raise InputError("non-positive mass exponent with zero-mass regions is undefined")
    Q = np.exp(p.ln_c) * np.power(O, p.a)[:, None] * np.power(D, p.b)[None, :]
    Q *= np.exp(-p.g * dis)
    return Q


def combined_weights(q_taxi, q_bus, g: RegionGrid) -> np.ndarray:
    """Average the two modes' column-normalized inflow weights.

    Column i holds the weights of every region's influence onto region i.
    A mode with zero total inflow to a region is skipped; if both modes are
    zero the column falls back to the uniform distribution over the
    region's lattice neighbors, keeping the regularizer defined for
    isolated regions. Every column sums to 1.
    """
    q_taxi = np.asarray(q_taxi, dtype=np.float64)
    q_bus = np.asarray(q_bus, dtype=np.float64)
    if q_taxi.shape != q_bus.shape or q_taxi.ndim != 2 or q_taxi.shape[0] != q_taxi.shape[1]:
        raise InputError("interaction matrices must be square and identically shaped")
    if q_taxi.shape[0] != g.n_regions:
        raise InputError("interaction matrices do not match the grid")
    if q_taxi.min() < 0 or q_bus.min() < 0:
        raise InputError("interaction matrices must be non-negative")
    r = g.n_regions
    W = np.zeros((r, r))
    for i in range(r):
        cols = []
        for q in (q_taxi, q_bus):
            total = q[:, i].sum()
            if total > 0:
                cols.append(q[:, i] / total)
        if cols:
            W[:, i] = cols[0] if len(cols) == 1 else 0.5 * (cols[0] + cols[1])
        else:
            nbrs = sorted(neighbors(g, i))
            W[nbrs, i] = 1.0 / len(nbrs)
    return W
