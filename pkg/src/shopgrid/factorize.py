"""Latent-lifestyle factorization: objective, gradients, training loop.

The model factorizes the masked region shopping matrix and the dense
region mobility matrix through a shared region factor:

    Rs ~ Rl V1^T        (observed entries only)
    Rm ~ Rl V2^T

with ridge regularization and, optionally, an interaction penalty pulling
each region's latent row toward the weighted average of the other
regions' rows under a column-stochastic weight matrix W (lattice
neighbors or gravity-model inflows).

Training is plain gradient descent: at every iteration the step size
starts at 1 and halves until the candidate objective is strictly below
the current one. Four variants are exposed:

* ``MF``     shopping view only (lam1 = 0, alpha = 0)
* ``CMF``    both views, no interaction term (alpha = 0)
* ``CMF+N``  both views + penalty with uniform neighbor weights
* ``CMF+I``  both views + penalty with combined gravity inflow weights
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import InputError, NumericalError
from .grid import RegionGrid, neighbors
from .patterns import MobilityPatternMatrix, ShoppingPatternMatrix

VARIANTS = ("MF", "CMF", "CMF+N", "CMF+I")

GAMMA_UNDERFLOW = 1e-12

GRADIENT_MODES = ("exact", "uncoupled")


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs.

    Defaults were chosen by grid search on the synthetic benchmark; they
    are configuration, not universal constants.
    """

    l: int = 10
    lambda1: float = 1.0
    lambda2: float = 0.01
    alpha: float = 1.0
    max_iters: int = 2000
    epsilon: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.l < 1:
            raise InputError(f"latent dimension must be >= 1, got {self.l}")
        if self.lambda1 < 0 or self.lambda2 < 0 or self.alpha < 0:
            raise InputError("weights lambda1, lambda2, alpha must be >= 0")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if not self.epsilon > 0:
            raise InputError("epsilon must be > 0")


@dataclass(frozen=True)
class RegularizerSpec:
    """Interaction-penalty configuration.

    ``kind`` is one of none/neighbor/interaction; ``weights`` is the r x r
    column-stochastic matrix for the non-trivial kinds.
    """

    kind: str = "none"
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "neighbor", "interaction"):
            raise InputError(f"unknown regularizer kind {self.kind!r}")
        if self.kind == "none":
            if self.weights is not None:
                raise InputError("regularizer kind 'none' takes no weights")
            return
        if self.weights is None:
            raise InputError(f"regularizer kind {self.kind!r} requires weights")
        W = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise InputError("regularizer weights must be square")
        sums = W.sum(axis=0)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise InputError("regularizer weight columns must sum to 1")
        object.__setattr__(self, "weights", W)


@dataclass(frozen=True)
class FactorModel:
    """Trained factors plus the input scaling they were trained under.

    ``scale_s``/``scale_m`` record the per-matrix maximum each input was
    divided by before training, so predictions can be reported in the
    original units.
    """

    R_l: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    scale_s: float = 1.0
    scale_m: float = 1.0
    variant: str | None = None

    def __post_init__(self):
        for name in ("R_l", "V1", "V2"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if arr.ndim != 2:
                raise InputError(f"{name} must be 2-dimensional")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)
        l = self.R_l.shape[1]
        if self.V1.shape[1] != l or self.V2.shape[1] != l:
            raise InputError("factor latent dimensions disagree")

    @property
    def dims(self) -> dict:
        return {
            "r": self.R_l.shape[0],
            "n": self.V1.shape[0],
            "m": self.V2.shape[0],
            "l": self.R_l.shape[1],
        }


@dataclass
class LossTrace:
    """Per-iteration (iteration, objective, accepted step) records."""

    iterations: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    gammas: list[float] = field(default_factory=list)
    final_loss: float = math.nan
    stop_reason: str = ""

    def append(self, iteration: int, loss: float, gamma: float):
        if self.losses and not loss < self.losses[-1]:
            raise NumericalError(
                f"objective did not decrease at iteration {iteration}: "
                f"{self.losses[-1]} -> {loss}"
            )
        self.iterations.append(iteration)
        self.losses.append(loss)
        self.gammas.append(gamma)

    def __len__(self) -> int:
        return len(self.iterations)


def _check_dims(shopping, mobility, Rl, V1, V2, reg):
    r = Rl.shape[0]
    if shopping.values.shape != (r, V1.shape[0]):
        raise InputError(
            f"shopping matrix {shopping.values.shape} does not match factors "
            f"({r}, {V1.shape[0]})"
        )
    if mobility.values.shape != (r, V2.shape[0]):
        raise InputError(
            f"mobility matrix {mobility.values.shape} does not match factors "
            f"({r}, {V2.shape[0]})"
        )
    if reg.kind != "none" and reg.weights.shape != (r, r):
        raise InputError(f"regularizer weights {reg.weights.shape} do not match r={r}")


def _kernel_args(shopping, mobility, model_or_factors, reg, h):
    Rl, V1, V2 = model_or_factors
    W = reg.weights if reg.kind != "none" else None
    return (
        shopping.values,
        shopping.mask,
        mobility.values,
        np.ascontiguousarray(Rl),
        np.ascontiguousarray(V1),
        np.ascontiguousarray(V2),
        h.lambda1,
        h.lambda2,
        h.alpha,
        W,
    )


def objective(model: FactorModel, shopping: ShoppingPatternMatrix,
              mobility: MobilityPatternMatrix, reg: RegularizerSpec,
              h: Hyperparams) -> float:
    """Evaluate the training objective at the given factors (no rescaling)."""
    _check_dims(shopping, mobility, model.R_l, model.V1, model.V2, reg)
    for name, arr in (("shopping", shopping.values), ("mobility", mobility.values)):
        if arr.size and not np.all(np.isfinite(arr)):
            raise InputError(f"{name} matrix contains non-finite entries")
    value = _kernels.objective(*_kernel_args(shopping, mobility,
                                             (model.R_l, model.V1, model.V2), reg, h))
    if not math.isfinite(value):
        raise NumericalError(f"objective is not finite: {value}")
    return value


def gradient(model: FactorModel, shopping: ShoppingPatternMatrix,
             mobility: MobilityPatternMatrix, reg: RegularizerSpec,
             h: Hyperparams, mode: str = "exact"):
    """Gradients of the objective with respect to (R_l, V1, V2).

    ``mode='exact'`` differentiates the objective as implemented, including
    the coupling introduced by each region appearing in other regions'
    weighted means. ``mode='uncoupled'`` drops that coupling and sums the
    per-region residual over all regions (the interaction part becomes
    alpha * r * (Rl - W^T Rl)), kept for fidelity experiments.
    """
    if mode not in GRADIENT_MODES:
        raise InputError(f"gradient mode must be one of {GRADIENT_MODES}, got {mode!r}")
    _check_dims(shopping, mobility, model.R_l, model.V1, model.V2, reg)
    return _kernels.gradients(
        *_kernel_args(shopping, mobility, (model.R_l, model.V1, model.V2), reg, h),
        literal=(mode == "uncoupled"),
    )


def neighbor_weights(g: RegionGrid) -> np.ndarray:
    """Column-stochastic uniform weights over each region's lattice neighbors."""
    if g.n_regions < 2:
        raise InputError("neighbor weights need a grid with at least 2 regions")
    W = np.zeros((g.n_regions, g.n_regions))
    for i in range(g.n_regions):
        nbrs = sorted(neighbors(g, i))
        W[nbrs, i] = 1.0 / len(nbrs)
    return W


def _effective(h: Hyperparams, reg: RegularizerSpec, variant: str):
    """Resolve variant-forced hyperparameters and the weight matrix."""
    if variant not in VARIANTS:
        raise InputError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "MF":
        return replace(h, lambda1=0.0, alpha=0.0), RegularizerSpec("none")
    if variant == "CMF":
        return replace(h, alpha=0.0), RegularizerSpec("none")
    expected = "neighbor" if variant == "CMF+N" else "interaction"
    if reg.kind != expected:
        raise InputError(f"variant {variant} requires regularizer kind {expected!r}, "
                         f"got {reg.kind!r}")
    return h, reg


def _init_factors(rng, r, n, m, l, mean_observed):
    base = mean_observed if (math.isfinite(mean_observed) and mean_observed > 0) else 1.0
    hi = 0.1 * math.sqrt(base / l)
    # uniform on (0, hi]: small positive start keeps early line searches stable
    R_l = (1.0 - rng.random((r, l))) * hi
    V1 = (1.0 - rng.random((n, l))) * hi
    V2 = (1.0 - rng.random((m, l))) * hi
    return R_l, V1, V2


def train(shopping: ShoppingPatternMatrix, mobility: MobilityPatternMatrix,
          reg: RegularizerSpec, h: Hyperparams, variant: str = "CMF+I"):
    """Run the gradient-descent training loop; returns (model, trace).

    Inputs are each scaled by their own maximum observed entry (recorded in
    the model for the inverse transform). Every iteration evaluates the
    objective, computes gradients, and halves the step size from 1 until
    the candidate objective strictly decreases; stops at max_iters, when an
    iteration improves by at most epsilon, or when the step size underflows
    without improvement (a local minimum).
    """
    h_eff, reg_eff = _effective(h, reg, variant)
    r, n = shopping.values.shape
    m = mobility.values.shape[1]
    _check_dims(shopping, mobility, np.empty((r, h.l)), np.empty((n, h.l)),
                np.empty((m, h.l)), reg_eff)

    scale_s = float(shopping.values.max()) if shopping.values.size else 0.0
    scale_s = scale_s if scale_s > 0 else 1.0
    scale_m = float(mobility.values.max()) if mobility.values.size else 0.0
    scale_m = scale_m if scale_m > 0 else 1.0
    shopping_sc = ShoppingPatternMatrix(shopping.values / scale_s, shopping.mask)
    mobility_sc = MobilityPatternMatrix(mobility.values / scale_m)

    observed = shopping_sc.values[shopping_sc.mask == 1.0]
    mean_observed = float(observed.mean()) if observed.size else 0.0
    rng = np.random.default_rng(h.seed)
    Rl, V1, V2 = _init_factors(rng, r, n, m, h.l, mean_observed)

    args = lambda f: _kernel_args(shopping_sc, mobility_sc, f, reg_eff, h_eff)  # noqa: E731
    trace = LossTrace()
    loss = _kernels.objective(*args((Rl, V1, V2)))
    if not math.isfinite(loss):
        raise NumericalError("objective is not finite at iteration 0")

    for t in range(h.max_iters):
        g_Rl, g_V1, g_V2 = _kernels.gradients(*args((Rl, V1, V2)))
        gamma = 1.0
        accepted = None
        while True:
            cand = (Rl - gamma * g_Rl, V1 - gamma * g_V1, V2 - gamma * g_V2)
            cand_loss = _kernels.objective(*args(cand))
            if math.isfinite(cand_loss) and cand_loss < loss:
                accepted = cand
                break
            gamma *= 0.5
            if gamma < GAMMA_UNDERFLOW:
                break
        if accepted is None:
            # no descent step exists at this iterate; converged
            trace.stop_reason = "gamma_underflow"
            break
        trace.append(t, loss, gamma)
        Rl, V1, V2 = accepted
        decrease = loss - cand_loss
        loss = cand_loss
        if not math.isfinite(loss):
            raise NumericalError(f"objective is not finite at iteration {t}")
        if decrease <= h.epsilon:
            trace.stop_reason = "epsilon"
            break
    else:
        trace.stop_reason = "max_iters"

    trace.final_loss = loss
    model = FactorModel(R_l=Rl, V1=V1, V2=V2, scale_s=scale_s, scale_m=scale_m,
                        variant=variant)
    return model, trace


def predict(model: FactorModel) -> np.ndarray:
    """Predicted region shopping-pattern intensities, in original units.

    The factor product is clamped at zero from below (intensities are
    non-negative) and multiplied back by the recorded shopping scale.
    """
    product = model.R_l @ model.V1.T
    return np.maximum(product, 0.0) * model.scale_s
