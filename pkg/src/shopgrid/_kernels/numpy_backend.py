"""Pure-NumPy implementation of the factorization hot kernels.

This is the fallback backend; the compiled extension in ``_core`` computes
the same quantities with fused loops and direct BLAS calls. Both backends
share the contract below.

Objective (W is the combined/neighbor weight matrix or None):

    0.5 * ||mask o (Rs - Rl V1^T)||_F^2
  + 0.5 * lam1 * ||Rm - Rl V2^T||_F^2
  + 0.5 * alpha * ||Rl - W^T Rl||_F^2          (only when W given, alpha > 0)
  + 0.5 * lam2 * (||Rl||_F^2 + ||V1||_F^2 + ||V2||_F^2)

Gradients are the exact derivatives of that expression; with
``literal=True`` the interaction part instead treats each region's
weighted mean as a constant and sums the per-region residual over all r
regions, i.e. alpha * r * (Rl - W^T Rl), dropping the cross-region
coupling term.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def objective(Rs, mask, Rm, Rl, V1, V2, lam1, lam2, alpha, W=None):
    E = mask * (Rl @ V1.T - Rs)
    total = 0.5 * float(np.vdot(E, E))
    if lam1 != 0.0:
        F = Rl @ V2.T - Rm
        total += 0.5 * lam1 * float(np.vdot(F, F))
    if W is not None and alpha != 0.0:
        D = Rl - W.T @ Rl
        total += 0.5 * alpha * float(np.vdot(D, D))
    if lam2 != 0.0:
        total += 0.5 * lam2 * (
            float(np.vdot(Rl, Rl)) + float(np.vdot(V1, V1)) + float(np.vdot(V2, V2))
        )
    return total


def gradients(Rs, mask, Rm, Rl, V1, V2, lam1, lam2, alpha, W=None, literal=False):
    E = mask * (Rl @ V1.T - Rs)
    g_Rl = E @ V1
    g_V1 = E.T @ Rl
    if lam1 != 0.0:
        F = Rl @ V2.T - Rm
        g_Rl += lam1 * (F @ V2)
        g_V2 = lam1 * (F.T @ Rl)
    else:
        g_V2 = np.zeros_like(V2)
    if W is not None and alpha != 0.0:
        D = Rl - W.T @ Rl
        if literal:
            g_Rl += (alpha * Rl.shape[0]) * D
        else:
            g_Rl += alpha * (D - W @ D)
    if lam2 != 0.0:
        g_Rl += lam2 * Rl
        g_V1 += lam2 * V1
        g_V2 += lam2 * V2
    return g_Rl, g_V1, g_V2
