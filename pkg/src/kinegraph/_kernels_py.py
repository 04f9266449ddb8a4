"""Pure numpy implementations of the hot kernels.

The compiled extension (``_kernels.pyx``) mirrors these signatures; the
backend module picks whichever is available.  Keep summation orders aligned
between the two implementations.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["power_sum", "diffuse_iter", "jacobi_eigh", "make_micro_loss"]


def power_sum(a_bar: np.ndarray, beta: float, hops: int) -> np.ndarray:
    """Geometric-weight truncated power sum: sum_{i=0}^{k} b(1-b)^i A^i."""
    v = a_bar.shape[0]
    acc = beta * np.eye(v)
    power = np.eye(v)
    w = beta
    for _ in range(hops):
        power = power @ a_bar
        w *= 1.0 - beta
        acc = acc + w * power
    return acc


def diffuse_iter(a_bar: np.ndarray, feats: np.ndarray, beta: float, iters: int) -> np.ndarray:
    """Fixed-point recursion E <- (1-b) A E + b E0, run for K iterations."""
    e0 = np.asarray(feats, dtype=float)
    e = e0.copy()
    for _ in range(iters):
        e = (1.0 - beta) * (a_bar @ e) + beta * e0
    return e


def jacobi_eigh(sym: np.ndarray, off_tol: float = 1e-12,
                max_sweeps: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps rotations until the off-diagonal Frobenius norm drops below
    ``off_tol``.  Returns eigenvalues ascending and orthonormal eigenvectors
    as columns, each sign-fixed so its largest-magnitude entry is positive.
    """
    a = np.array(sym, dtype=float)
    n = a.shape[0]
    vecs = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, float((a * a).sum() - (np.diag(a) ** 2).sum())))
        if off < off_tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # negligible relative to the diagonal: rotation is a no-op
                if abs(apq) <= 1e-18 * (abs(a[p, p]) + abs(a[q, q]) + off_tol):
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta^2 would overflow
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * vecs[:, p] - s * vecs[:, q]
                rot_q = s * vecs[:, p] + c * vecs[:, q]
                vecs[:, p], vecs[:, q] = rot_p, rot_q
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    vecs = vecs[:, order]
    flip = vecs[np.abs(vecs).argmax(axis=0), np.arange(n)] < 0
    vecs[:, flip] *= -1.0
    return w, vecs


def make_micro_loss(plan: dict, data: np.ndarray, labels: np.ndarray):
    """Loss evaluator over a flat parameter vector (numpy reference).

    Evaluates the whole dataset as one batch with batch-statistics
    normalization, mirroring the compiled kernel.  ``plan`` is the layout
    dict produced by :func:`kinegraph.training.build_plan`.
    """
    from . import training

    def loss(theta: np.ndarray) -> float:
        return training.micro_loss_reference(theta, data, labels, plan)

    return loss
