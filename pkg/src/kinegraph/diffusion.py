"""Attention construction, multi-hop diffusion and spectral verification.

The numerical core: a baseline partitioned graph convolution (reference
oracle), one-hop attention from feature differences, its refinement against
a shared topology, the geometric-weight multi-hop power sum, the iterative
fixed-point approximation of that sum, and eigenvalue checks relating the
one-hop and multi-hop operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import (
    DimensionMismatch,
    DomainError,
    NotSymmetric,
    SpectrumOutOfRange,
)

__all__ = [
    "AttentionParams",
    "DiffusionConfig",
    "AttentionStack",
    "gc_baseline",
    "one_hop_attention",
    "multi_hop_exact",
    "diffuse_iterative",
    "aggregate",
    "symmetric_eigen",
    "verify_eigen_relation",
    "laplacian_ratio",
    "LaplacianRatio",
    "degree_stats",
]


@dataclass
class AttentionParams:
    """Per-layer attention parameters.

    ``w_query``/``w_key`` project C features to R reduced channels; the
    signed difference of projected node features, squashed by tanh, gives R
    first-order attention maps which ``w_reduce`` collapses to one V x V
    refinement added onto the shared topology with weight ``gamma``.
    """

    shared_topology: np.ndarray
    gamma: float
    w_query: np.ndarray
    w_key: np.ndarray
    w_reduce: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        self.shared_topology = np.asarray(self.shared_topology, dtype=float)
        self.w_query = np.asarray(self.w_query, dtype=float)
        self.w_key = np.asarray(self.w_key, dtype=float)
        self.w_reduce = np.asarray(self.w_reduce, dtype=float).reshape(-1)
        if self.activation != "tanh":
            raise DimensionMismatch(f"unsupported activation {self.activation!r}")
        if self.w_query.shape != self.w_key.shape:
            raise DimensionMismatch("query/key projections must share shape")
        if self.reduce_dim < 1:
            raise DimensionMismatch("need R >= 1")
        if self.w_reduce.shape[0] != self.reduce_dim:
            raise DimensionMismatch("w_reduce length must equal R")
        for arr in (self.shared_topology, self.w_query, self.w_key, self.w_reduce):
            if not np.all(np.isfinite(arr)):
                raise DimensionMismatch("attention parameters contain NaN/Inf")

    @property
    def reduce_dim(self) -> int:
        return self.w_query.shape[1]


@dataclass
class DiffusionConfig:
    beta: float = 0.5
    hops: int = 1
    mode: str = "exact_power_sum"
    iterations: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise DomainError(f"beta must be in (0, 1], got {self.beta}")
        if self.hops < 0 or self.iterations < 0:
            raise DomainError("hops and iterations must be >= 0")
        if self.mode not in ("exact_power_sum", "iterative"):
            raise DomainError(f"unknown mode {self.mode!r}")

    def weights(self) -> np.ndarray:
        """Hop weights b(1-b)^i for i = 0..k."""
        i = np.arange(self.hops + 1)
        return self.beta * (1.0 - self.beta) ** i


@dataclass
class AttentionStack:
    """One layer's attention tensors: raw maps, refined, and diffused."""

    a_tilde: np.ndarray
    a_bar: np.ndarray
    a_script: np.ndarray | None = field(default=None)


def gc_baseline(feats: np.ndarray, partitions: list[np.ndarray],
                weights: list[np.ndarray], alpha: float = 0.001) -> np.ndarray:
    """Partitioned one-hop graph convolution (reference oracle).

    Each partition's adjacency is degree-normalized with an ``alpha``
    regularizer on the diagonal sums before aggregation:
    out = sum_s D_s^{-1/2} A_s D_s^{-1/2} F W_s.
    """
    if not partitions:
        raise DimensionMismatch("need at least one partition")
    if len(partitions) != len(weights):
        raise DimensionMismatch("one weight matrix per partition required")
    feats = np.asarray(feats, dtype=float)
    v = feats.shape[0]
    out = None
    for a_s, w_s in zip(partitions, weights):
        a_s = np.asarray(a_s, dtype=float)
        w_s = np.asarray(w_s, dtype=float)
        if a_s.shape != (v, v):
            raise DimensionMismatch(f"partition shape {a_s.shape} != ({v}, {v})")
        if w_s.shape[0] != feats.shape[1]:
            raise DimensionMismatch("weight rows must match feature channels")
        lam = a_s.sum(axis=1) + alpha
        with np.errstate(divide="ignore"):
            d = 1.0 / np.sqrt(lam)
        d[~np.isfinite(d)] = 0.0
        a_norm = (a_s * d[:, None]) * d[None, :]
        term = a_norm @ feats @ w_s
        out = term if out is None else out + term
    return out


def one_hop_attention(feats: np.ndarray, params: AttentionParams) -> AttentionStack:
    """First-order attention from projected feature differences.

    ``feats`` must already be pooled over time to V x C.  Produces
    a_tilde[r, i, j] = tanh(Q[i, r] - K[j, r]) and the refined map
    a_bar = shared + gamma * sum_r w_reduce[r] * a_tilde[r].
    """
    feats = np.asarray(feats, dtype=float)
    if feats.ndim != 2:
        raise DimensionMismatch(f"expected pooled V x C features, got ndim={feats.ndim}")
    v = feats.shape[0]
    if params.shared_topology.shape != (v, v):
        raise DimensionMismatch("shared topology does not match joint count")
    if params.w_query.shape[0] != feats.shape[1]:
        raise DimensionMismatch("projection rows must match feature channels")
    q = feats @ params.w_query  # V x R
    k = feats @ params.w_key
    a_tilde = np.tanh(q.T[:, :, None] - k.T[:, None, :])  # R x V x V
    refined = np.einsum("r,rij->ij", params.w_reduce, a_tilde)
    a_bar = params.shared_topology + params.gamma * refined
    return AttentionStack(a_tilde=a_tilde, a_bar=a_bar)


def multi_hop_exact(a_bar: np.ndarray, cfg: DiffusionConfig) -> np.ndarray:
    """Truncated geometric power sum sum_{i=0}^{k} b(1-b)^i A^i (A^0 = I)."""
    a_bar = np.ascontiguousarray(a_bar, dtype=float)
    return _backend.power_sum(a_bar, cfg.beta, cfg.hops)


def diffuse_iterative(a_bar: np.ndarray, feats: np.ndarray,
                      cfg: DiffusionConfig) -> np.ndarray:
    """K steps of E <- (1-b) A E + b F, starting from E = F.

    Converges to the infinite power sum applied to F; the K-step iterate
    equals ((1-b)^K A^K + b sum_{i<K} (1-b)^i A^i) F.
    """
    a_bar = np.ascontiguousarray(a_bar, dtype=float)
    feats = np.ascontiguousarray(feats, dtype=float)
    if feats.shape[0] != a_bar.shape[0]:
        raise DimensionMismatch("feature rows must match matrix size")
    squeeze = feats.ndim == 1
    if squeeze:
        feats = feats[:, None]
    out = _backend.diffuse_iter(a_bar, feats, cfg.beta, cfg.iterations)
    return out[:, 0] if squeeze else out


def aggregate(a_script: np.ndarray, feats: np.ndarray, w_out: np.ndarray) -> np.ndarray:
    """Feature aggregation: ReLU(A F W)."""
    a_script = np.asarray(a_script, dtype=float)
    feats = np.asarray(feats, dtype=float)
    w_out = np.atleast_2d(np.asarray(w_out, dtype=float))
    if feats.ndim == 1:
        feats = feats[:, None]
    if a_script.shape[1] != feats.shape[0]:
        raise DimensionMismatch("matrix columns must match feature rows")
    if feats.shape[1] != w_out.shape[0]:
        raise DimensionMismatch("feature channels must match weight rows")
    return np.maximum(a_script @ feats @ w_out, 0.0)


def symmetric_eigen(msym: np.ndarray, sym_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues ascending; eigenvectors orthonormal in columns.  Raises
    NotSymmetric when the input asymmetry exceeds ``sym_tol``.
    """
    m = np.asarray(msym, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got {m.shape}")
    if np.max(np.abs(m - m.T)) > sym_tol:
        raise NotSymmetric(f"asymmetry exceeds {sym_tol}")
    m = 0.5 * (m + m.T)
    return _backend.jacobi_eigh(np.ascontiguousarray(m))


def verify_eigen_relation(a_bar: np.ndarray, beta: float, k_trunc: int) -> dict:
    """Check the one-hop/multi-hop eigenvalue map b / (1 - (1-b) x).

    Eigendecomposes both the one-hop matrix and its truncated power sum and
    reports the worst absolute difference between the power-sum eigenvalues
    and the closed-form map of the one-hop eigenvalues.  The truncation
    residual is bounded by (1-b)^(k+1).
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must be in (0, 1), got {beta}")
    lam, _ = symmetric_eigen(a_bar)
    if lam[0] < -1.0 - 1e-9 or lam[-1] > 1.0 + 1e-9:
        raise SpectrumOutOfRange(
            f"one-hop spectrum [{lam[0]:.6f}, {lam[-1]:.6f}] outside [-1, 1]"
        )
    lam = np.clip(lam, -1.0, 1.0)
    cfg = DiffusionConfig(beta=beta, hops=k_trunc)
    truncated = multi_hop_exact(np.asarray(a_bar, dtype=float), cfg)
    mu, _ = symmetric_eigen(truncated)
    predicted = beta / (1.0 - (1.0 - beta) * lam)
    # the map is increasing on [-1, 1], so ascending order is preserved
    residuals = np.abs(mu - np.sort(predicted))
    return {
        "beta": beta,
        "k_trunc": k_trunc,
        "max_eig_residual": float(residuals.max()),
        "residual_bound": float((1.0 - beta) ** (k_trunc + 1)),
        "one_hop_eigenvalues": lam.tolist(),
        "multi_hop_eigenvalues": mu.tolist(),
    }


@dataclass
class LaplacianRatio:
    """Eigenvalue damping of the normalized Laplacian under diffusion."""

    ratio: float
    multi_hop_eigenvalue: float
    limit_used: bool = False


def laplacian_ratio(lambda_g: float, beta: float) -> LaplacianRatio:
    """Damping ratio of a normalized-Laplacian eigenvalue.

    Computes the multi-hop Laplacian eigenvalue 1 - b/(1 - (1-b)(1 - x))
    and its ratio to the one-hop eigenvalue; the closed form of the ratio is
    1 / (b/(1-b) + x).  At x = 0 the ratio is returned as its limit
    (1-b)/b with ``limit_used`` set.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must be in (0, 1), got {beta}")
    if lambda_g < 0.0 or lambda_g > 2.0:
        raise DomainError(f"laplacian eigenvalue must be in [0, 2], got {lambda_g}")
    multi = 1.0 - beta / (1.0 - (1.0 - beta) * (1.0 - lambda_g))
    if lambda_g == 0.0:
        return LaplacianRatio(
            ratio=(1.0 - beta) / beta, multi_hop_eigenvalue=0.0, limit_used=True
        )
    return LaplacianRatio(ratio=multi / lambda_g, multi_hop_eigenvalue=multi)


def degree_stats(a_bar: np.ndarray) -> dict:
    """Row-sum degree report plus the degree-normalized spectrum.

    When any degree is zero or negative the normalized-spectrum section is
    omitted (flagged) instead of failing; signed attention entries make that
    a legal state.
    """
    a = np.asarray(a_bar, dtype=float)
    if not np.all(np.isfinite(a)):
        raise DimensionMismatch("input contains NaN/Inf")
    q = a.sum(axis=1)
    report: dict = {
        "degrees": q.tolist(),
        "min_degree": float(q.min()),
        "max_degree": float(q.max()),
    }
    if np.all(q > 0):
        d = 1.0 / np.sqrt(q)
        sym = 0.5 * (a + a.T)
        normalized = (sym * d[:, None]) * d[None, :]
        lam, _ = symmetric_eigen(normalized)
        report["normalized_eig_min"] = float(lam[0])
        report["normalized_eig_max"] = float(lam[-1])
        report["normalization_skipped"] = False
    else:
        report["normalization_skipped"] = True
        report["skip_reason"] = "zero or negative degree"
    return report
