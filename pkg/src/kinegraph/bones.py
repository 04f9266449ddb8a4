"""Candidate "bone" scoring and in-degree-constrained selection.

Any unordered joint pair {i, j} is a candidate difference vector; for V
joints there are V*(V-1)/2 candidates.  Scoring is the temporal standard
deviation of the pair's difference vector, averaged over coordinates and
samples, optionally weighted by a prior distance graph.  Selection picks one
incident pair per non-base joint, no pair reused, minimizing the score sum.

The selection is solved as min-cost bipartite matching between targets
(non-base joints) and unordered pairs via successive shortest augmenting
paths.  Feasibility for any V >= 2: assigning every target t the pair
{base, t} uses pairwise-distinct pairs, so a perfect matching always exists.
Ties are broken lexicographically by (target, source); a brute-force
enumerator with the same tie rule serves as oracle for small V.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySampleSet,
    InconsistentJointCount,
    SameJoint,
    TooLarge,
)
from . import topology

if TYPE_CHECKING:
    from .priors import GprGraph
    from .skeleton import SkeletonSequence

__all__ = [
    "BoneMatrix",
    "CandidateScores",
    "bone_std",
    "pair_std_matrix",
    "dataset_scores",
    "select_min_assignment",
    "brute_force_select",
    "selection_cost",
    "physical_bones",
]

BRUTE_FORCE_MAX_JOINTS = 7


@dataclass
class BoneMatrix:
    """Binary V x V source/target matrix.

    ``mat[i][j] = 1`` marks joint i as the source of target joint j.  The
    base joint has no incoming bone (its column is empty); every other joint
    has exactly one, and no unordered pair is used twice.
    """

    mat: np.ndarray
    base: int

    def __post_init__(self):
        self.mat = np.asarray(self.mat)
        self.validate()

    def validate(self) -> None:
        v = self.mat.shape[0]
        if self.mat.shape != (v, v):
            raise DimensionMismatch(f"bone matrix must be square, got {self.mat.shape}")
        if not ((self.mat == 0) | (self.mat == 1)).all():
            raise DimensionMismatch("bone matrix must be binary")
        if not 0 <= self.base < v:
            raise DimensionMismatch(f"base {self.base} out of range for V={v}")
        if np.any(np.diag(self.mat) != 0):
            raise DimensionMismatch("bone matrix has self-loops")
        indeg = self.mat.sum(axis=0)
        if indeg[self.base] != 0:
            raise DimensionMismatch("base joint must have no incoming bone")
        bad = [j for j in range(v) if j != self.base and indeg[j] != 1]
        if bad:
            raise DimensionMismatch(f"joints {bad} must have exactly one incoming bone")
        if np.any((self.mat == 1) & (self.mat.T == 1)):
            raise DimensionMismatch("an unordered pair is used by two targets")

    @property
    def joints(self) -> int:
        return self.mat.shape[0]

    def pairs(self) -> list[tuple[int, int]]:
        """(source, target) pairs sorted by target index."""
        src, tgt = np.nonzero(self.mat)
        order = np.argsort(tgt)
        return [(int(src[k]), int(tgt[k])) for k in order]

    def as_transform(self) -> np.ndarray:
        """The linear map applied per frame: row t becomes x_t - x_source(t).

        The base row is the identity row, so applying the transform leaves
        base-joint coordinates untouched.
        """
        return np.eye(self.joints) - self.mat.T.astype(float)

    @classmethod
    def from_pairs(cls, pairs: list[tuple[int, int]], base: int, joints: int) -> "BoneMatrix":
        mat = np.zeros((joints, joints), dtype=np.int8)
        for src, tgt in pairs:
            mat[src, tgt] = 1
        return cls(mat=mat, base=base)

    def to_dict(self) -> dict:
        return {"base": self.base, "pairs": [[s, t] for s, t in self.pairs()]}

    @classmethod
    def from_dict(cls, obj: dict, joints: int | None = None) -> "BoneMatrix":
        pairs = [(int(s), int(t)) for s, t in obj["pairs"]]
        if joints is None:
            joints = 1 + max(max(s, t) for s, t in pairs)
        return cls.from_pairs(pairs, base=int(obj["base"]), joints=joints)


def physical_bones(joints: int = 25) -> BoneMatrix:
    """The physical (child, parent) skeleton as a BoneMatrix rooted at 0."""
    pairs = [(parent, child) for child, parent in topology.physical_pairs(joints)]
    return BoneMatrix.from_pairs(pairs, base=0, joints=joints)


@dataclass
class CandidateScores:
    """Symmetric per-pair score matrix (diagonal unused)."""

    score: np.ndarray
    n_samples: int = 0

    def __post_init__(self):
        self.score = np.asarray(self.score, dtype=float)
        v = self.score.shape[0]
        if self.score.shape != (v, v):
            raise DimensionMismatch(f"score matrix must be square, got {self.score.shape}")
        if not np.all(np.isfinite(self.score)):
            raise DimensionMismatch("scores contain NaN/Inf")
        if np.any(self.score < 0):
            raise DimensionMismatch("scores must be nonnegative")
        if not np.allclose(self.score, self.score.T, atol=1e-12):
            raise DimensionMismatch("score matrix must be symmetric")

    @property
    def joints(self) -> int:
        return self.score.shape[0]


def bone_std(seq: "SkeletonSequence", i: int, j: int) -> float:
    """Temporal spread of the difference vector x_j(t) - x_i(t).

    Population standard deviation over time, per coordinate, averaged over
    the d coordinates.  A single frame gives 0.
    """
    if i == j:
        raise SameJoint(f"joint pair ({i}, {j})")
    diff = seq.data[:, j, :] - seq.data[:, i, :]
    return float(np.mean(np.std(diff, axis=0)))


def pair_std_matrix(seq: "SkeletonSequence") -> np.ndarray:
    """All-pairs bone_std as a symmetric V x V matrix (zero diagonal)."""
    diffs = seq.data[:, None, :, :] - seq.data[:, :, None, :]  # t, i, j, d
    return np.std(diffs, axis=0).mean(axis=-1)


def dataset_scores(samples: list["SkeletonSequence"],
                   gpr: "GprGraph | None" = None) -> CandidateScores:
    """Average per-pair std over samples, optionally prior-weighted.

    With a prior graph, each pair's score is multiplied by its distance
    normalized by the maximum distance.  A degenerate all-zero prior keeps
    the weights at 1 (no information to apply).
    """
    if not samples:
        raise EmptySampleSet("need at least one sample")
    v = samples[0].joints
    for k, s in enumerate(samples):
        if s.joints != v:
            raise InconsistentJointCount(f"sample {k} has V={s.joints}, expected {v}")
    acc = np.zeros((v, v))
    for s in samples:
        acc += pair_std_matrix(s)
    score = acc / len(samples)
    if gpr is not None:
        if gpr.dist.shape != (v, v):
            raise InconsistentJointCount(
                f"prior graph is {gpr.dist.shape}, samples have V={v}"
            )
        peak = float(gpr.dist.max())
        if peak > 0:
            score = score * (gpr.dist / peak)
    np.fill_diagonal(score, 0.0)
    return CandidateScores(score=score, n_samples=len(samples))


def _pair_index(v: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(v) for j in range(i + 1, v)]


def _hungarian(cost: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Min-cost rectangular assignment via shortest augmenting paths.

    Rows must not outnumber columns; np.inf marks forbidden entries.
    Returns (column per row, total cost), or None if no perfect matching of
    the rows exists.
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # row matched to column j (1-based, 0 free)
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            open_cols = ~used[1:]
            upd = open_cols & (cur < minv[1:])
            minv[1:][upd] = cur[upd]
            way[1:][upd] = j0
            cand = np.where(open_cols, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            if not np.isfinite(delta):
                return None
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = int(way[j0])
            p[j0] = p[j1]
            j0 = j1
    assign = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if p[j] != 0:
            assign[p[j] - 1] = j - 1
    total = float(cost[np.arange(n), assign].sum())
    return assign, total


def _cost_matrix(scores: CandidateScores, targets: list[int],
                 pairs: list[tuple[int, int]],
                 banned: set[tuple[int, int]]) -> np.ndarray:
    cost = np.full((len(targets), len(pairs)), np.inf)
    for r, t in enumerate(targets):
        for c, (i, j) in enumerate(pairs):
            if (i, j) in banned:
                continue
            if t == i or t == j:
                cost[r, c] = scores.score[i, j]
    return cost


def selection_cost(scores: CandidateScores, bones: BoneMatrix) -> float:
    """Total selected score, accumulated in ascending target order."""
    total = 0.0
    for src, tgt in bones.pairs():
        total += float(scores.score[src, tgt])
    return total


def select_min_assignment(scores: CandidateScores, base: int) -> BoneMatrix:
    """Minimum-total-score bone set with one incident pair per non-base joint.

    Among cost-optimal solutions the lexicographically smallest (by target,
    then source index) is returned, matching the brute-force oracle.
    """
    v = scores.joints
    if not 0 <= base < v:
        raise DimensionMismatch(f"base {base} out of range for V={v}")
    targets = [t for t in range(v) if t != base]
    pairs = _pair_index(v)
    solved = _hungarian(_cost_matrix(scores, targets, pairs, set()))
    if solved is None:  # unreachable for V >= 2, see module docstring
        raise DimensionMismatch("no feasible bone assignment")
    _, optimal = solved
    eps = 1e-9 * max(1.0, abs(optimal))

    chosen: list[tuple[int, int]] = []
    banned: set[tuple[int, int]] = set()
    prefix = 0.0
    for idx, t in enumerate(targets):
        remaining = targets[idx + 1:]
        for s in range(v):
            if s == t:
                continue
            pair = (min(s, t), max(s, t))
            if pair in banned:
                continue
            cand = prefix + float(scores.score[pair])
            if cand > optimal + eps:
                continue
            if remaining:
                rest = _hungarian(_cost_matrix(scores, remaining, pairs, banned | {pair}))
                if rest is None:
                    continue
                cand += rest[1]
            if cand <= optimal + eps:
                chosen.append((s, t))
                banned.add(pair)
                prefix += float(scores.score[pair])
                break
        else:  # pragma: no cover - feasibility argument rules this out
            raise DimensionMismatch(f"no completion for target {t}")
    return BoneMatrix.from_pairs(chosen, base=base, joints=v)


def brute_force_select(scores: CandidateScores, base: int) -> BoneMatrix:
    """Exhaustive oracle for select_min_assignment (guarded to small V)."""
    v = scores.joints
    if v > BRUTE_FORCE_MAX_JOINTS:
        raise TooLarge(f"brute force limited to V <= {BRUTE_FORCE_MAX_JOINTS}, got {v}")
    if not 0 <= base < v:
        raise DimensionMismatch(f"base {base} out of range for V={v}")
    targets = [t for t in range(v) if t != base]
    best_cost = np.inf
    best: list[int] | None = None
    sources: list[int] = []

    def dfs(idx: int, used: set[tuple[int, int]], cost: float) -> None:
        nonlocal best_cost, best
        if cost >= best_cost and best is not None:
            return
        if idx == len(targets):
            # first minimal solution found is lexicographically smallest
            best_cost = cost
            best = sources.copy()
            return
        t = targets[idx]
        for s in range(v):
            if s == t:
                continue
            pair = (min(s, t), max(s, t))
            if pair in used:
                continue
            sources.append(s)
            dfs(idx + 1, used | {pair}, cost + float(scores.score[pair]))
            sources.pop()

    dfs(0, set(), 0.0)
    assert best is not None
    return BoneMatrix.from_pairs(
        [(s, t) for s, t in zip(best, targets)], base=base, joints=v
    )
