"""Physical skeleton topologies and adjacency normalization helpers.

The 25-joint Kinect-v2 layout is the reference graph; arbitrary joint counts
fall back to a simple chain so that synthetic micro-models stay well defined.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NTU_JOINT_NAMES",
    "ntu25_pairs",
    "physical_pairs",
    "adjacency_from_pairs",
    "normalized_adjacency",
    "partition_adjacency",
]

# Kinect v2 joint order (0-based).
NTU_JOINT_NAMES = [
    "base of spine", "middle of spine", "neck", "head",
    "left shoulder", "left elbow", "left wrist", "left hand",
    "right shoulder", "right elbow", "right wrist", "right hand",
    "left hip", "left knee", "left ankle", "left foot",
    "right hip", "right knee", "right ankle", "right foot",
    "spine", "tip of left hand", "left thumb",
    "tip of right hand", "right thumb",
]

# (child, parent) pairs, rooted at the spine base (joint 0).
_NTU25_PAIRS_1BASED = [
    (2, 1), (21, 2), (3, 21), (4, 3),
    (5, 21), (6, 5), (7, 6), (8, 7),
    (9, 21), (10, 9), (11, 10), (12, 11),
    (13, 1), (14, 13), (15, 14), (16, 15),
    (17, 1), (18, 17), (19, 18), (20, 19),
    (22, 8), (23, 8), (24, 12), (25, 12),
]


def ntu25_pairs() -> list[tuple[int, int]]:
    """(child, parent) joint pairs of the 25-joint physical skeleton."""
    return [(c - 1, p - 1) for c, p in _NTU25_PAIRS_1BASED]


def physical_pairs(joints: int) -> list[tuple[int, int]]:
    """Physical (child, parent) pairs for a joint count.

    25 joints get the Kinect layout; anything else a chain rooted at 0.
    """
    if joints == 25:
        return ntu25_pairs()
    return [(j, j - 1) for j in range(1, joints)]


def adjacency_from_pairs(pairs: list[tuple[int, int]], joints: int) -> np.ndarray:
    """Symmetric binary adjacency (no self loops)."""
    a = np.zeros((joints, joints))
    for i, j in pairs:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a


def normalized_adjacency(adj: np.ndarray, self_loops: bool = True) -> np.ndarray:
    """Symmetric degree normalization D^{-1/2} (A [+ I]) D^{-1/2}."""
    a = np.asarray(adj, dtype=float)
    if self_loops:
        a = a + np.eye(a.shape[0])
    deg = a.sum(axis=1)
    with np.errstate(divide="ignore"):
        d = 1.0 / np.sqrt(deg)
    d[~np.isfinite(d)] = 0.0
    return (a * d[:, None]) * d[None, :]


def partition_adjacency(pairs: list[tuple[int, int]], joints: int,
                        center: int = 0) -> list[np.ndarray]:
    """Split the physical graph into root / centripetal / centrifugal sets.

    Root is the identity; the centripetal partition holds edges pointing to
    nodes closer to ``center`` (by hop distance), centrifugal the reverse.
    """
    adj = adjacency_from_pairs(pairs, joints)
    dist = _hop_distance(adj, center)
    root = np.eye(joints)
    inward = np.zeros((joints, joints))
    outward = np.zeros((joints, joints))
    for i in range(joints):
        for j in range(joints):
            if adj[i, j] == 0:
                continue
            if dist[j] < dist[i]:
                inward[i, j] = 1.0
            elif dist[j] > dist[i]:
                outward[i, j] = 1.0
            else:
                root[i, j] = 1.0
    return [root, inward, outward]


def _hop_distance(adj: np.ndarray, source: int) -> np.ndarray:
    n = adj.shape[0]
    dist = np.full(n, np.inf)
    dist[source] = 0
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for v in np.nonzero(adj[u])[0]:
                if dist[v] == np.inf:
                    dist[v] = d
                    nxt.append(int(v))
        frontier = nxt
    return dist
