"""Pseudo-triplet mining: nearest unlabeled neighbor per labeled-triplet role.

Searches only the current unlabeled batch (full-pool search is deliberately
out of scope), has no randomness, and treats the argmin as a constant index
during differentiation: gradients reach only the selected rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class PseudoTriplet:
    """Row indices into the unlabeled batch's embedding matrix."""

    idx_a: int
    idx_p: int
    idx_n: int


def nearest_indices(queries, keys) -> np.ndarray:
    """Index of the Euclidean-nearest key row for each query row.

    Exact ties break toward the lowest index.
    """
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1]:
        raise ShapeError(f"queries {q.shape} and keys {k.shape} must be (·, D) with equal D")
    if k.shape[0] == 0:
        raise ParameterError("keys must contain at least one row")
    return np.argmin(kernels.pairwise_sqdist(q, k), axis=1)


def assemble_pseudo_triplets(phi_a, phi_p, phi_n, unlabeled):
    """Map each labeled triplet onto its nearest unlabeled rows.

    Candidates whose three roles do not land on pairwise-distinct rows are
    dropped (a collided triplet carries no compatibility signal); the drop
    count is returned alongside the surviving triplets.
    """
    a = np.asarray(phi_a, dtype=np.float64)
    p = np.asarray(phi_p, dtype=np.float64)
    n = np.asarray(phi_n, dtype=np.float64)
    u = np.asarray(unlabeled, dtype=np.float64)
    if a.shape != p.shape or a.shape != n.shape:
        raise ShapeError("labeled triplet blocks must be row-aligned with equal shapes")
    if u.ndim != 2 or u.shape[1] != a.shape[1]:
        raise ShapeError(f"unlabeled matrix {u.shape} must be (n, {a.shape[1]})")
    if u.shape[0] < 3:
        raise ParameterError(f"need >= 3 unlabeled rows to mine triplets, got {u.shape[0]}")

    idx = nearest_indices(np.concatenate([a, p, n], axis=0), u)
    rows = a.shape[0]
    ia, ip, in_ = idx[:rows], idx[rows : 2 * rows], idx[2 * rows :]

    triplets = []
    dropped = 0
    for t in range(rows):
        if ia[t] == ip[t] or ia[t] == in_[t] or ip[t] == in_[t]:
            dropped += 1
        else:
            triplets.append(PseudoTriplet(int(ia[t]), int(ip[t]), int(in_[t])))
    return triplets, dropped
