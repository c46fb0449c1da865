"""Triplet margin loss, the consistency variant, and the combined objective.

The triplet loss is mean_i max(0, d(a_i, p_i) - d(a_i, n_i) + m) with d the
plain (not squared) Euclidean distance; the mean reduction keeps the lambda
weights batch-size independent.  The combined objective is

    L = L_labeled + lambda_ss * L_consistency + lambda_pseudo * L_pseudo
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, ShapeError


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.4
    lambda_ss: float = 0.1
    lambda_pseudo: float = 1.0

    def __post_init__(self):
        if self.margin <= 0:
            raise ParameterError(f"margin must be > 0, got {self.margin}")
        if self.lambda_ss < 0 or self.lambda_pseudo < 0:
            raise ParameterError("lambda weights must be >= 0")


def _check_rows(phi_a, phi_p, phi_n):
    a = np.asarray(phi_a, dtype=np.float64)
    p = np.asarray(phi_p, dtype=np.float64)
    n = np.asarray(phi_n, dtype=np.float64)
    if a.ndim != 2 or a.shape != p.shape or a.shape != n.shape:
        raise ShapeError(
            f"triplet embedding blocks must share one (rows, dim) shape, got "
            f"{a.shape}, {p.shape}, {n.shape}"
        )
    return a, p, n


def triplet_margin_loss(phi_a, phi_p, phi_n, margin: float) -> float:
    """Mean hinge over row-aligned anchor/positive/negative embeddings."""
    a, p, n = _check_rows(phi_a, phi_p, phi_n)
    d_ap = np.linalg.norm(a - p, axis=1)
    d_an = np.linalg.norm(a - n, axis=1)
    return float(np.maximum(0.0, d_ap - d_an + margin).mean())


def triplet_margin_loss_grad(phi_a, phi_p, phi_n, margin: float):
    """Loss plus gradients w.r.t. the three embedding blocks.

    The hinge is flat where the margin is satisfied; at d == 0 the distance
    gradient is taken as 0 (the subgradient convention).
    """
    a, p, n = _check_rows(phi_a, phi_p, phi_n)
    rows = a.shape[0]
    diff_ap = a - p
    diff_an = a - n
    d_ap = np.linalg.norm(diff_ap, axis=1)
    d_an = np.linalg.norm(diff_an, axis=1)
    hinge = d_ap - d_an + margin
    active = hinge > 0
    loss = float(np.maximum(0.0, hinge).mean())

    with np.errstate(invalid="ignore", divide="ignore"):
        u_ap = np.where(d_ap[:, None] > 0, diff_ap / d_ap[:, None], 0.0)
        u_an = np.where(d_an[:, None] > 0, diff_an / d_an[:, None], 0.0)
    scale = active[:, None] / rows
    ga = scale * (u_ap - u_an)
    gp = -scale * u_ap
    gn = scale * u_an
    return loss, ga, gp, gn


def consistency_loss(phi_orig, phi_shape, phi_appear, margin: float) -> float:
    """Triplet loss with the original image as anchor, its shape transform as
    positive and its appearance transform as negative."""
    return triplet_margin_loss(phi_orig, phi_shape, phi_appear, margin)


def consistency_loss_grad(phi_orig, phi_shape, phi_appear, margin: float):
    return triplet_margin_loss_grad(phi_orig, phi_shape, phi_appear, margin)


def combined_objective(loss_labeled: float, loss_ss: float, loss_pseudo: float,
                       cfg: LossConfig) -> float:
    for name, v in (
        ("loss_labeled", loss_labeled),
        ("loss_ss", loss_ss),
        ("loss_pseudo", loss_pseudo),
    ):
        if not np.isfinite(v):
            raise NumericError(f"{name} is non-finite: {v}")
    return float(loss_labeled + cfg.lambda_ss * loss_ss + cfg.lambda_pseudo * loss_pseudo)
