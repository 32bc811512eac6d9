"""Information-theoretic distillation losses built on the autodiff ops.

All Gram matrices are linear-kernel Grams of unit-norm rows, trace
normalised before any Frobenius norm is taken. Order-2 entropies are
expressed through ``-log2 ||G||_F^2`` so no eigendecomposition sits on the
gradient path.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ShapeError

DEFAULT_LAMBDA1 = 1.0
DEFAULT_LAMBDA2 = 0.5


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ContractError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class LossBreakdown:
    l_r: float
    l_d: float
    l_task: float
    l_info: float
    l_total: float
    lambda1: float
    lambda2: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def row_gram(rows) -> ad.Node:
    """Trace-normalised linear Gram of the rows of a 2-D node."""
    rows = ad.as_node(rows)
    return ad.trace_normalize(ad.matmul(rows, ad.transpose(rows)))


def feature_gram(z) -> ad.Node:
    """[B, ...] features -> flatten, row-normalise, trace-normalised Gram."""
    z = ad.as_node(z)
    flat = ad.reshape(z, (z.shape[0], -1))
    return row_gram(ad.l2norm_rows(flat))


def log2_frob(g) -> ad.Node:
    return ad.log2_scalar(ad.frobenius_sq(g))


def _check_batch(B: int) -> None:
    if B < 2:
        raise ContractError(
            f"information losses need a batch of at least 2 samples, got B={B}; "
            "a 1x1 unit-trace Gram makes every term identically zero"
        )


def loss_r(z_i_T, z_m_T, r_T) -> ad.Node:
    """Compression loss: -log2||G_r||^2 + log2||G_i o G_m o G_r / tr||^2."""
    z_i_T, z_m_T, r_T = ad.as_node(z_i_T), ad.as_node(z_m_T), ad.as_node(r_T)
    B = r_T.shape[0]
    if z_i_T.shape[0] != B or z_m_T.shape[0] != B:
        raise ShapeError("teacher features and relation output disagree on batch size")
    _check_batch(B)
    g_i = feature_gram(z_i_T)
    g_m = feature_gram(z_m_T)
    g_r = row_gram(r_T)
    g_imr = ad.trace_normalize(ad.hadamard(g_i, g_m, g_r))
    return ad.add(ad.scale(log2_frob(g_r), -1.0), log2_frob(g_imr))


def loss_d(r_T, r_S) -> ad.Node:
    """Distillation loss: log2||G_T||^2 + log2||G_S||^2 - log2||G_T o G_S / tr||^2."""
    r_T, r_S = ad.as_node(r_T), ad.as_node(r_S)
    if r_T.shape[0] != r_S.shape[0]:
        raise ShapeError(f"teacher batch {r_T.shape[0]} != student batch {r_S.shape[0]}")
    _check_batch(r_T.shape[0])
    g_t = row_gram(r_T)
    g_s = row_gram(r_S)
    g_ts = ad.trace_normalize(ad.hadamard(g_t, g_s))
    return ad.add(ad.add(log2_frob(g_t), log2_frob(g_s)), ad.scale(log2_frob(g_ts), -1.0))


def loss_info(l_r, l_d, weights: LossWeights = LossWeights()) -> ad.Node:
    return ad.add(ad.scale(l_r, weights.lambda1), ad.scale(l_d, weights.lambda2))


def toy_structure_loss(pred_logits, target) -> ad.Node:
    """Mean BCE-with-logits plus a +1-smoothed soft-IoU term averaged over the batch."""
    pred = ad.as_node(pred_logits)
    t = np.asarray(target.value if isinstance(target, ad.Node) else target, dtype=np.float64)
    if pred.shape != t.shape or pred.value.ndim != 2:
        raise ShapeError(f"pred {pred.shape} and target {t.shape} must be equal [B, K] shapes")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise ContractError("target must be binary (0/1)")
    tc = ad.constant(t)

    # softplus(x) - x*t == -[t log sigmoid(x) + (1-t) log(1 - sigmoid(x))]
    bce = ad.mean(ad.add(ad.softplus(pred), ad.scale(ad.mul_elementwise(pred, tc), -1.0)))

    p = ad.sigmoid(pred)
    inter = ad.sum_(ad.mul_elementwise(p, tc), axis=1)
    p_sum = ad.sum_(p, axis=1)
    t_sum = t.sum(axis=1)
    union = ad.add(ad.add(p_sum, ad.scale(inter, -1.0)), t_sum + 1.0)
    iou = ad.divide(ad.add(inter, 1.0), union)
    soft_iou = ad.add(ad.scale(ad.mean(iou), -1.0), 1.0)
    return ad.add(bce, soft_iou)


def breakdown(l_r: float, l_d: float, l_task: float, weights: LossWeights) -> LossBreakdown:
    l_info = weights.lambda1 * l_r + weights.lambda2 * l_d
    return LossBreakdown(
        l_r=l_r,
        l_d=l_d,
        l_task=l_task,
        l_info=l_info,
        l_total=l_task + l_info,
        lambda1=weights.lambda1,
        lambda2=weights.lambda2,
    )
