"""Attention-based relation module between image embeddings and mask tokens.

For every batch element b::

    Q = LN_m(z_m[b]) W_Q^T + b_Q                      # [N, D]
    K = LN_i(z_i[b]) W_K^T + b_K                      # [P, D]
    S = Q K^T / sqrt(D) + z_m[b] z_i[b]^T             # [N, P], residual on raw inputs
    r[b] = vec(S) / ||vec(S)||_2                      # [N * P]

The teacher and the student call :func:`relation_forward` with the *same*
parameter object, so gradients from both sides accumulate on one set of
leaves.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .prng import make_rng
from .tensor import as_tensor, load_tensor, save_tensor

PARAM_STREAM = 1 << 62


@dataclass
class RelationParams:
    W_Q: object
    b_Q: object
    W_K: object
    b_K: object
    ln_m_gain: object
    ln_m_bias: object
    ln_i_gain: object
    ln_i_bias: object

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def D(self) -> int:
        return int(np.shape(_value(self.W_Q))[0])

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.array(_value(getattr(self, k)), dtype=np.float64) for k in self.names()}

    def as_leaves(self, requires_grad: bool = True) -> "RelationParams":
        """Fresh autodiff leaves holding copies of the current values."""
        return RelationParams(
            **{k: ad.leaf(v, requires_grad=requires_grad, name=k) for k, v in self.arrays().items()}
        )

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "RelationParams":
        return replace(self, **{k: as_tensor(v) for k, v in arrays.items()})


def _value(x):
    return x.value if isinstance(x, ad.Node) else x


def init_params(D: int, seed: int) -> RelationParams:
    """Uniform(-sqrt(6/2D), +sqrt(6/2D)) projections, zero biases, unit LN gains."""
    if D < 1:
        raise ShapeError(f"D must be >= 1, got {D}")
    rng = make_rng(seed, PARAM_STREAM)
    bound = math.sqrt(6.0 / (2 * D))
    return RelationParams(
        W_Q=rng.uniform(-bound, bound, size=(D, D)),
        b_Q=np.zeros(D),
        W_K=rng.uniform(-bound, bound, size=(D, D)),
        b_K=np.zeros(D),
        ln_m_gain=np.ones(D),
        ln_m_bias=np.zeros(D),
        ln_i_gain=np.ones(D),
        ln_i_bias=np.zeros(D),
    )


def relation_forward(params: RelationParams, z_i, z_m) -> ad.Node:
    """Map z_i [B, P, D] and z_m [B, N, D] to unit-norm relation rows [B, N*P]."""
    z_i, z_m = ad.as_node(z_i), ad.as_node(z_m)
    if z_i.value.ndim != 3 or z_m.value.ndim != 3:
        raise ShapeError(f"expected z_i [B,P,D] and z_m [B,N,D], got {z_i.shape} and {z_m.shape}")
    B, P, D = z_i.shape
    Bm, N, Dm = z_m.shape
    if B != Bm or D != Dm:
        raise ShapeError(f"z_i {z_i.shape} and z_m {z_m.shape} disagree on B or D")
    if params.D != D:
        raise ShapeError(f"parameters are for D={params.D}, inputs have D={D}")

    p = params
    q = ad.add(ad.matmul(ad.layernorm(z_m, p.ln_m_gain, p.ln_m_bias), ad.transpose(p.W_Q)), p.b_Q)
    k = ad.add(ad.matmul(ad.layernorm(z_i, p.ln_i_gain, p.ln_i_bias), ad.transpose(p.W_K)), p.b_K)
    attn = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(D))
    residual = ad.matmul(z_m, ad.transpose(z_i))
    scores = ad.add(attn, residual)
    return ad.l2norm_rows(ad.reshape(scores, (B, N * P)))


def save_params(params: RelationParams, directory: str | os.PathLike, seed: int | None = None) -> None:
    """One NPY file per field plus ``manifest.json`` (field -> file, D, seed)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, arr in params.arrays().items():
        files[name] = f"{name}.npy"
        save_tensor(arr, out / files[name])
    manifest = {"fields": files, "D": params.D, "seed": seed}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_params(directory: str | os.PathLike) -> tuple[RelationParams, dict]:
    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text())
    missing = set(RelationParams.names()) - set(manifest["fields"])
    if missing:
        raise ShapeError(f"manifest lacks fields {sorted(missing)}")
    arrays = {k: load_tensor(src / manifest["fields"][k]) for k in RelationParams.names()}
    params = RelationParams(**arrays)
    if params.D != manifest["D"]:
        raise ShapeError(f"manifest D={manifest['D']} but W_Q has D={params.D}")
    return params, manifest
