"""Desk-scale teacher/student harness.

Synthetic Gaussian features stand in for a frozen backbone ("teacher"); the
student sees the same features plus a small perturbation and passes them
through a residual bottleneck adapter. Both sides feed one shared relation
module, and a single Adam optimiser updates the adapter and the relation
parameters on ``task + lambda1 * L_r + lambda2 * L_d``.

The synthetic dataset is a fixed pool of ``BATCHES_PER_EPOCH`` batches that
training cycles through, so the frozen teacher features exist (read-only)
for the whole run. Batch k is drawn from ``prng.make_rng(seed, k)``
(Philox-4x64); fixed streams draw the adapter init and the probe direction.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .entropy import mutual_information
from .errors import ContractError, DegenerateInputError, NumericError
from .losses import LossWeights, breakdown, loss_d, loss_info, loss_r, toy_structure_loss
from .prng import make_rng
from .relation import RelationParams, init_params, relation_forward

ADAPTER_STREAM = (1 << 62) + 1
PROBE_STREAM = (1 << 62) + 2
GRADCHECK_STREAM = (1 << 62) + 3

BATCHES_PER_EPOCH = 20

REPORT_COLUMNS = ("step", "lr", "l_r", "l_d", "l_task", "l_total", "mi_ts")


@dataclass
class TrainConfig:
    seed: int = 42
    steps: int = 300
    B: int = 4
    N: int = 2
    P: int = 16
    D: int = 8
    lr_init: float = 2e-4
    lr_final: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    task_weight: float = 1.0

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.steps < 1:
            raise ContractError("steps must be >= 1")
        if self.B < 2:
            raise ContractError("B must be >= 2")
        if min(self.N, self.P, self.D) < 1:
            raise ContractError("N, P and D must be >= 1")
        if not 0 < self.lr_final <= self.lr_init:
            raise ContractError("need 0 < lr_final <= lr_init")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ContractError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ContractError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StudentAdapter:
    A_down: np.ndarray
    A_up: np.ndarray


def adapter_width(D: int) -> int:
    return max(1, math.ceil(D / 4))


def init_adapter(D: int, seed: int) -> StudentAdapter:
    """Down-projection uniform(+-sqrt(6/(D+d))); up-projection zero so the adapter starts as identity."""
    d = adapter_width(D)
    bound = math.sqrt(6.0 / (D + d))
    rng = make_rng(seed, ADAPTER_STREAM)
    return StudentAdapter(A_down=rng.uniform(-bound, bound, size=(D, d)), A_up=np.zeros((d, D)))


def apply_adapter(z, a_down, a_up) -> ad.Node:
    """z + GELU(z A_down) A_up, applied along the last axis."""
    return ad.add(z, ad.matmul(ad.gelu(ad.matmul(z, a_down)), a_up))


@dataclass(frozen=True)
class Batch:
    z_i_T: np.ndarray
    z_m_T: np.ndarray
    z_i_base: np.ndarray
    z_m_base: np.ndarray
    target: np.ndarray
    probe: np.ndarray


def probe_direction(config: TrainConfig) -> np.ndarray:
    w = make_rng(config.seed, PROBE_STREAM).standard_normal(config.D)
    return w / np.linalg.norm(w)


def synth_batch(config: TrainConfig, step_seed: int, sigma: float = 0.1) -> Batch:
    rng = make_rng(config.seed, step_seed)
    B, N, P, D = config.B, config.N, config.P, config.D
    z_i = rng.standard_normal((B, P, D))
    z_m = rng.standard_normal((B, N, D))
    z_i_base = z_i + sigma * rng.standard_normal((B, P, D))
    z_m_base = z_m + sigma * rng.standard_normal((B, N, D))
    w = probe_direction(config)
    proj = z_m @ w
    # thresholding at the median balances the two classes
    target = (proj > np.median(proj)).astype(np.float64)
    for arr in (z_i, z_m, z_i_base, z_m_base):
        arr.setflags(write=False)
    return Batch(z_i, z_m, z_i_base, z_m_base, target, w)


def make_dataset(config: TrainConfig) -> list[Batch]:
    return [synth_batch(config, k) for k in range(BATCHES_PER_EPOCH)]


def cosine_lr(step: int, total_steps: int, lr_init: float, lr_final: float) -> float:
    if not 0 <= step < total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps})")
    if total_steps == 1:
        return lr_init
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * step / (total_steps - 1)))


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
    """One bias-corrected Adam update. Returns new (params, state); inputs are not mutated."""
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ContractError("params, grads and state must have the same keys")
    b1, b2 = betas
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ContractError(f"shape mismatch for {k}: param {p.shape}, grad {g.shape}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


@dataclass
class StepGraph:
    """Autodiff nodes for one step of the objective."""

    relation: RelationParams
    a_down: ad.Node
    a_up: ad.Node
    z_i_T: ad.Node
    z_m_T: ad.Node
    z_i_S: ad.Node
    z_m_S: ad.Node
    r_T: ad.Node
    r_S: ad.Node
    pred: ad.Node
    l_r: ad.Node
    l_d: ad.Node
    l_task: ad.Node
    l_info: ad.Node
    l_total: ad.Node


def build_step(
    relation: RelationParams, adapter: StudentAdapter, batch: Batch, config: TrainConfig
) -> StepGraph:
    """Forward both sides and assemble the loss, mirroring one training iteration.

    ``relation`` should already hold autodiff leaves; the teacher and the
    student relation outputs are computed with this one object.
    """
    B, N = config.B, config.N
    a_down = ad.leaf(adapter.A_down, name="A_down")
    a_up = ad.leaf(adapter.A_up, name="A_up")
    z_i_T = ad.constant(batch.z_i_T, name="z_i_T")
    z_m_T = ad.constant(batch.z_m_T, name="z_m_T")
    z_i_S = apply_adapter(ad.constant(batch.z_i_base), a_down, a_up)
    z_m_S = apply_adapter(ad.constant(batch.z_m_base), a_down, a_up)

    pred = ad.reshape(ad.matmul(z_m_S, ad.constant(batch.probe[:, None])), (B, N))
    l_task = ad.scale(toy_structure_loss(pred, batch.target), config.task_weight)

    student_relation = relation  # shared parameters, not a copy
    r_T = relation_forward(relation, z_i_T, z_m_T)
    r_S = relation_forward(student_relation, z_i_S, z_m_S)
    l_r = loss_r(z_i_T, z_m_T, r_T)
    l_d = loss_d(r_T, r_S)
    l_info = loss_info(l_r, l_d, config.weights)
    l_total = ad.add(l_task, l_info)
    return StepGraph(relation, a_down, a_up, z_i_T, z_m_T, z_i_S, z_m_S, r_T, r_S, pred, l_r, l_d, l_task, l_info, l_total)


def relation_mi(r_T: np.ndarray, r_S: np.ndarray) -> float:
    """Order-2 mutual information between the trace-normalised Grams of two relation outputs."""
    g_t = r_T @ r_T.T
    g_s = r_S @ r_S.T
    return mutual_information(g_t / np.trace(g_t), g_s / np.trace(g_s), 2.0)


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    relation: RelationParams | None = None
    adapter: StudentAdapter | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in self.rows:
            w.writerow([row["step"]] + [repr(float(row[c])) for c in REPORT_COLUMNS[1:]])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def summary(self) -> dict:
        first, last = self.rows[0], self.rows[-1]
        return {
            "steps": len(self.rows),
            "first_l_total": first["l_total"],
            "last_l_total": last["l_total"],
            "first_mi_ts": first["mi_ts"],
            "last_mi_ts": last["mi_ts"],
        }


class TrainingAborted(NumericError):
    def __init__(self, message: str, report: TrainReport):
        super().__init__(message)
        self.report = report


def run_toy_training(config: TrainConfig, dataset: list[Batch] | None = None) -> TrainReport:
    """Run ``config.steps`` optimisation steps, cycling through ``dataset`` (default :func:`make_dataset`)."""
    if dataset is None:
        dataset = make_dataset(config)
    relation = init_params(config.D, config.seed)
    adapter = init_adapter(config.D, config.seed)
    rel_names = RelationParams.names()
    trainables = {**relation.arrays(), "A_down": adapter.A_down, "A_up": adapter.A_up}
    state = AdamState.zeros_like(trainables)
    report = TrainReport()

    for step in range(config.steps):
        batch = dataset[step % len(dataset)]
        leaves = RelationParams(**{k: ad.leaf(trainables[k], name=k) for k in rel_names})
        try:
            g = build_step(leaves, StudentAdapter(trainables["A_down"], trainables["A_up"]), batch, config)
        except (DegenerateInputError, NumericError) as exc:
            raise TrainingAborted(f"step {step + 1} failed: {exc}", report) from exc

        values = {k: g_node.item() for k, g_node in (("l_r", g.l_r), ("l_d", g.l_d), ("l_task", g.l_task))}
        bd = breakdown(values["l_r"], values["l_d"], values["l_task"], config.weights)
        lr = cosine_lr(step, config.steps, config.lr_init, config.lr_final)
        row = {
            "step": step + 1,
            "lr": lr,
            "l_r": bd.l_r,
            "l_d": bd.l_d,
            "l_task": bd.l_task,
            "l_total": g.l_total.item(),
            "mi_ts": relation_mi(g.r_T.value, g.r_S.value),
        }
        if not all(math.isfinite(row[c]) for c in REPORT_COLUMNS[1:]):
            raise TrainingAborted(f"non-finite loss at step {step + 1}: {row}", report)
        report.rows.append(row)

        grads = ad.backward(g.l_total)
        named = {k: getattr(leaves, k) for k in rel_names}
        named.update(A_down=g.a_down, A_up=g.a_up)
        grad_arrays = {k: grads.get(n, np.zeros_like(n.value)) for k, n in named.items()}
        trainables, state = adam_step(trainables, grad_arrays, state, lr, (config.beta1, config.beta2), config.eps)

    report.relation = RelationParams(**{k: trainables[k] for k in rel_names})
    report.adapter = StudentAdapter(trainables["A_down"], trainables["A_up"])
    return report


# ---------------------------------------------------------------- gradient check


@dataclass(frozen=True)
class GradcheckRow:
    group: str
    max_rel_error: float | None
    status: str


GRADCHECK_TOL = 1e-4
GRADCHECK_STEP = 1e-5


def _fd_group(fn, arrays: dict, analytic: dict, step: float) -> float:
    """Max relative error over every coordinate of every array in ``arrays``."""
    worst = 0.0
    for name, base in arrays.items():
        base = np.array(base, dtype=np.float64)

        def f(x, name=name):
            return fn({**arrays, name: x})

        worst = max(worst, ad.finite_diff_check(f, base, step=step, grad=analytic[name]))
    return worst


def gradcheck_all(seed: int = 0, corrupt: bool = False, step: float = GRADCHECK_STEP) -> list[GradcheckRow]:
    """Central-difference check of every analytic gradient in the objective at B=3, N=2, P=4, D=4.

    ``corrupt`` scales the analytic gradients by 1.01 so the failure path can be exercised.
    """
    config = TrainConfig(seed=seed, steps=1, B=3, N=2, P=4, D=4)
    batch = synth_batch(config, 0)
    base_rel = init_params(config.D, seed)
    rng = make_rng(seed, GRADCHECK_STREAM)
    rel_arrays = base_rel.arrays()
    # perturb away from the symmetric init so no gradient is trivially zero
    for k in rel_arrays:
        rel_arrays[k] = rel_arrays[k] + 0.1 * rng.standard_normal(rel_arrays[k].shape)
    adapter = init_adapter(config.D, seed)
    adapter = StudentAdapter(adapter.A_down, 0.1 * rng.standard_normal(adapter.A_up.shape))
    zi_S0 = apply_adapter(batch.z_i_base, adapter.A_down, adapter.A_up).value
    zm_S0 = apply_adapter(batch.z_m_base, adapter.A_down, adapter.A_up).value
    logits0 = rng.standard_normal((config.B, config.N))
    fudge = 1.01 if corrupt else 1.0
    rows: list[GradcheckRow] = []

    def record(group, err):
        rows.append(GradcheckRow(group, err, "ok" if err < GRADCHECK_TOL else "FAIL"))

    def rel_from(arrs, grad=True):
        return RelationParams(**{k: (ad.leaf(v, name=k) if grad else v) for k, v in arrs.items()})

    # L_r w.r.t. relation parameters; teacher features are constants
    def f_lr(arrs):
        rel = rel_from({**rel_arrays, **arrs}, grad=False)
        return loss_r(batch.z_i_T, batch.z_m_T, relation_forward(rel, batch.z_i_T, batch.z_m_T)).item()

    rel = rel_from(rel_arrays)
    z_i_T = ad.constant(batch.z_i_T)
    z_m_T = ad.constant(batch.z_m_T)
    out = loss_r(z_i_T, z_m_T, relation_forward(rel, z_i_T, z_m_T))
    grads = ad.backward(out)
    analytic = {k: fudge * grads[getattr(rel, k)] for k in rel_arrays}
    record("L_r/relation", _fd_group(f_lr, rel_arrays, analytic, step))
    teacher_absent = z_i_T not in grads and z_m_T not in grads

    # L_d w.r.t. relation parameters and student features
    def f_ld(arrs):
        merged = {**rel_arrays, "z_i_S": zi_S0, "z_m_S": zm_S0, **arrs}
        rel = rel_from({k: merged[k] for k in rel_arrays}, grad=False)
        r_T = relation_forward(rel, batch.z_i_T, batch.z_m_T)
        r_S = relation_forward(rel, merged["z_i_S"], merged["z_m_S"])
        return loss_d(r_T, r_S).item()

    rel = rel_from(rel_arrays)
    zi_S, zm_S = ad.leaf(zi_S0), ad.leaf(zm_S0)
    z_i_T = ad.constant(batch.z_i_T)
    z_m_T = ad.constant(batch.z_m_T)
    out = loss_d(relation_forward(rel, z_i_T, z_m_T), relation_forward(rel, zi_S, zm_S))
    grads = ad.backward(out)
    analytic = {k: fudge * grads[getattr(rel, k)] for k in rel_arrays}
    record("L_d/relation", _fd_group(f_ld, rel_arrays, analytic, step))
    record(
        "L_d/student_features",
        _fd_group(
            f_ld,
            {"z_i_S": zi_S0, "z_m_S": zm_S0},
            {"z_i_S": fudge * grads[zi_S], "z_m_S": fudge * grads[zm_S]},
            step,
        ),
    )
    teacher_absent = teacher_absent and z_i_T not in grads and z_m_T not in grads

    # task loss w.r.t. logits
    def f_task(arrs):
        return toy_structure_loss(arrs["logits"], batch.target).item()

    lg = ad.leaf(logits0)
    grads = ad.backward(toy_structure_loss(lg, batch.target))
    record("task/logits", _fd_group(f_task, {"logits": logits0}, {"logits": fudge * grads[lg]}, step))

    # full objective w.r.t. adapter parameters
    def f_total(arrs):
        rel = rel_from(rel_arrays, grad=False)
        ada = StudentAdapter(arrs["A_down"], arrs["A_up"])
        return build_step(rel, ada, batch, config).l_total.item()

    rel = rel_from(rel_arrays)
    g = build_step(rel, adapter, batch, config)
    grads = ad.backward(g.l_total)
    ada_arrays = {"A_down": adapter.A_down, "A_up": adapter.A_up}
    analytic = {"A_down": fudge * grads[g.a_down], "A_up": fudge * grads[g.a_up]}
    record("L_total/adapter", _fd_group(f_total, ada_arrays, analytic, step))
    teacher_absent = teacher_absent and g.z_i_T not in grads and g.z_m_T not in grads

    rows.append(GradcheckRow("teacher_features", None, "no gradient" if teacher_absent else "FAIL"))
    return rows


def gradcheck_passed(rows: list[GradcheckRow]) -> bool:
    return all(r.status != "FAIL" for r in rows)


def gradcheck_csv(rows: list[GradcheckRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("group", "max_rel_error", "status"))
    for r in rows:
        w.writerow((r.group, "" if r.max_rel_error is None else repr(r.max_rel_error), r.status))
    return buf.getvalue()


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean; entry i averages x[max(0, i-window+1) : i+1]."""
    x = np.asarray(x, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)
