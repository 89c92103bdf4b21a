"""Bi-level training: weighted inner steps scored by a one-step lookahead.

A training step has three phases. Phase A records the weighted
multi-task loss at the current learner parameters w and takes a virtual
SGD step to w'. The meta phase measures the primary-task loss at w' and
pushes its improvement back into the weighting net (and hint net) with
an analytic chain rule instead of differentiating through the unrolled
update:

    d L_meta / d theta = -lr_inner * sum_t (1/|B_t|) sum_i
                          (g_meta . g_i) * d V(xi_i; theta) / d theta

The per-example dot products g_meta . g_i never materialize g_i: they
are the forward-mode tangents of the per-example losses along direction
g_meta, read off the phase-A tape in one sweep. Phase B then re-runs the
forward (same neighbor samples as phase A) under the updated weights and
applies a real optimizer step to w.

The hint-net gradient uses the same tangents. With mixing
m_i = a_i f_i + (1 - a_i) h_i and a_i, h_i functions of theta_H only,

    g_meta . g_i = a_i * l'(m_i) . s_i,   s_i = tangent of f_i,

which is a scalar we can rebuild symbolically on a fresh tape (f_i and
s_i held constant) and differentiate w.r.t. theta_H exactly.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .aux_tasks import TaskRegistry, TaskSpec
from .heads import task_loss_vector
from .optim import AdamState, virtual_sgd
from .weighting import attenuation, hint_logits, weight_examples

SCHEMES = ("vanilla", "reweight-only", "multitask", "selar", "selar-hint")


def scheme_flags(scheme: str) -> tuple[bool, bool, bool]:
    """(use_aux, use_meta, use_hint) for a scheme name."""
    table = {
        "vanilla": (False, False, False),
        "multitask": (True, False, False),
        "reweight-only": (False, True, False),
        "selar": (True, True, False),
        "selar-hint": (True, True, True),
    }
    if scheme not in table:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    return table[scheme]


@dataclass
class TaskBatch:
    """One minibatch of one task. ``items`` is opaque to the engine;
    only the model interprets it (node ids, pairs, raw features...)."""

    spec: TaskSpec
    items: object
    labels: np.ndarray
    signs: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class TaskRecord:
    """Per-task tensors produced by one recorded forward pass."""

    batch: TaskBatch
    pred: Tensor
    raw_loss: Tensor
    embeds: tuple | None = None
    weights: np.ndarray | None = None
    mix: np.ndarray | None = None
    hint_pred: np.ndarray | None = None
    loss: Tensor | None = None


@dataclass(frozen=True)
class MetaBatchPlan:
    """Fold rotation for meta cross-validation over the primary pool."""

    folds: tuple

    def __post_init__(self):
        if len(self.folds) < 1 or any(len(f) == 0 for f in self.folds):
            raise ValueError("plan needs at least one non-empty fold")

    @property
    def num_folds(self) -> int:
        return len(self.folds)

    def meta_fold(self, step: int) -> int:
        return step % len(self.folds)

    def meta_indices(self, step: int) -> np.ndarray:
        return self.folds[self.meta_fold(step)]

    def train_indices(self, step: int) -> np.ndarray:
        # A single fold doubles as both pools: holding data out of the
        # inner step is pointless when there is nothing to rotate.
        if len(self.folds) == 1:
            return self.folds[0]
        k = self.meta_fold(step)
        return np.concatenate([f for j, f in enumerate(self.folds) if j != k])


@dataclass
class TrainState:
    w: dict[str, Tensor]
    opt_w: AdamState
    theta: dict[str, Tensor] | None = None
    opt_theta: AdamState | None = None
    theta_h: dict[str, Tensor] | None = None
    opt_hint: AdamState | None = None
    step: int = 0


@dataclass(frozen=True)
class TrainSettings:
    lr: float = 1e-2
    lr_inner: float = 1e-2
    lr_meta: float = 1e-3
    gamma: float = 0.5
    use_meta: bool = True
    use_hint: bool = False
    force_unit_weights: bool = False
    force_unit_hint: bool = False


def _mixed_logits(pred: Tensor, a: np.ndarray, hint: np.ndarray) -> Tensor:
    if pred.ndim == 2:
        a = a[:, None]
    return ad.add(ad.mul(pred, Tensor(a)), Tensor((1.0 - a) * hint))


def forward_records(
    tape: ad.Tape,
    model,
    w: dict,
    batches: list[TaskBatch],
    rng,
    theta: dict | None = None,
    theta_h: dict | None = None,
    gamma: float = 0.5,
    use_hint: bool = False,
    force_unit_weights: bool = False,
    force_unit_hint: bool = False,
) -> list[TaskRecord]:
    """Record all task forwards on ``tape`` and attach weights/mixing.

    Weights and hint constants are evaluated between the two recording
    windows, outside any tape, so they enter the learner's graph as
    plain numbers: that is the detachment the formulation requires.
    Must be called with no tape active.
    """
    assert ad.active_tape() is None, "forward_records manages its own tape windows"
    if not batches:
        raise ValueError("no task batches")
    if batches[0].spec.task_id != 0:
        raise ValueError("first batch must belong to the primary task (id 0)")
    if len(batches[0]) == 0:
        raise ValueError("empty batch for the primary task")

    recs = []
    with tape:
        for b in batches:
            store: dict = {}
            pred = model.predict(w, b, rng, embed_out=store)
            raw = task_loss_vector(b.spec, pred, b.labels)
            recs.append(TaskRecord(batch=b, pred=pred, raw_loss=raw, embeds=store.get("embeds")))

    for r in recs:
        ids = np.full(len(r.batch), r.batch.spec.task_id)
        if theta is None or force_unit_weights:
            r.weights = np.ones(len(r.batch))
        else:
            r.weights = weight_examples(theta, r.raw_loss.data, ids, r.batch.signs).data
        hinted = use_hint and theta_h is not None and r.batch.spec.task_id != 0 and not force_unit_hint
        if hinted:
            r.mix = attenuation(theta_h, r.raw_loss.data, ids, r.batch.signs, gamma).data
            r.hint_pred = hint_logits(theta_h, r.batch.spec, r.embeds).data

    with tape:
        for r in recs:
            if r.mix is None:
                r.loss = r.raw_loss
            else:
                mixed = _mixed_logits(r.pred, r.mix, r.hint_pred)
                r.loss = task_loss_vector(r.batch.spec, mixed, r.batch.labels)
    return recs


def weighted_loss_term(recs: list[TaskRecord]) -> Tensor:
    """Sum over tasks of the mean per-example weighted loss (on tape)."""
    return reduce(ad.add, [ad.mean(ad.mul(r.loss, Tensor(r.weights))) for r in recs])


def per_task_weighted(recs: list[TaskRecord]) -> dict[int, float]:
    return {r.batch.spec.task_id: float(np.mean(r.weights * r.loss.data)) for r in recs}


def weighted_train_loss(
    model,
    w: dict,
    batches: list[TaskBatch],
    rng,
    theta: dict | None = None,
    theta_h: dict | None = None,
    gamma: float = 0.5,
    use_hint: bool = False,
    force_unit_weights: bool = False,
    force_unit_hint: bool = False,
) -> tuple[float, dict[int, float]]:
    """The training objective value plus its per-task decomposition."""
    tape = ad.Tape()
    recs = forward_records(
        tape, model, w, batches, rng, theta, theta_h,
        gamma=gamma, use_hint=use_hint,
        force_unit_weights=force_unit_weights, force_unit_hint=force_unit_hint,
    )
    with tape:
        total = weighted_loss_term(recs)
    return float(total.data), per_task_weighted(recs)


@dataclass
class MetaStepDiag:
    """Side-channel values from one meta-gradient evaluation (for tests
    and reports; nothing downstream depends on them)."""

    meta_loss: float
    weights: dict[int, np.ndarray] = field(default_factory=dict)
    loss_tangents: dict[int, np.ndarray] = field(default_factory=dict)
    pred_tangents: dict[int, np.ndarray] = field(default_factory=dict)


def _hint_objective(recs, tans, theta_h, gamma) -> Tensor | None:
    """Rebuild sum_t mean_i V_i * (g_meta . g_i) as a function of theta_H.

    Constants from the recorded pass: learner logits f, their tangents s,
    labels, and the example weights V. Recomputed on the active tape:
    a = V_H(xi)^gamma and the hint logits h. For BCE,
    g_meta . g_i = a*(sigmoid(m) - y)*s; for CE the residual is
    softmax(m) - onehot(y), dotted with the logit tangents.
    """
    terms = []
    for r in recs:
        spec = r.batch.spec
        if spec.task_id == 0:
            continue
        n = len(r.batch)
        ids = np.full(n, spec.task_id)
        a = attenuation(theta_h, r.raw_loss.data, ids, r.batch.signs, gamma)
        hint = hint_logits(theta_h, spec, r.embeds)
        s = tans.of(r.pred)
        f_hat = r.pred.data
        if spec.head_kind == "pair-binary":
            one = Tensor(np.ones(n))
            m = ad.add(ad.mul(a, Tensor(f_hat)), ad.mul(ad.sub(one, a), hint))
            resid = ad.sub(ad.sigmoid(m), Tensor(np.asarray(r.batch.labels, dtype=np.float64)))
            psi = ad.mul(ad.mul(a, resid), Tensor(s))
        else:
            onehot = np.zeros_like(f_hat)
            onehot[np.arange(n), np.asarray(r.batch.labels, dtype=np.intp)] = 1.0
            a_col = ad.reshape(a, (n, 1))
            one = Tensor(np.ones((n, 1)))
            m = ad.add(ad.mul(a_col, Tensor(f_hat)), ad.mul(ad.sub(one, a_col), hint))
            resid = ad.sub(ad.softmax(m, axis=-1), Tensor(onehot))
            psi = ad.mul(a, ad.tensor_sum(ad.mul(resid, Tensor(s)), axis=1))
        terms.append(ad.mean(ad.mul(psi, Tensor(r.weights))))
    if not terms:
        return None
    return reduce(ad.add, terms)


def meta_gradient(
    model,
    w: dict,
    batches: list[TaskBatch],
    meta_batch: TaskBatch,
    lr_inner: float,
    theta: dict | None = None,
    theta_h: dict | None = None,
    gamma: float = 0.5,
    use_hint: bool = False,
    force_unit_weights: bool = False,
    force_unit_hint: bool = False,
    rng_train=None,
    rng_meta=None,
) -> tuple[dict | None, dict | None, MetaStepDiag]:
    """Gradients of the lookahead meta loss w.r.t. theta and theta_H.

    Returns (theta grads, hint grads, diagnostics); a grads dict is None
    when the corresponding net is absent or frozen by a force flag.
    """
    if len(meta_batch) == 0:
        raise ValueError("meta batch is empty")
    if meta_batch.spec.task_id != 0:
        raise ValueError("meta batch must hold primary-task examples")
    if rng_train is None:
        rng_train = np.random.default_rng(0)
    if rng_meta is None:
        rng_meta = np.random.default_rng(0)

    tape = ad.Tape()
    recs = forward_records(
        tape, model, w, batches, rng_train, theta, theta_h,
        gamma=gamma, use_hint=use_hint,
        force_unit_weights=force_unit_weights, force_unit_hint=force_unit_hint,
    )
    with tape:
        inner = weighted_loss_term(recs)
    g_inner = tape.backward(inner)
    w_prime = virtual_sgd(w, {k: g_inner.of(p) for k, p in w.items()}, lr_inner)

    with ad.Tape() as meta_tape:
        pred = model.predict(w_prime, meta_batch, rng_meta)
        meta_loss = ad.mean(task_loss_vector(meta_batch.spec, pred, meta_batch.labels))
    g_meta = meta_tape.backward(meta_loss)

    tans = tape.tangents({id(w[k]): g_meta.of(w_prime[k]) for k in w})
    diag = MetaStepDiag(meta_loss=float(meta_loss.data))
    for r in recs:
        tid = r.batch.spec.task_id
        diag.weights[tid] = r.weights
        diag.loss_tangents[tid] = tans.of(r.loss)
        diag.pred_tangents[tid] = tans.of(r.pred)

    theta_grads = None
    if theta is not None and not force_unit_weights:
        with ad.Tape() as wtape:
            terms = []
            for r in recs:
                ids = np.full(len(r.batch), r.batch.spec.task_id)
                v = weight_examples(theta, r.raw_loss.data, ids, r.batch.signs)
                terms.append(ad.mean(ad.mul(v, Tensor(diag.loss_tangents[r.batch.spec.task_id]))))
            objective = reduce(ad.add, terms)
        g_theta = wtape.backward(objective)
        theta_grads = {k: -lr_inner * g_theta.of(p) for k, p in theta.items()}

    hint_grads = None
    if use_hint and theta_h is not None and not force_unit_hint:
        with ad.Tape() as htape:
            objective = _hint_objective(recs, tans, theta_h, gamma)
        if objective is not None:
            g_hint = htape.backward(objective)
            hint_grads = {k: -lr_inner * g_hint.of(p) for k, p in theta_h.items()}
    return theta_grads, hint_grads, diag


def selar_step(state: TrainState, model, sampler, plan: MetaBatchPlan, settings: TrainSettings) -> dict[int, float]:
    """One full training step; returns the per-task mean weighted loss."""
    step = state.step
    batches = sampler.train_batches(step, plan)
    if settings.use_meta:
        meta_batch = sampler.meta_batch(step, plan)
        theta_grads, hint_grads, _ = meta_gradient(
            model, state.w, batches, meta_batch, settings.lr_inner,
            theta=state.theta, theta_h=state.theta_h, gamma=settings.gamma,
            use_hint=settings.use_hint,
            force_unit_weights=settings.force_unit_weights,
            force_unit_hint=settings.force_unit_hint,
            rng_train=sampler.forward_stream(step),
            rng_meta=sampler.meta_forward_stream(step),
        )
        if theta_grads is not None:
            state.opt_theta.step(theta_grads)
        if hint_grads is not None:
            state.opt_hint.step(hint_grads)

    # Phase B re-instantiates the phase-A forward stream, so both phases
    # see identical neighbor samples.
    tape = ad.Tape()
    recs = forward_records(
        tape, model, state.w, batches, sampler.forward_stream(step),
        state.theta, state.theta_h,
        gamma=settings.gamma, use_hint=settings.use_hint,
        force_unit_weights=settings.force_unit_weights,
        force_unit_hint=settings.force_unit_hint,
    )
    with tape:
        total = weighted_loss_term(recs)
    g = tape.backward(total)
    state.opt_w.step({k: g.of(p) for k, p in state.w.items()})
    state.step += 1
    return per_task_weighted(recs)


def task_weight_report(registry: TaskRegistry, epoch_logs: list[dict[int, float]]) -> list[dict]:
    """Tasks ranked by mean weighted loss (descending, ties by id)."""
    if not epoch_logs:
        raise ValueError("task_weight_report needs at least one logged epoch")
    sums: dict[int, list] = defaultdict(list)
    for log in epoch_logs:
        for tid, value in log.items():
            sums[tid].append(value)
    rows = []
    for tid in registry.task_ids:
        values = sums.get(tid)
        rows.append(
            {
                "task": tid,
                "name": registry.spec(tid).name,
                "mean_weighted_loss": float(np.mean(values)) if values else 0.0,
                "primary": tid == 0,
            }
        )
    rows.sort(key=lambda r: (-r["mean_weighted_loss"], r["task"]))
    return rows
