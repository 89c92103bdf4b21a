"""The example-weighting net V(xi; theta) and the hint net.

Both nets read the same per-example descriptor xi = (loss value, task
embedding, label sign). The loss coordinate is always a detached number:
no gradient flows from a weight back into the learner that produced the
loss. The final layer starts at zero so every example begins at weight
exactly 0.5 (sigmoid of 0) and training moves it from there.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .aux_tasks import TaskSpec
from .exceptions import NumericsError
from .heads import head_logits, init_head_params


def init_weighting_params(
    num_tasks: int,
    rng,
    embed_dim: int = 4,
    hidden_dim: int = 64,
    prefix: str = "vnet",
) -> dict[str, Tensor]:
    if num_tasks < 1:
        raise ValueError("need at least one task")
    d_in = embed_dim + 2
    scale = np.sqrt(2.0 / (d_in + hidden_dim))
    return {
        f"{prefix}/task_embed": Tensor(rng.normal(0.0, 1.0, size=(num_tasks, embed_dim))),
        f"{prefix}/W1": Tensor(rng.normal(0.0, scale, size=(d_in, hidden_dim))),
        f"{prefix}/b1": Tensor(np.zeros(hidden_dim)),
        f"{prefix}/W2": Tensor(np.zeros((hidden_dim, 1))),
        f"{prefix}/b2": Tensor(np.zeros(1)),
    }


def weight_examples(params: dict, losses, task_ids, signs, prefix: str = "vnet") -> Tensor:
    """Per-example weights in (0,1); differentiable w.r.t. params only."""
    losses = np.asarray(losses, dtype=np.float64)
    if not np.all(np.isfinite(losses)):
        raise NumericsError("weighting net fed a non-finite loss")
    task_ids = np.asarray(task_ids, dtype=np.intp)
    signs = np.asarray(signs, dtype=np.float64)
    emb = ad.gather_rows(params[f"{prefix}/task_embed"], task_ids)
    feats = ad.concat([Tensor(losses[:, None]), emb, Tensor(signs[:, None])], axis=1)
    hid = ad.relu(ad.add(ad.matmul(feats, params[f"{prefix}/W1"]), params[f"{prefix}/b1"]))
    logit = ad.add(ad.matmul(hid, params[f"{prefix}/W2"]), params[f"{prefix}/b2"])
    return ad.reshape(ad.sigmoid(logit), (len(losses),))


def init_hint_params(
    num_tasks: int,
    aux_specs: list[TaskSpec],
    node_dim: int,
    rng,
    embed_dim: int = 4,
    hidden_dim: int = 64,
    prefix: str = "hnet",
) -> dict[str, Tensor]:
    """Hint-side weighting net V_H plus one predictor head per aux task.

    Pair heads start as a bilinear identity, so the initial hint
    prediction coincides with a dot-product scorer over the same
    embeddings and the mixed output starts out unchanged.
    """
    params = init_weighting_params(num_tasks, rng, embed_dim, hidden_dim, prefix=prefix)
    for spec in aux_specs:
        if spec.task_id == 0:
            raise ValueError("hint heads are for auxiliary tasks only")
        params.update(
            init_head_params(spec, node_dim, rng, scorer="bilinear", prefix=f"{prefix}/f{spec.task_id}")
        )
    return params


def attenuation(params: dict, losses, task_ids, signs, gamma: float, prefix: str = "hnet") -> Tensor:
    """Mixing coefficient V_H(xi)^gamma in (0,1)."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    return ad.powc(weight_examples(params, losses, task_ids, signs, prefix=prefix), gamma)


def hint_logits(params: dict, spec: TaskSpec, embeds, prefix: str | None = None) -> Tensor:
    """Hint prediction over detached embedding arrays.

    ``embeds`` is (z,) for node tasks and (z_head, z_tail) for pair
    tasks, captured from the learner forward. Wrapping them as fresh
    tensors is what keeps the encoder out of the hint's gradient path.
    """
    prefix = prefix if prefix is not None else f"hnet/f{spec.task_id}"
    z_head = Tensor(np.asarray(embeds[0], dtype=np.float64))
    z_tail = Tensor(np.asarray(embeds[1], dtype=np.float64)) if len(embeds) > 1 else None
    return head_logits(spec, params, z_head, z_tail, scorer="bilinear", prefix=prefix)
