"""Per-task output heads on top of the shared encoder embedding."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .aux_tasks import TaskSpec


def init_head_params(spec: TaskSpec, dim: int, rng, scorer: str = "dot", prefix: str | None = None) -> dict:
    """Parameters for one task head; dot pair heads are parameter-free."""
    prefix = prefix if prefix is not None else f"head{spec.task_id}"
    params: dict[str, Tensor] = {}
    if spec.head_kind == "pair-binary":
        if scorer == "bilinear":
            params[f"{prefix}/B"] = Tensor(np.eye(dim))
        elif scorer != "dot":
            raise ValueError(f"unknown pair scorer {scorer!r}")
    else:
        scale = np.sqrt(2.0 / (dim + spec.num_classes))
        params[f"{prefix}/W"] = Tensor(rng.normal(0.0, scale, size=(dim, spec.num_classes)))
        params[f"{prefix}/b"] = Tensor(np.zeros(spec.num_classes))
    return params


def score_pairs(z_head: Tensor, z_tail: Tensor, params: dict, scorer: str = "dot", prefix: str = "head0") -> Tensor:
    """Pair logits: dot product, or bilinear z_h^T B z_t."""
    if scorer == "bilinear":
        z_head = ad.matmul(z_head, params[f"{prefix}/B"])
    return ad.tensor_sum(ad.mul(z_head, z_tail), axis=1)


def classify_nodes(z: Tensor, params: dict, prefix: str) -> Tensor:
    return ad.add(ad.matmul(z, params[f"{prefix}/W"]), params[f"{prefix}/b"])


def classify_pair_distance(z_head: Tensor, z_tail: Tensor, params: dict, prefix: str) -> Tensor:
    """Multiclass logits from |z_u - z_v| (the pairwise-distance head)."""
    return classify_nodes(ad.absolute(ad.sub(z_head, z_tail)), params, prefix)


def head_logits(
    spec: TaskSpec,
    params: dict,
    z_head: Tensor,
    z_tail: Tensor | None = None,
    scorer: str = "dot",
    prefix: str | None = None,
) -> Tensor:
    prefix = prefix if prefix is not None else f"head{spec.task_id}"
    if spec.head_kind == "pair-binary":
        return score_pairs(z_head, z_tail, params, scorer=scorer, prefix=prefix)
    if spec.head_kind == "pair-multiclass":
        return classify_pair_distance(z_head, z_tail, params, prefix)
    return classify_nodes(z_head, params, prefix)


def task_loss_vector(spec: TaskSpec, logits: Tensor, labels: np.ndarray) -> Tensor:
    """Per-example losses: BCE for pair-binary, CE otherwise."""
    if spec.head_kind == "pair-binary":
        return ad.bce_with_logits(logits, np.asarray(labels, dtype=np.float64))
    return ad.softmax_cross_entropy(logits, labels)
