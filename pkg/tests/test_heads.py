import numpy as np
import pytest

import selar.autodiff as ad
from oracles import directional_param_check
from selar.autodiff import Tensor
from selar.aux_tasks import TaskSpec
from selar.heads import (
    classify_nodes,
    classify_pair_distance,
    head_logits,
    init_head_params,
    score_pairs,
    task_loss_vector,
)


def pair_spec(task_id=0):
    kind = "primary" if task_id == 0 else "metapath"
    return TaskSpec(task_id, "link", kind, "pair-binary")


def test_dot_scorer_geometry():
    z_u = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    z_v = Tensor(np.array([[1.0, 0.0], [1.0, 0.0]]))
    s = score_pairs(z_u, z_v, {})
    assert np.allclose(s.data, [1.0, 0.0], atol=0)


def test_bilinear_identity_matches_dot():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    params = init_head_params(pair_spec(), 4, rng, scorer="bilinear")
    assert np.array_equal(params["head0/B"].data, np.eye(4))
    s_dot = score_pairs(Tensor(a), Tensor(b), {})
    s_bil = score_pairs(Tensor(a), Tensor(b), params, scorer="bilinear", prefix="head0")
    assert np.allclose(s_dot.data, s_bil.data, atol=1e-12)


def test_zero_classifier_gives_uniform_cross_entropy():
    spec = TaskSpec(1, "deg", "degree", "node-multiclass", num_classes=4)
    params = init_head_params(spec, 5, np.random.default_rng(1))
    params["head1/W"].data[:] = 0.0
    params["head1/b"].data[:] = 0.0
    z = Tensor(np.random.default_rng(2).normal(size=(7, 5)))
    logits = classify_nodes(z, params, prefix="head1")
    y = np.array([0, 1, 2, 3, 0, 1, 2])
    loss = task_loss_vector(spec, logits, y)
    assert loss.shape == (7,)
    assert np.allclose(loss.data, np.log(4.0), atol=1e-12)


def test_distance_head_reads_absolute_difference():
    spec = TaskSpec(2, "dist", "distance", "pair-multiclass", num_classes=2)
    params = init_head_params(spec, 3, np.random.default_rng(3))
    params["head2/W"].data[:] = 0.0
    params["head2/W"].data[0, 1] = 1.0
    params["head2/b"].data[:] = 0.0
    z_u = Tensor(np.array([[2.0, 5.0, 1.0]]))
    z_v = Tensor(np.array([[-1.0, 5.0, 1.0]]))
    logits = classify_pair_distance(z_u, z_v, params, prefix="head2")
    assert np.allclose(logits.data, [[0.0, 3.0]], atol=0)


def test_head_logits_dispatch():
    rng = np.random.default_rng(4)
    z_u = Tensor(rng.normal(size=(5, 3)))
    z_v = Tensor(rng.normal(size=(5, 3)))
    s = head_logits(pair_spec(), {}, z_u, z_v)
    assert s.shape == (5,)

    spec_node = TaskSpec(1, "deg", "degree", "node-multiclass", num_classes=3)
    params = init_head_params(spec_node, 3, rng)
    logits = head_logits(spec_node, params, z_u, None)
    assert logits.shape == (5, 3)

    spec_dist = TaskSpec(2, "dist", "distance", "pair-multiclass", num_classes=4)
    params = init_head_params(spec_dist, 3, rng)
    logits = head_logits(spec_dist, params, z_u, z_v)
    assert logits.shape == (5, 4)


def test_pair_binary_loss_matches_manual_bce():
    rng = np.random.default_rng(5)
    s = rng.normal(size=6)
    y = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0])
    loss = task_loss_vector(pair_spec(), Tensor(s), y)
    manual = np.maximum(s, 0) - s * y + np.log1p(np.exp(-np.abs(s)))
    assert np.allclose(loss.data, manual, atol=1e-12)


def test_classifier_gradcheck():
    rng = np.random.default_rng(6)
    spec = TaskSpec(1, "pr", "pagerank", "node-multiclass", num_classes=3)
    params = init_head_params(spec, 4, rng)
    x = rng.normal(size=(8, 4))
    y = rng.integers(0, 3, 8)

    def build_loss():
        logits = classify_nodes(Tensor(x), params, prefix="head1")
        return ad.mean(task_loss_vector(spec, logits, y))

    assert directional_param_check(build_loss, params, ndirs=3, h=1e-6) < 1e-5


def test_bilinear_gradcheck():
    rng = np.random.default_rng(7)
    spec = pair_spec()
    params = init_head_params(spec, 4, rng, scorer="bilinear")
    params["head0/B"].data += 0.1 * rng.normal(size=(4, 4))
    a, b = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    y = rng.integers(0, 2, 6).astype(float)

    def build_loss():
        s = score_pairs(Tensor(a), Tensor(b), params, scorer="bilinear", prefix="head0")
        return ad.mean(task_loss_vector(spec, s, y))

    assert directional_param_check(build_loss, params, ndirs=3, h=1e-6) < 1e-5


def test_unknown_scorer_rejected():
    with pytest.raises(ValueError, match="scorer"):
        init_head_params(pair_spec(), 4, np.random.default_rng(0), scorer="cosine")
