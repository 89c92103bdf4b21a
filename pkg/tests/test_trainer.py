import warnings

import numpy as np
import pytest

from selar.engine import MetaBatchPlan
from selar.exceptions import ConfigError, DataError
from selar.rng import root_sequence
from selar.synth import generate_synthetic
from selar.trainer import BatchSampler, SelarTrainer, TaskPool, build_aux_tasks
from selar.aux_tasks import TaskSpec

SPEC = {
    "node_types": {"author": 40, "paper": 60, "venue": 10},
    "communities": 3,
    "edge_types": [
        {"name": "writes", "src": "author", "dst": "paper", "within_density": 0.12, "across_density": 0.01},
        {"name": "cites", "src": "paper", "dst": "paper", "within_density": 0.06, "across_density": 0.005},
        {"name": "published_in", "src": "paper", "dst": "venue", "density": 0.08},
    ],
}


@pytest.fixture(scope="module")
def graph():
    return generate_synthetic(SPEC, seed=0)


def small(**kw):
    base = dict(target_edge_type="writes", epochs=2, steps_per_epoch=3, batch_size=8,
                hidden_dim=8, out_dim=8, seed=7)
    base.update(kw)
    return SelarTrainer(**base)


def fit_quiet(est, g):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return est.fit(g)


def history_key(est):
    return [(r["epoch"], r["split"], r["metric"], r["value"]) for r in est.history_]


def params_equal(a, b):
    return set(a) == set(b) and all(np.array_equal(a[k].data, b[k].data) for k in a)


def test_fit_is_deterministic_end_to_end(graph):
    a = fit_quiet(small(scheme="selar", aux=("metapath", "degree")), graph)
    b = fit_quiet(small(scheme="selar", aux=("metapath", "degree")), graph)
    assert history_key(a) == history_key(b)
    assert params_equal(a.params_, b.params_)
    assert params_equal(a.best_params_, b.best_params_)
    assert a.test_metrics_ == b.test_metrics_


def test_selar_with_unit_weights_single_fold_reduces_to_multitask(graph):
    # Freezing the weighting net at V = 1 and letting the meta pool
    # coincide with the train pool must reproduce plain multitask
    # training down to the last bit: same streams, same ops.
    aux = ("metapath", "degree")
    a = fit_quiet(small(scheme="selar", aux=aux, force_unit_weights=True, meta_folds=1), graph)
    b = fit_quiet(small(scheme="multitask", aux=aux, meta_folds=1), graph)
    assert history_key(a) == history_key(b)
    assert params_equal(a.params_, b.params_)
    assert a.test_metrics_ == b.test_metrics_


def test_selar_without_aux_reduces_to_reweight_only(graph):
    a = fit_quiet(small(scheme="selar", aux=()), graph)
    b = fit_quiet(small(scheme="reweight-only", aux=("metapath", "degree")), graph)
    assert history_key(a) == history_key(b)
    assert params_equal(a.params_, b.params_)
    assert a.test_metrics_ == b.test_metrics_


def test_forced_unit_hint_reduces_to_selar(graph):
    aux = ("metapath", "degree")
    a = fit_quiet(small(scheme="selar-hint", aux=aux, force_unit_hint=True), graph)
    b = fit_quiet(small(scheme="selar", aux=aux), graph)
    assert history_key(a) == history_key(b)
    assert params_equal(a.params_, b.params_)
    assert {k: v.data.tolist() for k, v in a.theta_.items()} == \
           {k: v.data.tolist() for k, v in b.theta_.items()}
    assert a.test_metrics_ == b.test_metrics_


def test_batch_draws_keyed_by_step_not_call_order(graph):
    from selar.aux_tasks import build_task_registry
    from selar.metapath import MetaPathSchema

    primary = TaskSpec(0, "link-prediction", "primary", "pair-binary")
    registry = build_task_registry(primary, [])
    eids = graph.edge_ids_of_type(0)
    items = np.stack([graph.edge_src[eids], graph.edge_dst[eids]], axis=1)
    pool0 = TaskPool(primary, items, np.ones(len(items), dtype=np.int64))
    sampler = BatchSampler(root_sequence(11), registry, {0: pool0}, 8, graph,
                           MetaPathSchema("writes", (0,)), 1)
    plan = MetaBatchPlan((np.arange(len(items)),))
    first = sampler.train_batches(3, plan)[0]
    sampler.train_batches(0, plan)
    sampler.meta_batch(5, plan)
    again = sampler.train_batches(3, plan)[0]
    assert np.array_equal(first.items, again.items)
    assert np.array_equal(first.labels, again.labels)
    # different steps draw different batches
    other = sampler.train_batches(4, plan)[0]
    assert not np.array_equal(first.items, other.items)


def test_build_aux_tasks_rejects_unknown_name(graph):
    with pytest.raises(ConfigError):
        build_aux_tasks(graph, ("degreee",), root_sequence(0))


def test_build_aux_tasks_ids_and_heads(graph):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tasks = build_aux_tasks(graph, ("metapath", "degree", "distance"), root_sequence(0),
                                max_metapaths=2, pair_examples=50)
    ids = [spec.task_id for spec, _ in tasks]
    assert ids == list(range(1, len(tasks) + 1))
    kinds = {spec.kind for spec, _ in tasks}
    assert "degree" in kinds and "distance" in kinds
    for spec, labeled in tasks:
        if spec.kind == "metapath":
            assert spec.head_kind == "pair-binary" and labeled.items.shape[1] == 2
        if spec.kind == "degree":
            assert spec.head_kind == "node-multiclass" and spec.num_classes == 3
        if spec.kind == "distance":
            assert spec.head_kind == "pair-multiclass" and spec.num_classes == 4
    metapath_count = sum(1 for spec, _ in tasks if spec.kind == "metapath")
    assert 0 < metapath_count <= 2


def test_fit_validates_configuration(graph):
    with pytest.raises(ConfigError):
        SelarTrainer(scheme="nope").fit(graph)
    with pytest.raises(ConfigError):
        SelarTrainer(primary="edge-weighting").fit(graph)
    with pytest.raises(ConfigError):
        small(target_edge_type="likes").fit(graph)
    with pytest.raises(ConfigError):
        small(epochs=0).fit(graph)


def test_fit_needs_enough_edges():
    tiny = generate_synthetic(
        {"node_types": {"a": 4, "b": 4},
         "edge_types": [{"name": "e", "src": "a", "dst": "b", "density": 0.2}]},
        seed=1,
    )
    with pytest.raises(DataError):
        small(target_edge_type="e").fit(tiny)


def test_fitted_surface(graph):
    est = fit_quiet(small(scheme="selar", aux=("metapath", "degree")), graph)
    assert est.best_epoch_ in (0, 1)
    assert {r["split"] for r in est.history_} == {"train", "valid", "test"}
    assert est.ranking_[0]["mean_weighted_loss"] >= est.ranking_[-1]["mean_weighted_loss"]
    assert set(est.curves_) == {"first", "best", "last"}

    probs = est.predict(np.array([[0, 45], [3, 50], [7, 99]]))
    assert probs.shape == (3,) and np.all((probs > 0) & (probs < 1))
    z = est.transform([0, 1, 2, 3])
    assert z.shape == (4, 8)

    # sklearn parameter plumbing
    p = est.get_params()
    assert p["scheme"] == "selar" and p["seed"] == 7
    est.set_params(epochs=3)
    assert est.epochs == 3


def test_vanilla_has_no_weighting_state(graph):
    est = fit_quiet(small(scheme="vanilla"), graph)
    assert est.theta_ is None and est.theta_h_ is None
    assert len(est.registry_) == 1


def test_node_classification_path(graph):
    est = SelarTrainer(primary="node-classification", scheme="selar", aux=("degree",),
                       epochs=2, steps_per_epoch=3, batch_size=8,
                       hidden_dim=8, out_dim=8, seed=3)
    fit_quiet(est, graph)
    assert {"macro_f1", "micro_f1"} <= set(est.test_metrics_)
    classes = est.predict([0, 1, 2, 3])
    assert classes.shape == (4,)
    assert np.all((classes >= 0) & (classes < est.primary_spec_.num_classes))


def test_recommendation_reports_recall(graph):
    est = SelarTrainer(primary="recommendation", scheme="selar", aux=("degree",),
                       target_edge_type="writes", epochs=2, steps_per_epoch=3,
                       batch_size=8, hidden_dim=8, out_dim=8,
                       eval_negatives=10, eval_ks=(1, 5), seed=3)
    fit_quiet(est, graph)
    assert {"auc", "recall@1", "recall@5"} <= set(est.test_metrics_)
    assert 0.0 <= est.test_metrics_["recall@1"] <= est.test_metrics_["recall@5"] <= 1.0
