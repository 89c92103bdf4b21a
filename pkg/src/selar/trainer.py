"""End-to-end training on one heterogeneous graph.

GraphModel binds the shared encoder to per-task heads; BatchSampler
turns task pools into per-step minibatches (each draw on its own named
stream, so schemes that skip a phase still see identical batches); and
SelarTrainer is the scikit-learn-style estimator gluing it all to the
engine.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .analysis import weight_curve_rows
from .aux_tasks import (
    LabeledSet,
    TaskSpec,
    build_task_registry,
    clustering_labels,
    degree_labels,
    distance_labels,
    pagerank_labels,
    partition_labels,
)
from .encoders import EncoderConfig, encode, init_encoder_params
from .engine import (
    MetaBatchPlan,
    TaskBatch,
    TrainSettings,
    TrainState,
    scheme_flags,
    selar_step,
    task_weight_report,
    SCHEMES,
)
from .exceptions import ConfigError, DataError, TaskConstructionError
from .graph import HeteroGraph, make_splits
from .heads import head_logits, init_head_params
from .metapath import (
    MetaPathSchema,
    PairExample,
    enumerate_schemas,
    sample_negative_pairs,
    sample_positive_pairs,
)
from .metrics import auc, macro_f1, recall_at_k
from .optim import AdamState
from .rng import root_sequence, stream
from .weighting import init_hint_params, init_weighting_params

PRIMARY_KINDS = ("link-prediction", "node-classification", "recommendation")
AUX_NAMES = ("metapath", "degree", "distance", "pagerank", "clustering", "partition")


class GraphModel:
    """Shared encoder plus one head per registered task."""

    def __init__(self, g: HeteroGraph, cfg: EncoderConfig, registry, scorer: str = "dot"):
        self.g = g
        self.cfg = cfg
        self.registry = registry
        self.scorer = scorer

    def init_params(self, rng) -> dict:
        params = init_encoder_params(self.cfg, self.g, rng)
        for tid in self.registry.task_ids:
            params.update(init_head_params(self.registry.spec(tid), self.cfg.out_dim, rng, scorer=self.scorer))
        return params

    def embed(self, params, nodes, rng):
        return encode(self.g, self.cfg, params, np.asarray(nodes, dtype=np.int64), rng)

    def predict(self, params, batch: TaskBatch, rng, embed_out: dict | None = None):
        spec = batch.spec
        items = np.asarray(batch.items, dtype=np.int64)
        if spec.head_kind == "node-multiclass":
            z = self.embed(params, items, rng)
            if embed_out is not None:
                embed_out["embeds"] = (z.data,)
            return head_logits(spec, params, z, scorer=self.scorer)
        n = len(items)
        z = self.embed(params, np.concatenate([items[:, 0], items[:, 1]]), rng)
        z_head = ad.gather_rows(z, np.arange(n))
        z_tail = ad.gather_rows(z, np.arange(n, 2 * n))
        if embed_out is not None:
            embed_out["embeds"] = (z_head.data, z_tail.data)
        return head_logits(spec, params, z_head, z_tail, scorer=self.scorer)


@dataclass
class TaskPool:
    """Everything a task can draw batches from."""

    spec: TaskSpec
    items: np.ndarray
    labels: np.ndarray


class BatchSampler:
    """Per-step batch draws, one independent named stream per purpose.

    The primary pool is position-indexed so the meta-fold plan can carve
    it up; auxiliary pools are sampled whole. Pair-binary primary batches
    get fresh corruption negatives on every draw.
    """

    def __init__(self, root, registry, pools, batch_size, graph, neg_schema=None, neg_ratio: int = 1):
        self.root = root
        self.registry = registry
        self.pools = pools
        self.batch_size = batch_size
        self.graph = graph
        self.neg_schema = neg_schema
        self.neg_ratio = neg_ratio

    def forward_stream(self, step: int):
        return stream(self.root, "step", step, "train_forward")

    def meta_forward_stream(self, step: int):
        return stream(self.root, "step", step, "meta_forward")

    def _pair_batch(self, spec, positives, rng) -> TaskBatch:
        pos = [PairExample(int(u), int(v), 1) for u, v in positives]
        negs, _ = sample_negative_pairs(pos * self.neg_ratio, self.graph, self.neg_schema, rng)
        both = pos + negs
        items = np.array([[p.head, p.tail] for p in both], dtype=np.int64)
        labels = np.array([p.label for p in both], dtype=np.float64)
        return TaskBatch(spec, items, labels, 2.0 * labels - 1.0)

    def _primary_batch(self, positions, rng) -> TaskBatch:
        pool = self.pools[0]
        take = positions[rng.integers(0, len(positions), size=self.batch_size)]
        if pool.spec.head_kind == "pair-binary":
            return self._pair_batch(pool.spec, pool.items[take], rng)
        return TaskBatch(pool.spec, pool.items[take], pool.labels[take], np.ones(len(take)))

    def _aux_batch(self, tid: int, rng) -> TaskBatch:
        pool = self.pools[tid]
        take = rng.integers(0, len(pool.items), size=self.batch_size)
        items, labels = pool.items[take], pool.labels[take]
        if pool.spec.head_kind == "pair-binary":
            labels = labels.astype(np.float64)
            return TaskBatch(pool.spec, items, labels, 2.0 * labels - 1.0)
        return TaskBatch(pool.spec, items, labels, np.ones(len(take)))

    def train_batches(self, step: int, plan: MetaBatchPlan) -> list[TaskBatch]:
        out = [self._primary_batch(plan.train_indices(step), stream(self.root, "step", step, "batch", 0))]
        for tid in self.registry.aux_ids():
            out.append(self._aux_batch(tid, stream(self.root, "step", step, "batch", tid)))
        return out

    def meta_batch(self, step: int, plan: MetaBatchPlan) -> TaskBatch:
        return self._primary_batch(plan.meta_indices(step), stream(self.root, "step", step, "batch", "meta"))


def build_aux_tasks(
    g: HeteroGraph,
    names,
    root,
    pair_examples: int = 400,
    metapath_max_len: int = 3,
    max_metapaths: int = 3,
    node_frac: float = 0.5,
    distance_pairs: int | None = None,
    cluster_k: int = 4,
    partition_k: int = 2,
) -> list[tuple[TaskSpec, LabeledSet]]:
    """Construct (spec, labeled set) for each requested auxiliary task.

    Tasks that cannot be built on this graph (no meta-path instances, no
    connected pair, ...) are skipped with a warning rather than failing
    the whole run.
    """
    for name in names:
        if name not in AUX_NAMES:
            raise ConfigError(f"unknown auxiliary task {name!r}; choose from {AUX_NAMES}")
    if distance_pairs is None:
        distance_pairs = int(min(max(4 * g.num_edges, 200), 2000))

    tasks: list[tuple[TaskSpec, LabeledSet]] = []

    def push(name, kind, head, labeled, num_classes=2):
        tid = len(tasks) + 1
        tasks.append((TaskSpec(tid, name, kind, head, num_classes=num_classes), labeled))

    for name in names:
        try:
            if name == "metapath":
                schemas = enumerate_schemas(
                    g, metapath_max_len, max_metapaths, rng=stream(root, "aux", "schemas")
                )
                if not schemas:
                    warnings.warn("no composable meta-path schemas found; skipping meta-path tasks")
                for j, schema in enumerate(schemas):
                    try:
                        pos = sample_positive_pairs(g, schema, pair_examples, stream(root, "aux", "metapath", j, "pos"))
                        neg, _ = sample_negative_pairs(pos, g, schema, stream(root, "aux", "metapath", j, "neg"))
                    except TaskConstructionError as err:
                        warnings.warn(f"skipping meta-path {schema.name}: {err}")
                        continue
                    both = pos + neg
                    items = np.array([[p.head, p.tail] for p in both], dtype=np.int64)
                    labels = np.array([p.label for p in both], dtype=np.int64)
                    push(f"metapath:{schema.name}", "metapath", "pair-binary", LabeledSet(items, labels))
            elif name == "degree":
                push("degree", "degree", "node-multiclass",
                     degree_labels(g, node_frac, stream(root, "aux", "degree")), num_classes=3)
            elif name == "distance":
                push("distance", "distance", "pair-multiclass",
                     distance_labels(g, distance_pairs, stream(root, "aux", "distance")), num_classes=4)
            elif name == "pagerank":
                push("pagerank", "pagerank", "node-multiclass",
                     pagerank_labels(g, sample_frac=node_frac, rng=stream(root, "aux", "pagerank")), num_classes=3)
            elif name == "clustering":
                push("clustering", "clustering", "node-multiclass",
                     clustering_labels(g, cluster_k, rng=stream(root, "aux", "clustering")), num_classes=cluster_k)
            elif name == "partition":
                push("partition", "partition", "node-multiclass",
                     partition_labels(g, partition_k, rng=stream(root, "aux", "partition")), num_classes=partition_k)
        except TaskConstructionError as err:
            warnings.warn(f"skipping auxiliary task {name!r}: {err}")
    return tasks


def _pair_eval_batch(spec, positives, g, schema, rng, neg_ratio: int = 1) -> TaskBatch:
    pos = [PairExample(int(u), int(v), 1) for u, v in positives]
    neg, _ = sample_negative_pairs(pos * neg_ratio, g, schema, rng)
    both = pos + neg
    items = np.array([[p.head, p.tail] for p in both], dtype=np.int64)
    labels = np.array([p.label for p in both], dtype=np.float64)
    return TaskBatch(spec, items, labels, 2.0 * labels - 1.0)


@dataclass
class RankingEval:
    """Per-user candidate lists for Recall@K, scored in one batch."""

    batch: TaskBatch
    slices: list  # (user, start, stop)
    relevant: dict


def build_ranking_eval(spec, positives, g_full: HeteroGraph, etype: int, n_negatives: int, rng) -> RankingEval:
    tail_type = int(g_full.node_type[g_full.edge_dst[g_full.edge_ids_of_type(etype)[0]]])
    candidates = g_full.nodes_of_type(tail_type)
    by_user: dict[int, list[int]] = defaultdict(list)
    for u, v in positives:
        by_user[int(u)].append(int(v))

    rows, slices, relevant = [], [], {}
    for user in sorted(by_user):
        rel = by_user[user]
        taken = set(rel)
        negs = []
        for _ in range(50 * n_negatives):
            if len(negs) >= n_negatives:
                break
            cand = int(candidates[rng.integers(0, len(candidates))])
            if cand in taken or g_full.has_edge(user, etype, cand):
                continue
            taken.add(cand)
            negs.append(cand)
        cands = rel + negs
        slices.append((user, len(rows), len(rows) + len(cands)))
        relevant[user] = set(rel)
        rows.extend((user, c) for c in cands)

    items = np.array(rows, dtype=np.int64)
    labels = np.zeros(len(rows), dtype=np.float64)
    batch = TaskBatch(spec, items, labels, np.ones(len(rows)))
    return RankingEval(batch, slices, relevant)


class SelarTrainer(BaseEstimator):
    """Weighted multi-task training over a heterogeneous graph.

    Scikit-learn conventions: hyperparameters land verbatim on ``self``
    in ``__init__`` (so ``get_params``/``set_params``/``clone`` work),
    ``fit`` learns from a HeteroGraph, and fitted state lives in
    trailing-underscore attributes.
    """

    def __init__(
        self,
        scheme: str = "selar",
        primary: str = "link-prediction",
        target_edge_type: str | None = None,
        aux=("metapath",),
        encoder: str = "gcn",
        layers: int = 2,
        hidden_dim: int = 16,
        out_dim: int = 16,
        sgc_hops: int = 2,
        fanout: int = 8,
        gin_eps: float = 0.0,
        scorer: str = "dot",
        epochs: int = 5,
        steps_per_epoch: int = 20,
        batch_size: int = 32,
        neg_ratio: int = 1,
        lr: float = 1e-2,
        lr_inner: float = 1e-2,
        lr_meta: float = 1e-3,
        gamma: float = 0.5,
        meta_folds: int = 3,
        split_ratios=(0.6, 0.2, 0.2),
        pair_examples: int = 400,
        metapath_max_len: int = 3,
        max_metapaths: int = 3,
        node_frac: float = 0.5,
        distance_pairs: int | None = None,
        cluster_k: int = 4,
        partition_k: int = 2,
        eval_negatives: int = 50,
        eval_ks=(5, 10),
        custom_aux=(),
        force_unit_weights: bool = False,
        force_unit_hint: bool = False,
        seed: int = 0,
    ):
        self.scheme = scheme
        self.primary = primary
        self.target_edge_type = target_edge_type
        self.aux = aux
        self.encoder = encoder
        self.layers = layers
        self.hidden_dim = hidden_dim
        self.out_dim = out_dim
        self.sgc_hops = sgc_hops
        self.fanout = fanout
        self.gin_eps = gin_eps
        self.scorer = scorer
        self.epochs = epochs
        self.steps_per_epoch = steps_per_epoch
        self.batch_size = batch_size
        self.neg_ratio = neg_ratio
        self.lr = lr
        self.lr_inner = lr_inner
        self.lr_meta = lr_meta
        self.gamma = gamma
        self.meta_folds = meta_folds
        self.split_ratios = split_ratios
        self.pair_examples = pair_examples
        self.metapath_max_len = metapath_max_len
        self.max_metapaths = max_metapaths
        self.node_frac = node_frac
        self.distance_pairs = distance_pairs
        self.cluster_k = cluster_k
        self.partition_k = partition_k
        self.eval_negatives = eval_negatives
        self.eval_ks = eval_ks
        self.custom_aux = custom_aux
        self.force_unit_weights = force_unit_weights
        self.force_unit_hint = force_unit_hint
        self.seed = seed

    def _resolve_edge_type(self, g: HeteroGraph) -> int:
        name = self.target_edge_type if self.target_edge_type is not None else g.edge_type_names[0]
        if name not in g.edge_type_names:
            raise ConfigError(f"unknown target edge type {name!r}; graph has {g.edge_type_names}")
        return g.edge_type_names.index(name)

    def fit(self, g: HeteroGraph, y=None):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.primary not in PRIMARY_KINDS:
            raise ConfigError(f"unknown primary task kind {self.primary!r}; choose from {PRIMARY_KINDS}")
        if min(self.epochs, self.steps_per_epoch, self.batch_size, self.neg_ratio) < 1:
            raise ConfigError("epochs, steps_per_epoch, batch_size and neg_ratio must be >= 1")
        use_aux, use_meta, use_hint = scheme_flags(self.scheme)
        root = root_sequence(self.seed)
        pair_primary = self.primary != "node-classification"

        if pair_primary:
            etype = self._resolve_edge_type(g)
            eids = g.edge_ids_of_type(etype)
            if len(eids) < 10:
                raise DataError(f"target edge type has only {len(eids)} edges; cannot split")
            split = make_splits(len(eids), self.split_ratios, self.meta_folds, self.seed)
            items = np.stack([g.edge_src[eids], g.edge_dst[eids]], axis=1)
            g_train = g.without_edges(np.concatenate([eids[split.valid], eids[split.test]]))
            primary_spec = TaskSpec(0, self.primary, "primary", "pair-binary")
            pool0 = TaskPool(primary_spec, items, np.ones(len(items), dtype=np.int64))
            neg_schema = MetaPathSchema(g.edge_type_names[etype], (etype,))
        else:
            if g.node_labels is None:
                raise DataError("node classification needs node labels")
            labeled = np.flatnonzero(g.node_labels >= 0)
            if len(labeled) < 10:
                raise DataError(f"only {len(labeled)} labeled nodes; cannot split")
            num_classes = int(g.node_labels[labeled].max()) + 1
            split = make_splits(len(labeled), self.split_ratios, self.meta_folds, self.seed)
            items = labeled
            g_train = g
            primary_spec = TaskSpec(0, self.primary, "primary", "node-multiclass",
                                    num_classes=max(num_classes, 2))
            pool0 = TaskPool(primary_spec, items, g.node_labels[labeled])
            neg_schema = None
            etype = None

        aux_names = tuple(self.aux) if use_aux else ()
        aux_tasks = build_aux_tasks(
            g_train, aux_names, root,
            pair_examples=self.pair_examples,
            metapath_max_len=self.metapath_max_len,
            max_metapaths=self.max_metapaths,
            node_frac=self.node_frac,
            distance_pairs=self.distance_pairs,
            cluster_k=self.cluster_k,
            partition_k=self.partition_k,
        )
        if use_aux:
            # user-supplied tasks, e.g. probes with known-good or
            # known-junk labels; each builder sees the train graph only
            for j, build in enumerate(self.custom_aux):
                name, kind, head_kind, c_items, c_labels, ncls = build(
                    g_train, stream(root, "aux", "custom", j)
                )
                tid = len(aux_tasks) + 1
                aux_tasks.append(
                    (TaskSpec(tid, name, kind, head_kind, num_classes=ncls),
                     LabeledSet(c_items, c_labels))
                )
        registry = build_task_registry(primary_spec, aux_tasks)
        pools = {0: pool0}
        for spec, labeled_set in aux_tasks:
            pools[spec.task_id] = TaskPool(spec, labeled_set.items, labeled_set.labels)

        cfg = EncoderConfig(
            self.encoder, layers=self.layers, hidden_dim=self.hidden_dim, out_dim=self.out_dim,
            sgc_hops=self.sgc_hops, fanout=self.fanout, gin_eps=self.gin_eps,
        )
        model = GraphModel(g_train, cfg, registry, scorer=self.scorer)
        w = model.init_params(stream(root, "init", "model"))
        theta = init_weighting_params(len(registry), stream(root, "init", "weighting")) if use_meta else None
        theta_h = None
        if use_meta and use_hint:
            aux_specs = [registry.spec(t) for t in registry.aux_ids()]
            theta_h = init_hint_params(len(registry), aux_specs, self.out_dim, stream(root, "init", "hint"))
        state = TrainState(
            w=w, opt_w=AdamState(w, self.lr),
            theta=theta, opt_theta=AdamState(theta, self.lr_meta) if theta is not None else None,
            theta_h=theta_h, opt_hint=AdamState(theta_h, self.lr_meta) if theta_h is not None else None,
        )
        plan = MetaBatchPlan(tuple(split.folds))
        sampler = BatchSampler(root, registry, pools, self.batch_size, g_train, neg_schema, self.neg_ratio)
        settings = TrainSettings(
            lr=self.lr, lr_inner=self.lr_inner, lr_meta=self.lr_meta, gamma=self.gamma,
            use_meta=use_meta, use_hint=use_hint,
            force_unit_weights=self.force_unit_weights, force_unit_hint=self.force_unit_hint,
        )

        eval_sets = {}
        for split_name, positions in (("valid", split.valid), ("test", split.test)):
            if pair_primary:
                # Negative corruption checks reachability on the full
                # graph so held-out positives cannot leak in as negatives.
                eval_sets[split_name] = _pair_eval_batch(
                    primary_spec, pool0.items[positions], g, neg_schema, stream(root, "eval", split_name)
                )
            else:
                eval_sets[split_name] = TaskBatch(
                    primary_spec, pool0.items[positions], pool0.labels[positions], np.ones(len(positions))
                )
        ranking = None
        if self.primary == "recommendation":
            ranking = build_ranking_eval(
                primary_spec, pool0.items[split.test], g, etype,
                self.eval_negatives, stream(root, "eval", "rank"),
            )

        history: list[dict] = []
        task_log: list[dict] = []
        curves: dict[str, list] = {}
        select_on = "auc" if pair_primary else "macro_f1"
        best_value, best_epoch, best_w = -np.inf, -1, None

        def snapshot(params):
            return {k: ad.Tensor(p.data.copy()) for k, p in params.items()}

        def log(epoch, split_name, metrics):
            for metric, value in metrics.items():
                history.append({"epoch": epoch, "split": split_name, "metric": metric, "value": value})

        for epoch in range(self.epochs):
            sums: dict[int, float] = defaultdict(float)
            for _ in range(self.steps_per_epoch):
                for tid, value in selar_step(state, model, sampler, plan, settings).items():
                    sums[tid] += value
            epoch_log = {tid: total / self.steps_per_epoch for tid, total in sums.items()}
            task_log.append(epoch_log)
            log(epoch, "train", {"weighted_loss": sum(epoch_log.values())})

            vals = self._evaluate(model, state.w, eval_sets["valid"],
                                  stream(root, "eval_forward", "valid", epoch))
            log(epoch, "valid", vals)
            if theta is not None and epoch == 0:
                curves["first"] = weight_curve_rows(theta, registry)
            if vals[select_on] > best_value:
                best_value, best_epoch, best_w = vals[select_on], epoch, snapshot(state.w)
                if theta is not None:
                    curves["best"] = weight_curve_rows(theta, registry)
        if theta is not None:
            curves["last"] = weight_curve_rows(theta, registry)

        test_vals = self._evaluate(model, best_w, eval_sets["test"],
                                   stream(root, "eval_forward", "test", "best"))
        if ranking is not None:
            test_vals.update(self._eval_ranking(model, best_w, ranking,
                                                stream(root, "eval_forward", "rank", "best")))
        log(best_epoch, "test", test_vals)

        self.registry_ = registry
        self.model_ = model
        self.state_ = state
        self.params_ = state.w
        self.best_params_ = best_w
        self.best_epoch_ = best_epoch
        self.theta_ = theta
        self.theta_h_ = theta_h
        self.plan_ = plan
        self.split_ = split
        self.train_graph_ = g_train
        self.primary_spec_ = primary_spec
        self.history_ = history
        self.task_log_ = task_log
        self.ranking_ = task_weight_report(registry, task_log)
        self.curves_ = curves
        self.test_metrics_ = test_vals
        return self

    def _evaluate(self, model, params, batch: TaskBatch, rng) -> dict[str, float]:
        pred = model.predict(params, batch, rng)  # no tape: plain values
        if batch.spec.head_kind == "pair-binary":
            return {"auc": auc(pred.data, batch.labels.astype(np.int64))}
        classes = pred.data.argmax(axis=1)
        gold = np.asarray(batch.labels, dtype=np.intp)
        n = batch.spec.num_classes
        return {"macro_f1": macro_f1(classes, gold, n), "micro_f1": macro_f1(classes, gold, n, micro=True)}

    def _eval_ranking(self, model, params, ranking: RankingEval, rng) -> dict[str, float]:
        scores = model.predict(params, ranking.batch, rng).data
        items = np.asarray(ranking.batch.items)
        ranked = {}
        for user, start, stop in ranking.slices:
            cand = items[start:stop, 1]
            order = np.argsort(-scores[start:stop], kind="stable")
            ranked[user] = [int(c) for c in cand[order]]
        return {f"recall@{k}": recall_at_k(ranked, ranking.relevant, k) for k in self.eval_ks}

    def transform(self, nodes) -> np.ndarray:
        """Embeddings for the given node ids (best-validation weights)."""
        root = root_sequence(self.seed)
        return self.model_.embed(self.best_params_, nodes, stream(root, "transform")).data

    def predict(self, X) -> np.ndarray:
        """Link probabilities for (n, 2) pairs, or class ids for node ids."""
        root = root_sequence(self.seed)
        spec = self.primary_spec_
        items = np.asarray(X, dtype=np.int64)
        batch = TaskBatch(spec, items, np.zeros(len(items)), np.ones(len(items)))
        pred = self.model_.predict(self.best_params_, batch, stream(root, "predict"))
        if spec.head_kind == "pair-binary":
            return 1.0 / (1.0 + np.exp(-pred.data))
        return pred.data.argmax(axis=1)
