"""Seeded experiment execution: run dirs, aggregates, and reports.

One config drives N independent seeds. Each seed gets its own run dir
(manifest, metrics, task ranking, weight curves, checkpoint); the
parent dir gets the cross-seed aggregate. All files are written
temp-then-rename and all floats with repr(), so reruns of the same
config are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analysis import curve_csv
from .checkpoint import save_checkpoint
from .engine import scheme_flags
from .exceptions import DataError, NumericsError
from .graph import load_graph, save_graph
from .metrics import aggregate_runs
from .synth import generate_synthetic
from .trainer import SelarTrainer


def atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def load_dataset(cfg: dict):
    ds = cfg["dataset"]
    if "synthetic" in ds:
        spec = dict(ds["synthetic"])
        seed = spec.pop("seed", 0)
        return generate_synthetic(spec, seed)
    files = ds["files"]
    return load_graph(files["nodes"], files["edges"], files.get("labels"))


def generate_dataset(cfg: dict) -> dict[str, str]:
    """`gen`: materialize the synthetic dataset as TSV files."""
    ds = cfg["dataset"]
    if "synthetic" not in ds:
        raise DataError("gen needs a dataset.synthetic section; file datasets already exist")
    g = load_dataset(cfg)
    base = os.path.join(cfg["out_dir"], "dataset")
    os.makedirs(base, exist_ok=True)
    paths = {
        "nodes": os.path.join(base, "nodes.tsv"),
        "edges": os.path.join(base, "edges.tsv"),
    }
    if g.node_labels is not None:
        paths["labels"] = os.path.join(base, "labels.tsv")
    save_graph(g, paths["nodes"], paths["edges"], paths.get("labels"))
    return paths


def trainer_kwargs(cfg: dict, seed: int) -> dict:
    enc, sel, tr, ev, ap = (cfg[k] for k in ("encoder", "selar", "train", "eval", "aux_params"))
    return dict(
        scheme=cfg["scheme"],
        primary=cfg["primary"],
        target_edge_type=cfg.get("target_edge_type"),
        aux=tuple(cfg["aux"]),
        encoder=enc["kind"],
        layers=enc["layers"],
        hidden_dim=enc["hidden_dim"],
        out_dim=enc["out_dim"],
        sgc_hops=enc["sgc_hops"],
        fanout=enc["fanout"],
        gin_eps=enc["gin_eps"],
        scorer=tr["scorer"],
        epochs=tr["epochs"],
        steps_per_epoch=tr["steps_per_epoch"],
        batch_size=tr["batch_size"],
        neg_ratio=tr["neg_ratio"],
        lr=tr["lr"],
        lr_inner=sel["lr_inner"],
        lr_meta=sel["lr_meta"],
        gamma=sel.get("gamma", 0.5),
        meta_folds=sel["meta_folds"],
        split_ratios=tuple(tr["split_ratios"]),
        pair_examples=ap["pair_examples"],
        metapath_max_len=ap["metapath_max_len"],
        max_metapaths=ap["max_metapaths"],
        node_frac=ap["node_frac"],
        distance_pairs=ap.get("distance_pairs"),
        cluster_k=ap["cluster_k"],
        partition_k=ap["partition_k"],
        eval_negatives=ev["negatives"],
        eval_ks=tuple(ev["ks"]),
        seed=seed,
    )


def metrics_csv(history: list[dict]) -> str:
    lines = ["epoch,split,metric,value"]
    for r in history:
        lines.append(f"{r['epoch']},{r['split']},{r['metric']},{r['value']!r}")
    return "\n".join(lines) + "\n"


def ranking_csv(rows: list[dict]) -> str:
    lines = ["task,name,mean_weighted_loss,primary"]
    for r in rows:
        lines.append(f"{r['task']},{r['name']},{r['mean_weighted_loss']!r},{int(r['primary'])}")
    return "\n".join(lines) + "\n"


def run_one(g, cfg: dict, seed: int, run_dir: str) -> dict[str, float]:
    est = SelarTrainer(**trainer_kwargs(cfg, seed))
    est.fit(g)
    bad = [r for r in est.history_ if not np.isfinite(r["value"])]
    if bad:
        r = bad[0]
        raise NumericsError(f"non-finite {r['metric']} at epoch {r['epoch']} ({r['split']})")

    os.makedirs(run_dir, exist_ok=True)
    manifest = {
        "seed": seed,
        "model": cfg["encoder"]["kind"],
        "scheme": cfg["scheme"],
        "config": cfg,
        "config_hash": config_hash(cfg),
        "best_epoch": est.best_epoch_,
    }
    atomic_write(os.path.join(run_dir, "manifest.json"),
                 json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    atomic_write(os.path.join(run_dir, "metrics.csv"), metrics_csv(est.history_))
    atomic_write(os.path.join(run_dir, "task_ranking.csv"), ranking_csv(est.ranking_))
    for tag, rows in est.curves_.items():
        atomic_write(os.path.join(run_dir, f"weight_curve_{tag}.csv"), curve_csv(rows))

    groups = {f"w/{k}": p.data for k, p in est.best_params_.items()}
    if est.theta_ is not None:
        groups.update({f"theta/{k}": p.data for k, p in est.theta_.items()})
    if est.theta_h_ is not None:
        groups.update({f"theta_h/{k}": p.data for k, p in est.theta_h_.items()})
    save_checkpoint(os.path.join(run_dir, "checkpoint.slrt"), groups)
    return dict(est.test_metrics_)


def worker_count() -> int:
    raw = os.environ.get("SELAR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_config(cfg: dict, out_dir: str | None = None) -> dict:
    out = out_dir if out_dir is not None else cfg["out_dir"]
    g = load_dataset(cfg)
    jobs = [(seed, os.path.join(out, f"seed{seed}")) for seed in cfg["seeds"]]
    workers = worker_count()
    if workers == 1:
        results = [run_one(g, cfg, seed, run_dir) for seed, run_dir in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: run_one(g, cfg, *job), jobs))

    names = sorted({m for r in results for m in r})
    lines = ["metric,mean,std,n"]
    summary = {}
    for name in names:
        rep = aggregate_runs([r[name] for r in results if name in r], name=name)
        lines.append(f"{name},{rep.mean!r},{rep.std!r},{rep.n}")
        summary[name] = (rep.mean, rep.std, rep.n)
    atomic_write(os.path.join(out, "aggregate.csv"), "\n".join(lines) + "\n")
    return {"out_dir": out, "runs": len(results), "metrics": summary}


def _find_run_dirs(paths) -> list[str]:
    found = []
    for path in paths:
        if os.path.isfile(os.path.join(path, "manifest.json")):
            found.append(path)
            continue
        if not os.path.isdir(path):
            raise DataError(f"not a run directory: {path}")
        subs = [os.path.join(path, d) for d in sorted(os.listdir(path))]
        inner = [d for d in subs if os.path.isfile(os.path.join(d, "manifest.json"))]
        if not inner:
            raise DataError(f"no run dirs (manifest.json) under {path}")
        found.extend(inner)
    return found


def _read_run(run_dir: str) -> tuple[str, str, dict[str, float]]:
    try:
        with open(os.path.join(run_dir, "manifest.json"), encoding="utf-8") as fh:
            manifest = json.load(fh)
        model, scheme = manifest["model"], manifest["scheme"]
        # The fold count changes what a meta scheme computes, so runs
        # with different counts must not be averaged into one row.
        if scheme_flags(scheme)[1]:
            scheme = f"{scheme}/{manifest['config']['selar']['meta_folds']}-fold"
    except (OSError, json.JSONDecodeError, KeyError) as err:
        raise DataError(f"corrupt manifest in {run_dir}: {err}") from err
    metrics = {}
    with open(os.path.join(run_dir, "metrics.csv"), encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "epoch,split,metric,value":
            raise DataError(f"unexpected metrics.csv header in {run_dir}")
        for line in fh:
            epoch, split, metric, value = line.rstrip("\n").split(",")
            if split == "test":
                metrics[metric] = float(value)
    return model, scheme, metrics


def build_report(run_dirs) -> tuple[str, str]:
    """Comparison table over run dirs: (csv text, aligned text).

    Rows are (model, scheme) groups, where meta schemes carry their
    fold count in the scheme label; columns the union of test metrics,
    each cell mean±std over that group's runs, '-' where a group never
    reported the metric.
    """
    dirs = _find_run_dirs(run_dirs)
    groups: dict[tuple[str, str], list[dict]] = {}
    for d in dirs:
        model, scheme, metrics = _read_run(d)
        groups.setdefault((model, scheme), []).append(metrics)

    names = sorted({m for runs in groups.values() for r in runs for m in r})
    headers = ["model", "scheme"] + names
    rows = []
    for (model, scheme) in sorted(groups):
        row = [model, scheme]
        for name in names:
            vals = [r[name] for r in groups[(model, scheme)] if name in r]
            if not vals:
                row.append("-")
            else:
                rep = aggregate_runs(vals, name=name)
                row.append(f"{rep.mean:.4f}±{rep.std:.4f}")
        rows.append(row)

    csv_text = ",".join(headers) + "\n" + "".join(",".join(r) + "\n" for r in rows)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    text = "\n".join([fmt(headers), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows]) + "\n"
    return csv_text, text
