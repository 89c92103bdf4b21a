"""Inspection of the learned weighting function.

The weight-vs-loss curves are the main qualitative check: for each task
and label sign, sweep a grid of loss values through V and dump the
resulting weight, next to the focal-style reference (1-p)^gamma * loss
with p = exp(-loss) so both live on the same axis.
"""

from __future__ import annotations

import numpy as np

from .aux_tasks import TaskRegistry
from .weighting import weight_examples


def focal_reference(losses: np.ndarray, gamma: float = 2.0) -> np.ndarray:
    losses = np.asarray(losses, dtype=np.float64)
    return (1.0 - np.exp(-losses)) ** gamma * losses


def weight_curve_rows(
    theta: dict,
    registry: TaskRegistry,
    grid=None,
    signs=(1.0, -1.0),
    focal_gamma: float = 2.0,
    prefix: str = "vnet",
) -> list[dict]:
    """Rows (task, sign, loss, weight, focal_ref) over an ascending grid."""
    if grid is None:
        grid = np.linspace(0.0, 10.0, 21)
    grid = np.asarray(grid, dtype=np.float64)
    if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
        raise ValueError("loss grid must be finite and strictly ascending")
    focal = focal_reference(grid, focal_gamma)
    rows = []
    for tid in registry.task_ids:
        spec = registry.spec(tid)
        task_signs = signs if spec.head_kind == "pair-binary" else (1.0,)
        for sign in task_signs:
            weights = weight_examples(
                theta, grid, np.full(len(grid), tid), np.full(len(grid), sign), prefix=prefix
            ).data
            for loss, w, ref in zip(grid, weights, focal):
                rows.append(
                    {
                        "task": tid,
                        "name": spec.name,
                        "sign": int(sign),
                        "loss": float(loss),
                        "weight": float(w),
                        "focal_ref": float(ref),
                    }
                )
    return rows


def curve_csv(rows: list[dict]) -> str:
    """Byte-stable CSV rendering of weight-curve rows."""
    lines = ["task,name,sign,loss,weight,focal_ref"]
    for r in rows:
        lines.append(
            f"{r['task']},{r['name']},{r['sign']},{r['loss']!r},{r['weight']!r},{r['focal_ref']!r}"
        )
    return "\n".join(lines) + "\n"
