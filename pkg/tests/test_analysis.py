import numpy as np
import pytest

from selar.analysis import curve_csv, focal_reference, weight_curve_rows
from selar.aux_tasks import TaskSpec, build_task_registry
from selar.weighting import init_weighting_params


def registry_two_tasks():
    primary = TaskSpec(0, "link", "primary", "pair-binary")
    aux = TaskSpec(1, "deg", "degree", "node-multiclass", num_classes=3)
    return build_task_registry(primary, [(aux, None)])


def test_focal_reference_values():
    # At loss 0 the reference is 0; it grows monotonically and for easy
    # examples (small loss => confident p) it is strongly suppressed.
    x = np.array([0.0, 0.1, 1.0, 5.0])
    ref = focal_reference(x, gamma=2.0)
    assert ref[0] == 0.0
    assert np.all(np.diff(ref) > 0)
    assert ref[1] == pytest.approx((1 - np.exp(-0.1)) ** 2 * 0.1)
    assert ref[1] < 0.1 * 0.05


def test_curve_rows_cover_tasks_and_signs():
    registry = registry_two_tasks()
    theta = init_weighting_params(len(registry), np.random.default_rng(0))
    rows = weight_curve_rows(theta, registry, grid=np.linspace(0, 4, 5))
    # pair-binary primary sweeps both signs, the node task only +1
    assert len(rows) == 5 * 2 + 5
    assert {(r["task"], r["sign"]) for r in rows} == {(0, 1), (0, -1), (1, 1)}
    assert all(r["name"] in ("link", "deg") for r in rows)
    # zero-initialized final layer: every weight is exactly 0.5
    assert all(r["weight"] == 0.5 for r in rows)
    losses = [r["loss"] for r in rows if r["task"] == 1]
    assert losses == [0.0, 1.0, 2.0, 3.0, 4.0]
    for r in rows:
        assert r["focal_ref"] == pytest.approx(focal_reference(np.array([r["loss"]]))[0])


def test_curve_grid_validated():
    registry = registry_two_tasks()
    theta = init_weighting_params(len(registry), np.random.default_rng(0))
    with pytest.raises(ValueError):
        weight_curve_rows(theta, registry, grid=np.array([0.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        weight_curve_rows(theta, registry, grid=np.array([0.0, np.inf]))
    with pytest.raises(ValueError):
        weight_curve_rows(theta, registry, grid=np.array([1.0, 0.5]))


def test_curve_csv_is_byte_stable():
    registry = registry_two_tasks()
    theta = init_weighting_params(len(registry), np.random.default_rng(3))
    nudge = np.random.default_rng(4)
    for p in theta.values():
        p.data += 0.1 * nudge.normal(size=p.shape)

    def render():
        return curve_csv(weight_curve_rows(theta, registry))

    first = render()
    assert render() == first
    lines = first.splitlines()
    assert lines[0] == "task,name,sign,loss,weight,focal_ref"
    assert len(lines) == 1 + len(weight_curve_rows(theta, registry))
    # repr round-trips floats exactly
    cell = lines[1].split(",")[4]
    assert float(cell) == weight_curve_rows(theta, registry)[0]["weight"]
    assert first.endswith("\n")
