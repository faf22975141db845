import numpy as np
import pytest

from increlora.tasks import PlantedTask, TaskSpec


def _spec(**kw):
    return TaskSpec(**{"dims": [5, 7, 6, 3], "planted_ranks": [1, 4, 0], "planted_scale": [1.0, 0.5, 2.0], **kw})


def test_planted_ranks_exact():
    task = PlantedTask(_spec(), 0)
    for delta, rho, s in zip(task.planted, [1, 4, 0], [1.0, 0.5, 2.0]):
        sv = np.linalg.svd(delta, compute_uv=False)
        assert np.linalg.matrix_rank(delta, tol=1e-10) == rho
        np.testing.assert_allclose(sv[:rho], s, rtol=1e-12)


def test_batches_are_pure_functions_of_step():
    t1, t2 = PlantedTask(_spec(), 3), PlantedTask(_spec(), 3)
    x1, y1 = t1.batch(17, 8)
    x2, y2 = t2.batch(17, 8)
    assert x1.tobytes() == x2.tobytes() and y1.tobytes() == y2.tobytes()
    assert not np.array_equal(t1.batch(18, 8)[0], x1)


def test_eval_set_is_noiseless():
    task = PlantedTask(_spec(noise=0.5), 1)
    x, y = task.eval_set()
    np.testing.assert_array_equal(y, task.teacher(x))


def test_classification_labels():
    task = PlantedTask(_spec(kind="classification"), 2)
    _, y = task.batch(1, 16)
    assert y.dtype == np.int64 and y.min() >= 0 and y.max() < 3


def test_spec_seed_overrides_run_seed():
    a = PlantedTask(_spec(seed=9), 0)
    b = PlantedTask(_spec(seed=9), 5)
    assert a.w0[0].tobytes() == b.w0[0].tobytes()


@pytest.mark.parametrize("kw", [{"planted_ranks": [1, 9, 0]}, {"planted_ranks": [1]},
                                {"planted_scale": [1.0]}, {"layer_types": ["q", "v"]}])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        PlantedTask(_spec(**kw), 0)


def test_grid_position():
    task = PlantedTask(TaskSpec(dims=[4] * 5, planted_ranks=[1] * 4, layer_types=["q", "v"]), 0)
    assert [task.module_grid_position(k) for k in range(4)] == [(0, 0), (0, 1), (1, 0), (1, 1)]
