import math

import numpy as np
import pytest

from pmp_reasoner.application.generate_dataset import generate_rollouts
from pmp_reasoner.application.training import TrainModelUseCase, checkpoint_name
from pmp_reasoner.domain.entities import ModelKind
from pmp_reasoner.domain.errors import InvalidInputError, TrainingDivergedError
from pmp_reasoner.infrastructure.checkpoint_store import load_checkpoint
from pmp_reasoner.infrastructure.report_store import read_metrics


def test_checkpoint_names():
    assert checkpoint_name(3) == "seed_3.npz"
    assert checkpoint_name(3, 500) == "seed_3_iter_500.npz"


def test_smoke_run_writes_checkpoint_and_metrics(tiny_config, tiny_rollouts, tmp_path):
    runs = TrainModelUseCase(tiny_config, tmp_path).execute(tiny_rollouts)

    assert len(runs) == 1
    run = runs[0]
    assert run.checkpoint == tmp_path / "seed_0.npz"
    assert len(run.history) == tiny_config.iterations
    assert all(math.isfinite(b.total) for b in run.history)

    checkpoint = load_checkpoint(run.checkpoint)
    assert checkpoint.kind is ModelKind.PMP
    assert checkpoint.seed == 0
    assert checkpoint.iteration == tiny_config.iterations
    for name, values in run.params.arrays().items():
        np.testing.assert_array_equal(checkpoint.params.arrays()[name], values)

    rows = read_metrics(tmp_path / "metrics.csv")
    assert [int(r["iteration"]) for r in rows] == [1, 2, 3]
    assert all(r["eval_query_accuracy"] == "" for r in rows)


def test_training_is_deterministic(tiny_config, tiny_rollouts):
    first = TrainModelUseCase(tiny_config).train_seed(tiny_rollouts, seed=4)
    second = TrainModelUseCase(tiny_config).train_seed(tiny_rollouts, seed=4)
    assert first.history == second.history
    for name, values in first.params.arrays().items():
        np.testing.assert_array_equal(second.params.arrays()[name], values)


def test_seeds_give_different_parameters(tiny_config, tiny_rollouts):
    a, b = TrainModelUseCase(tiny_config).execute(tiny_rollouts, seeds=[0, 1])
    assert not np.array_equal(a.params.arrays()["readout.weight"], b.params.arrays()["readout.weight"])


def test_loss_decreases_on_a_single_rollout(tiny_config, handmade_rollout):
    config = tiny_config.model_copy(update={"iterations": 60, "batch_size": 1, "learning_rate": 0.01})
    run = TrainModelUseCase(config).train_seed([handmade_rollout], seed=0)
    first = run.history[0].total
    last = sum(b.total for b in run.history[-5:]) / 5
    assert last < first


@pytest.mark.parametrize("kind", [ModelKind.OVERWRITE, ModelKind.SELECTIVE, ModelKind.ORACLE])
def test_baselines_train(tiny_config, tiny_rollouts, kind, tmp_path):
    config = tiny_config.model_copy(update={"model": kind})
    run = TrainModelUseCase(config, tmp_path).train_seed(tiny_rollouts, seed=0)
    assert load_checkpoint(run.checkpoint).kind is kind
    assert all(math.isfinite(b.total) for b in run.history)


def test_periodic_checkpoints_and_evaluation(tiny_config, tiny_rollouts, tmp_path):
    config = tiny_config.model_copy(update={"iterations": 4, "checkpoint_every": 2, "eval_every": 2})
    ood = generate_rollouts(seed=5, size=4, updates=3, queries=2, count=2, max_workers=1)
    TrainModelUseCase(config, tmp_path, eval_rollouts=tiny_rollouts[:2], ood_rollouts=ood).execute(tiny_rollouts)

    assert (tmp_path / "seed_0_iter_2.npz").exists()
    assert (tmp_path / "seed_0_iter_4.npz").exists()
    assert load_checkpoint(tmp_path / "seed_0_iter_2.npz").iteration == 2
    rows = {int(r["iteration"]): r for r in read_metrics(tmp_path / "metrics.csv")}
    for iteration in (1, 3):
        assert rows[iteration]["eval_query_accuracy"] == rows[iteration]["eval_ood_query_accuracy"] == ""
    for iteration in (2, 4):
        assert 0.0 <= float(rows[iteration]["eval_query_accuracy"]) <= 1.0
        assert 0.0 <= float(rows[iteration]["eval_ood_query_accuracy"]) <= 1.0


def test_ood_evaluation_alone(tiny_config, tiny_rollouts, tmp_path):
    config = tiny_config.model_copy(update={"iterations": 2, "eval_every": 2})
    ood = generate_rollouts(seed=5, size=4, updates=3, queries=2, count=2, max_workers=1)
    TrainModelUseCase(config, tmp_path, ood_rollouts=ood).execute(tiny_rollouts)
    last = read_metrics(tmp_path / "metrics.csv")[-1]
    assert last["eval_query_accuracy"] == ""
    assert 0.0 <= float(last["eval_ood_query_accuracy"]) <= 1.0


def test_progress_callback(tiny_config, tiny_rollouts):
    seen = []
    TrainModelUseCase(tiny_config, progress=lambda i, total: seen.append((i, total))).execute(tiny_rollouts)
    assert seen == [(1, 3), (2, 3), (3, 3)]


def test_non_finite_loss_raises_with_diagnostics(tiny_config, tiny_rollouts, make_params, tmp_path):
    params = make_params(tiny_config)
    params["readout"].weight.data[:] = np.nan

    with pytest.raises(TrainingDivergedError) as excinfo:
        TrainModelUseCase(tiny_config, tmp_path).train_seed(tiny_rollouts, seed=0, params=params)

    assert excinfo.value.iteration == 1
    assert excinfo.value.dump_path == tmp_path / "diverged_seed_0_iter_1.json"
    assert "readout.weight" in excinfo.value.dump_path.read_text()


def test_needs_rollouts(tiny_config):
    with pytest.raises(InvalidInputError):
        TrainModelUseCase(tiny_config).train_seed([], seed=0)
