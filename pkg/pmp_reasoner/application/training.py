"""
Teacher-forced training: batches of rollouts, summed BCE losses, Adam.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..domain.entities import ExperimentConfig, LossBreakdown, Rollout, RolloutMode
from ..domain.errors import InvalidInputError, TrainingDivergedError
from ..infrastructure.checkpoint_store import save_checkpoint
from ..infrastructure.report_store import MetricsLog
from ..modeling.baselines import RolloutModel, build_model
from ..modeling.diff_core import AdamState, adam_step, scale, sum_scalars
from ..modeling.params import ModelParams, components_for
from .evaluation import evaluate_rollouts
from .rollout_runner import mean_breakdown, run_rollout

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int], None]


@dataclass
class TrainingRun:
    """Trained parameters of one seed and its per-iteration loss history."""

    seed: int
    params: ModelParams
    history: List[LossBreakdown] = field(default_factory=list)
    checkpoint: Optional[Path] = None


def checkpoint_name(seed: int, iteration: Optional[int] = None) -> str:
    return f"seed_{seed}.npz" if iteration is None else f"seed_{seed}_iter_{iteration}.npz"


class TrainModelUseCase:
    """Train one model kind over a list of seeds."""

    def __init__(
        self,
        config: ExperimentConfig,
        output_dir: Optional[Path] = None,
        eval_rollouts: Optional[Sequence[Rollout]] = None,
        progress: Optional[ProgressCallback] = None,
        ood_rollouts: Optional[Sequence[Rollout]] = None,
    ):
        self.config = config
        self.output_dir = output_dir
        self.eval_rollouts = list(eval_rollouts) if eval_rollouts else []
        self.ood_rollouts = list(ood_rollouts) if ood_rollouts else []
        self.progress = progress
        self.metrics = MetricsLog(output_dir / "metrics.csv") if output_dir else None

    def execute(self, rollouts: Sequence[Rollout], seeds: Optional[Sequence[int]] = None) -> List[TrainingRun]:
        return [self.train_seed(rollouts, seed) for seed in (seeds or self.config.seeds)]

    def train_seed(
        self,
        rollouts: Sequence[Rollout],
        seed: int,
        params: Optional[ModelParams] = None,
    ) -> TrainingRun:
        if not rollouts:
            raise InvalidInputError("training needs at least one rollout")
        config = self.config
        init_seq, batch_seq = np.random.SeedSequence(seed).spawn(2)
        if params is None:
            params = ModelParams.initialize(
                config.hidden_dim,
                np.random.default_rng(init_seq),
                components_for(config.model, config.shared_processor),
            )
        batch_rng = np.random.default_rng(batch_seq)
        model = build_model(config.model, params, config)
        optimizer = AdamState(learning_rate=config.learning_rate)
        run = TrainingRun(seed=seed, params=params)

        logger.info(
            "training %s (seed %d): %d parameters, %d iterations, batch %d",
            config.model.value, seed, params.count(), config.iterations, config.batch_size,
        )

        for iteration in range(1, config.iterations + 1):
            batch = batch_rng.integers(0, len(rollouts), size=config.batch_size)
            outcomes = [run_rollout(model, rollouts[int(i)], RolloutMode.TEACHER_FORCED) for i in batch]
            loss = scale(sum_scalars(o.total for o in outcomes), 1.0 / len(outcomes))
            losses = mean_breakdown([o.breakdown() for o in outcomes])
            if not np.isfinite(loss.item()):
                raise TrainingDivergedError(iteration, self._dump_diagnostics(seed, iteration, losses, params))

            params.zero_grad()
            loss.backward()
            adam_step(params.named_tensors(), params.gradients(), optimizer)
            run.history.append(losses)

            eval_accuracy, ood_accuracy = self._maybe_evaluate(model, seed, iteration)
            evaluated = eval_accuracy is not None or ood_accuracy is not None
            if iteration % config.log_every == 0 or evaluated:
                logger.info(
                    "seed %d iter %d: answer %.4f relevance %.4f persistency %.4f values %.4f total %.4f",
                    seed, iteration, losses.answer_bce, losses.relevance_bce,
                    losses.persistency_bce, losses.node_value_bce, losses.total,
                )
                if self.metrics:
                    self.metrics.record(seed, iteration, losses, eval_accuracy, ood_accuracy)
            if config.checkpoint_every and iteration % config.checkpoint_every == 0:
                self._save(params, seed, iteration, checkpoint_name(seed, iteration))
            if self.progress:
                self.progress(iteration, config.iterations)

        run.checkpoint = self._save(params, seed, config.iterations, checkpoint_name(seed))
        return run

    def _maybe_evaluate(
        self, model: RolloutModel, seed: int, iteration: int
    ) -> Tuple[Optional[float], Optional[float]]:
        """Free-mode query accuracy on the in-distribution and out-of-distribution sets."""
        every = self.config.eval_every
        if not every or iteration % every != 0:
            return None, None
        accuracies: List[Optional[float]] = []
        for label, rollouts in (("in-distribution", self.eval_rollouts), ("ood", self.ood_rollouts)):
            if not rollouts:
                accuracies.append(None)
                continue
            metrics = evaluate_rollouts(model, rollouts, seed)
            logger.info(
                "seed %d iter %d: %s free-mode query accuracy %.3f",
                seed, iteration, label, metrics.query_accuracy,
            )
            accuracies.append(metrics.query_accuracy)
        return accuracies[0], accuracies[1]

    def _save(self, params: ModelParams, seed: int, iteration: int, name: str) -> Optional[Path]:
        if self.output_dir is None:
            return None
        path = save_checkpoint(
            self.output_dir / name, params, self.config.model, self.config, seed, iteration
        )
        logger.debug("checkpoint written to %s", path)
        return path

    def _dump_diagnostics(
        self, seed: int, iteration: int, losses: LossBreakdown, params: ModelParams
    ) -> Optional[Path]:
        if self.output_dir is None:
            return None
        path = self.output_dir / f"diverged_seed_{seed}_iter_{iteration}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        dump = {
            "seed": seed,
            "iteration": iteration,
            "losses": losses.model_dump(),
            "parameter_norms": {
                name: float(np.linalg.norm(values)) for name, values in params.arrays().items()
            },
            "non_finite_parameters": [
                name for name, values in params.arrays().items() if not np.all(np.isfinite(values))
            ],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(dump, f, indent=2, sort_keys=True, default=str)
        return path
