"""
Learning procedures for the coarse-to-fine model and the training loop.

Pipeline:  maximize log p(s* | x, d) + log p(y* | s*, x) on the distant label.
Reinforce: sample s ~ p(s | x, d) and follow
           grad log p(y* | s, x) + R * grad log p(s | x, d),  R = log p(y* | s, x),
           with probability r^e of falling back to the pipeline objective.
Soft:      maximize log p(y* | x, d_hat) with d_hat the probability-weighted blend.
Base:      maximize log p(y* | x, first N document tokens) with the flat model.
"""

import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch import Tensor

from src.errors import TrainingError
from src.evaluation.metrics import EvalReport, evaluate_base, evaluate_model
from src.models.coarse_to_fine import BaseModel, CoarseToFineModel
from src.models.selection import SelectionDistribution
from src.models.summary import HardSummary, sample_log_prob
from src.nn import ops
from src.nn.checkpoint import save_checkpoint
from src.nn.optim import ClippedAdam, UpdateResult
from src.parsing.document import FlatExample, PreparedExample
from src.parsing.vocab import Vocabulary

logger = logging.getLogger(__name__)

METHODS = ("pipeline", "reinforce", "soft", "base")
STREAMS = ("shuffle", "curriculum", "sampling")
METRIC_COLUMNS = ["epoch", "split", "answer_acc", "sent_acc", "objective"]


@dataclass
class TrainConfig:
    method: str = "reinforce"
    k: int = 1
    decay: float = 0.8
    epochs: int = 10
    batch_size: int = 16
    lr: float = 1e-3
    clip: float = 5.0
    seed: int = 0
    baseline: str = "none"
    mode: str = "hard"

    def __post_init__(self):
        if self.method not in METHODS:
            raise TrainingError(f"unknown training method {self.method!r}")
        if not 0.3 <= self.decay <= 1.0:
            raise TrainingError(f"curriculum decay must be in [0.3, 1], got {self.decay}")
        if self.k < 1:
            raise TrainingError(f"K must be >= 1, got {self.k}")
        if self.epochs < 0 or self.batch_size < 1:
            raise TrainingError(f"bad epochs/batch size ({self.epochs}, {self.batch_size})")
        if self.method == "soft":
            self.mode = "soft"
        elif self.mode == "soft" and self.method != "base":
            raise TrainingError(f"soft summaries are trained with the soft method, not {self.method!r}")

    @classmethod
    def from_config(cls, config) -> "TrainConfig":
        return cls(
            method=config["train.method"],
            k=config["summary.k"],
            decay=config["train.decay"],
            epochs=config["train.epochs"],
            batch_size=config["train.batch_size"],
            lr=config["train.lr"],
            clip=config["train.clip"],
            seed=config["train.seed"],
            baseline=config["reinforce.baseline"],
            mode=config["summary.mode"],
        )


@dataclass
class StepReport:
    """
    Outcome of one example's update. `method` is the objective actually used
    ("distant", "reinforce", "soft" or "base").
    """
    objective: float
    method: str
    sampled: List[int] = field(default_factory=list)
    reward: Optional[float] = None
    grad_norm: float = 0.0
    skipped: bool = False


class RandomStreams:
    """One independent numpy Generator per purpose, derived from the run seed."""

    def __init__(self, seed: int):
        self.seed = seed
        for index, name in enumerate(STREAMS):
            setattr(self, name, np.random.default_rng([seed, index]))


class RewardBaseline:
    """Running mean of observed rewards (reinforce.baseline=mean)."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0

    def value(self) -> float:
        return self.mean

    def update(self, reward: float) -> None:
        self.count += 1
        self.mean += (reward - self.mean) / self.count


# -- objectives -------------------------------------------------------------


def pipeline_objective(model: CoarseToFineModel, ex: PreparedExample) -> Tensor:
    """J = log p(s* | x, d) + log p(y* | s*, x) with s* the distant label."""
    if ex.gold_sentence is None:
        raise TrainingError("pipeline objective needs a gold sentence label")
    dist = model.select(ex)
    gold = ex.gold_sentence
    return dist.log_probs[gold] + model.answer_loglik(ex, model.forced_summary(ex, gold))


def soft_objective(model: CoarseToFineModel, ex: PreparedExample) -> Tensor:
    dist = model.select(ex)
    return model.answer_loglik(ex, model.soft_summary(ex, dist))


def base_objective(model: BaseModel, ex: FlatExample) -> Tensor:
    return model.answer_loglik(ex)


def reinforce_surrogate(model: CoarseToFineModel, ex: PreparedExample, dist: SelectionDistribution,
                        summary: HardSummary, baseline: float = 0.0) -> Tuple[Tensor, float]:
    """
    Scalar whose gradient is the sampled estimator
    grad R + (R - b) * grad log p(s | x, d).

    For K > 1 the selection term is the log-probability of the ordered draw
    without replacement.

    Returns:
        (surrogate, reward R)
    """
    reward = model.answer_loglik(ex, summary)
    log_p_selection = sample_log_prob(dist, summary.selection_order)
    advantage = reward.detach() - baseline
    return reward + advantage * log_p_selection, float(reward.detach())


def curriculum_coin(rng: np.random.Generator, decay: float, epoch: int) -> bool:
    """True with probability decay ** epoch: use distant supervision this step."""
    return bool(rng.random() < decay ** epoch)


# -- single-example steps ---------------------------------------------------


def _apply(optimizer: ClippedAdam, loss: Tensor) -> UpdateResult:
    optimizer.zero_grad()
    loss.backward()
    return optimizer.step()


def pipeline_step(ex: PreparedExample, model: CoarseToFineModel, optimizer: ClippedAdam) -> StepReport:
    objective = pipeline_objective(model, ex)
    update = _apply(optimizer, -objective)
    return StepReport(objective=float(objective.detach()), method="distant", sampled=[ex.gold_sentence],
                      grad_norm=update.grad_norm, skipped=update.skipped)


def soft_step(ex: PreparedExample, model: CoarseToFineModel, optimizer: ClippedAdam) -> StepReport:
    objective = soft_objective(model, ex)
    update = _apply(optimizer, -objective)
    return StepReport(objective=float(objective.detach()), method="soft", grad_norm=update.grad_norm,
                      skipped=update.skipped)


def reinforce_loss(ex: PreparedExample, model: CoarseToFineModel, cfg: TrainConfig, streams: RandomStreams,
                   epoch: int, baseline: Optional[RewardBaseline] = None) -> Tuple[Tensor, StepReport]:
    """Loss of one reinforce step, after the curriculum coin picks the objective."""
    if curriculum_coin(streams.curriculum, cfg.decay, epoch):
        objective = pipeline_objective(model, ex)
        return -objective, StepReport(objective=float(objective.detach()), method="distant", sampled=[ex.gold_sentence])

    dist = model.select(ex)
    summary = model.hard_summary(ex, dist, cfg.k, mode="sample", rng=streams.sampling)
    b = baseline.value() if baseline is not None and cfg.baseline == "mean" else 0.0
    surrogate, reward = reinforce_surrogate(model, ex, dist, summary, baseline=b)
    if baseline is not None:
        baseline.update(reward)
    return -surrogate, StepReport(objective=reward, method="reinforce", sampled=list(summary.selection_order),
                                  reward=reward)


def reinforce_step(ex: PreparedExample, model: CoarseToFineModel, optimizer: ClippedAdam, cfg: TrainConfig,
                   streams: RandomStreams, epoch: int,
                   baseline: Optional[RewardBaseline] = None) -> StepReport:
    loss, report = reinforce_loss(ex, model, cfg, streams, epoch, baseline)
    update = _apply(optimizer, loss)
    report.grad_norm, report.skipped = update.grad_norm, update.skipped
    return report


# -- training loop ----------------------------------------------------------


@dataclass
class TrainingResult:
    metrics: pd.DataFrame
    checkpoints: List[str]
    best_checkpoint: str
    best_dev_accuracy: float
    steps: List[StepReport]


class Trainer:
    """
    Mini-batch trainer: per-example losses are averaged over the batch and
    applied in one clipped Adam step.
    """

    def __init__(self, model, vocab: Vocabulary, cfg: TrainConfig, config=None):
        self.model = model
        self.vocab = vocab
        self.cfg = cfg
        self.config = config
        self.streams = RandomStreams(cfg.seed)
        self.baseline = RewardBaseline()
        self.optimizer = ClippedAdam(model.parameters(), lr=cfg.lr, clip_norm=cfg.clip)

    def example_loss(self, ex, epoch: int) -> Tuple[Tensor, StepReport]:
        method = self.cfg.method
        if method == "pipeline":
            objective = pipeline_objective(self.model, ex)
            return -objective, StepReport(objective=float(objective.detach()), method="distant", sampled=[ex.gold_sentence])
        if method == "soft":
            objective = soft_objective(self.model, ex)
            return -objective, StepReport(objective=float(objective.detach()), method="soft")
        if method == "base":
            objective = base_objective(self.model, ex)
            return -objective, StepReport(objective=float(objective.detach()), method="base")
        return reinforce_loss(ex, self.model, self.cfg, self.streams, epoch, self.baseline)

    def train_batch(self, batch: Sequence, epoch: int) -> List[StepReport]:
        self.optimizer.zero_grad()
        reports = []
        for ex in batch:
            loss, report = self.example_loss(ex, epoch)
            (loss / len(batch)).backward()
            reports.append(report)
        update = self.optimizer.step()
        for report in reports:
            report.grad_norm, report.skipped = update.grad_norm, update.skipped
        logger.debug("epoch %d batch of %d: grad_norm=%.4g skipped=%s", epoch, len(batch),
                     update.grad_norm, update.skipped)
        return reports

    def train_epoch(self, examples: Sequence, epoch: int) -> List[StepReport]:
        order = self.streams.shuffle.permutation(len(examples))
        reports = []
        size = self.cfg.batch_size
        for start in range(0, len(order), size):
            batch = [examples[i] for i in order[start:start + size]]
            reports.extend(self.train_batch(batch, epoch))
        return reports

    def evaluate(self, examples: Sequence, split: str) -> EvalReport:
        if self.cfg.method == "base":
            return evaluate_base(self.model, examples, self.vocab, method=split)
        return evaluate_model(self.model, examples, self.vocab, method=split, mode=self.cfg.mode, k=self.cfg.k)


def _metric_rows(epoch: int, reports: Dict[str, EvalReport]) -> List[dict]:
    return [
        {"epoch": epoch, "split": split, "answer_acc": report.answer_accuracy,
         "sent_acc": report.sentence_accuracy, "objective": report.mean_log_prob}
        for split, report in reports.items()
    ]


def run_training(train: Sequence, dev: Sequence, vocab: Vocabulary, config, out_dir: str,
                 model=None) -> TrainingResult:
    """
    Train for `train.epochs` epochs, evaluating train and dev after every
    epoch (epoch 0 is the untrained model) and writing one checkpoint per
    epoch, best.npz (highest dev answer accuracy), metrics.csv, vocab.json
    and config.json into `out_dir`.
    """
    if not train:
        raise TrainingError("training split is empty")
    if not dev:
        raise TrainingError("dev split is empty")

    cfg = TrainConfig.from_config(config)
    if model is None:
        model_cls = BaseModel if cfg.method == "base" else CoarseToFineModel
        model = model_cls.from_config(config, vocab)

    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    vocab.save(str(out / "vocab.json"))
    config.save(str(out / "config.json"))

    trainer = Trainer(model, vocab, cfg, config)
    rows: List[dict] = []
    checkpoints: List[str] = []
    steps: List[StepReport] = []
    best_path = str(out / "best.npz")
    best_accuracy = -1.0

    logger.info("Training %s (K=%d, r=%.2f) on %d examples, dev %d, %d epochs",
                cfg.method, cfg.k, cfg.decay, len(train), len(dev), cfg.epochs)

    with ops.finite_checks(config["tensor.check_finite"]):
        for epoch in range(cfg.epochs + 1):
            if epoch:
                epoch_steps = trainer.train_epoch(train, epoch)
                steps.extend(epoch_steps)
                distant = sum(s.method == "distant" for s in epoch_steps)
                logger.debug("epoch %d: %d/%d distant-supervision steps", epoch, distant, len(epoch_steps))

            model.eval()
            reports = {"train": trainer.evaluate(train, "train"), "dev": trainer.evaluate(dev, "dev")}
            model.train()
            epoch_rows = _metric_rows(epoch, reports)
            rows.extend(epoch_rows)
            for row in epoch_rows:
                logger.info("epoch=%d split=%s answer_acc=%.4f sent_acc=%s objective=%.4f", row["epoch"],
                            row["split"], row["answer_acc"],
                            "n/a" if row["sent_acc"] is None else f"{row['sent_acc']:.4f}", row["objective"])

            path = save_checkpoint(
                str(out / "checkpoints" / f"epoch_{epoch:03d}.npz"), model,
                vocab_hash=vocab.vocab_hash(), config_hash=config.config_hash(),
                meta={"epoch": epoch, "method": cfg.method, "dev_answer_acc": reports["dev"].answer_accuracy},
            )
            checkpoints.append(path)
            if reports["dev"].answer_accuracy > best_accuracy:
                best_accuracy = reports["dev"].answer_accuracy
                shutil.copyfile(path, best_path)

    metrics = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    metrics.to_csv(out / "metrics.csv", index=False)
    return TrainingResult(metrics=metrics, checkpoints=checkpoints, best_checkpoint=best_path,
                          best_dev_accuracy=best_accuracy, steps=steps)
