"""Semi-weakly supervised training.

A run is a whole-bag warm-up followed by ``rounds`` pseudo bag rounds. Each
round builds a :class:`RoundPlan` with the EMA teacher, then trains the
student one pseudo bag per step: labeled pseudo bags through cross-entropy,
unlabeled ones through consistency with the teacher's prediction on the
unmerged input. The teacher follows the student by EMA after every step.
Unlabeled pseudo bags the teacher assigns a class other than their parent's
sit a round out, both as consistency targets and as MergeUp partners.

The returned checkpoint is the best of the warm-up and every round by
validation AUC.

All randomness derives from ``TrainConfig.seed`` through named streams, so a
run is bitwise reproducible.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Final

import numpy as np

from semiweak_mil.augmentation.mergeup import PartnerPool, merge, pseudo_bag_features
from semiweak_mil.data.bags import Bag, Dataset, PseudoBag
from semiweak_mil.errors import ConfigError, ContractError, NumericError
from semiweak_mil.evaluation.metrics import MetricsBundle, PredictionDump, compute_metrics
from semiweak_mil.evaluation.pseacc import pse_acc
from semiweak_mil.model.abmil import MilParams, bind, ema_update, forward, forward_on_tape, init_params
from semiweak_mil.model.checkpoint import Checkpoint
from semiweak_mil.observability.metrics import TrainingMetrics
from semiweak_mil.pseudobags.adapse import RoundPlan, build_round_plan, gamma_ada_schedule, verify_partition
from semiweak_mil.runtime import map_ordered
from semiweak_mil.tensor import Node, Tape

from .config import TrainConfig
from .losses import consistency_on_tape, supervised_loss, supervised_on_tape, total_on_tape
from .optim import Adam
from .report import EpochRecord, RoundRecord, TrainReport

logger = logging.getLogger(__name__)

_STREAMS: Final[dict[str, int]] = {"init": 0, "split": 1, "merge": 2, "shuffle": 3}


def sub_seed(seed: int, stream: str, *extra: int) -> int:
    """Seed of the named random stream (``init``, ``split``, ``merge`` or ``shuffle``)."""

    return int(np.random.SeedSequence([seed, _STREAMS[stream], *extra]).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class LabeledSample:
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class UnlabeledSample:
    teacher_features: np.ndarray
    student_features: np.ndarray


Sample = LabeledSample | UnlabeledSample
RoundCallback = Callable[[RoundRecord, RoundPlan], None]


@dataclass(frozen=True)
class Evaluation:
    dump: PredictionDump
    metrics: MetricsBundle

    @property
    def loss(self) -> float:
        return supervised_loss(self.dump.probs, self.dump.true)


def evaluate(
    model: MilParams,
    bags: Sequence[Bag],
    *,
    class_names: Sequence[str] | None = None,
    workers: int = 1,
) -> Evaluation:
    """Forward every whole bag and score the predictions. ``model`` is left untouched."""

    if not bags:
        raise ContractError("Evaluation needs at least one bag.")
    predictions = map_ordered(lambda bag: forward(model, bag.features), list(bags), max_workers=workers)
    dump = PredictionDump(
        true=np.array([bag.label for bag in bags]),
        pred=np.array([prediction.label for prediction in predictions]),
        probs=np.stack([prediction.probs for prediction in predictions]),
        ids=tuple(bag.id for bag in bags),
    )
    return Evaluation(dump=dump, metrics=compute_metrics(dump, class_names))


def _mean(tape: Tape, terms: list[Node]) -> Node | None:
    if not terms:
        return None
    total = terms[0]
    for term in terms[1:]:
        total = tape.add(total, term)
    return tape.scale(total, 1.0 / len(terms))


def loss_and_gradients(
    student: MilParams,
    teacher: MilParams | None,
    *,
    labeled: Sequence[LabeledSample] = (),
    unlabeled: Sequence[UnlabeledSample] = (),
) -> tuple[float, list[np.ndarray]]:
    """Total loss ``0.5 * L_con + 0.5 * L_sup`` over a batch and its gradient per student array.

    Each term is the mean over its samples; an empty term contributes zero.
    Teacher predictions are constants on the tape.
    """

    if not labeled and not unlabeled:
        raise ContractError("A batch needs at least one sample.")
    if unlabeled and teacher is None:
        raise ContractError("Unlabeled samples need a teacher.")
    tape = Tape()
    nodes = bind(tape, student)
    supervised = [
        supervised_on_tape(tape, forward_on_tape(tape, nodes, sample.features)[0], sample.label)
        for sample in labeled
    ]
    consistency = [
        consistency_on_tape(
            tape,
            forward(teacher, sample.teacher_features).probs,
            forward_on_tape(tape, nodes, sample.student_features)[0],
        )
        for sample in unlabeled
    ]
    loss = total_on_tape(tape, _mean(tape, consistency), _mean(tape, supervised))
    return float(loss.value[0, 0]), tape.gradients(loss, nodes.leaves())


@dataclass
class _Plateau:
    patience: int
    best: float = math.inf
    since: int = 0

    def update(self, value: float) -> bool:
        if value < self.best:
            self.best = value
            self.since = 0
            return True
        self.since += 1
        return False

    @property
    def exhausted(self) -> bool:
        return self.since >= self.patience


class SemiWeakTrainer:
    """Mutable training state for one run; use :func:`train` for the one-shot API."""

    def __init__(
        self,
        ds: Dataset,
        cfg: TrainConfig,
        *,
        metrics: TrainingMetrics | None = None,
        round_callback: RoundCallback | None = None,
    ) -> None:
        self.ds = ds
        self.cfg = cfg
        self.metrics = metrics if metrics is not None else TrainingMetrics()
        self.round_callback = round_callback
        self.train_bags = ds.subset("train")
        self.val_bags = ds.subset("val")
        self.test_bags = ds.subset("test")
        if not self.train_bags or not self.val_bags:
            raise ConfigError(
                "Training needs non-empty train and val splits.",
                details=f"train={len(self.train_bags)}, val={len(self.val_bags)}",
            )
        self.bags = ds.by_id()
        self.priority = ds.priority
        self.settings = cfg.assignment_settings()
        self.student = init_params(ds.dim, cfg.hidden_dim, ds.num_classes, sub_seed(cfg.seed, "init"))
        self.teacher: MilParams | None = None
        self.optimizer = Adam(self.student, lr=cfg.lr_initial)
        self._lr_plateau = _Plateau(max(1, cfg.patience // 2))
        self._merge_rng = np.random.default_rng(sub_seed(cfg.seed, "merge"))
        self._shuffle_rng = np.random.default_rng(sub_seed(cfg.seed, "shuffle"))
        self._whole_bags = [LabeledSample(bag.rows(np.arange(bag.num_instances)), bag.label) for bag in self.train_bags]

    # -- steps --------------------------------------------------------------------

    def _step(self, sample: Sample) -> float:
        if isinstance(sample, LabeledSample):
            loss, grads = loss_and_gradients(self.student, self.teacher, labeled=[sample])
        else:
            loss, grads = loss_and_gradients(self.student, self.teacher, unlabeled=[sample])
        self.student = self.optimizer.step(self.student, grads)
        if self.teacher is not None:
            self.teacher = ema_update(self.teacher, self.student, self.cfg.ema_decay)
        self.metrics.record_step(labeled=isinstance(sample, LabeledSample))
        return loss

    def _maybe_reduce_lr(self, val_loss: float) -> None:
        self._lr_plateau.update(val_loss)
        if self.optimizer.lr != self.cfg.lr_reduced and self._lr_plateau.exhausted:
            logger.info(
                "Reducing learning rate after validation plateau",
                extra={"from_lr": self.optimizer.lr, "to_lr": self.cfg.lr_reduced},
            )
            self.optimizer.lr = self.cfg.lr_reduced

    def _run_epochs(
        self,
        round_index: int,
        epochs: int,
        make_samples: Callable[[], list[Sample]],
    ) -> tuple[tuple[EpochRecord, ...], bool]:
        plateau = _Plateau(self.cfg.patience)
        best_student = self.student
        records: list[EpochRecord] = []
        stopped_early = False
        for epoch in range(1, epochs + 1):
            samples = make_samples()
            losses = [self._step(samples[int(index)]) for index in self._shuffle_rng.permutation(len(samples))]
            train_loss = float(np.mean(losses))
            if not math.isfinite(train_loss):
                raise NumericError("Training loss diverged.", details=f"round={round_index}, epoch={epoch}")
            val_loss = self._evaluate(self.student, self.val_bags).loss
            records.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_loss=val_loss, lr=self.optimizer.lr))
            self.metrics.record_epoch(train_loss=train_loss, val_loss=val_loss, lr=self.optimizer.lr)
            if plateau.update(val_loss):
                best_student = self.student
            self._maybe_reduce_lr(val_loss)
            if plateau.exhausted and epoch < epochs:
                logger.info(
                    "Early stopping within round",
                    extra={"round": round_index, "epoch": epoch, "best_val_loss": plateau.best},
                )
                stopped_early = True
                break
        self.student = best_student
        return tuple(records), stopped_early

    def _evaluate(self, model: MilParams, bags: Sequence[Bag]) -> Evaluation:
        return evaluate(model, bags, class_names=self.priority.classes, workers=self.cfg.workers)

    # -- rounds -------------------------------------------------------------------

    def _trainable(self, plan: RoundPlan) -> tuple[tuple[PseudoBag, ...], tuple[PseudoBag, ...]]:
        """Labeled and unlabeled pseudo bags that train this round.

        An unlabeled pseudo bag whose prediction disagrees with its parent's
        label is left out of consistency and of the partner pool unless
        ``mismatched_consistency`` is set, or nothing else would train.
        """

        unlabeled = plan.unlabeled
        if not self.cfg.mismatched_consistency:
            agreeing = tuple(pb for pb in unlabeled if pb.is_consistent)
            if plan.labeled or agreeing:
                unlabeled = agreeing
            else:
                logger.warning(
                    "No pseudo bag agrees with its parent; training on mismatched ones",
                    extra={"unlabeled": len(unlabeled)},
                )
        return plan.labeled, unlabeled

    def _round_samples(
        self,
        labeled: Sequence[PseudoBag],
        unlabeled: Sequence[PseudoBag],
        pool: PartnerPool,
    ) -> list[Sample]:
        cfg = self.cfg
        samples: list[Sample] = []
        for pseudo_bag in labeled:
            features = pseudo_bag_features(pseudo_bag, self.bags)
            label = pseudo_bag.inherited_label
            if cfg.mergeup and cfg.merge_supervised:
                partner = pool.draw(pseudo_bag, self._merge_rng)
                if partner is not None:
                    merged = merge(pseudo_bag, partner, self.priority, self.bags)
                    features, label = merged.features, merged.label
            samples.append(LabeledSample(features, label))
        for pseudo_bag in unlabeled:
            features = pseudo_bag_features(pseudo_bag, self.bags)
            student_features = features
            if cfg.mergeup:
                partner = pool.draw(pseudo_bag, self._merge_rng)
                if partner is not None:
                    student_features = merge(pseudo_bag, partner, self.priority, self.bags).features
            samples.append(UnlabeledSample(features, student_features))
        return samples

    def _warmup(self) -> RoundRecord | None:
        if self.cfg.warmup_epochs == 0:
            return None
        epochs, stopped = self._run_epochs(0, self.cfg.warmup_epochs, lambda: list(self._whole_bags))
        self.metrics.rounds.inc()
        record = RoundRecord(
            round=0,
            epochs=epochs,
            stopped_early=stopped,
            val_metrics=self._evaluate(self.student, self.val_bags).metrics.to_dict(),
        )
        logger.info("Completed warm-up", extra={"epochs": len(epochs), "best_val_loss": record.best_val_loss})
        return record

    def _plan(self, round_index: int) -> RoundPlan:
        assert self.teacher is not None
        cfg = self.cfg
        plan = build_round_plan(
            self.train_bags,
            teacher=self.teacher,
            iis_model=self.teacher if cfg.iis_source == "teacher" else self.student,
            settings=self.settings,
            round_index=round_index,
            gamma_ada=gamma_ada_schedule(round_index, cfg.rounds, cfg.gamma_0, cfg.gamma_max),
            seed=sub_seed(cfg.seed, "split", round_index),
            workers=cfg.workers,
        )
        verify_partition(plan, self.train_bags)
        if not plan.labeled and not plan.unlabeled:
            raise ConfigError(
                "Round produced neither labeled nor unlabeled pseudo bags.",
                details=f"round={round_index}",
            )
        return plan

    def _round(self, round_index: int) -> tuple[RoundRecord, RoundPlan]:
        plan = self._plan(round_index)
        summary = plan.summary()
        self.metrics.record_plan({key: summary[key] for key in ("labeled", "unlabeled", "discarded")})
        pseacc = pse_acc(plan, self.bags, self.priority) if self.ds.has_oracle else None
        labeled, unlabeled = self._trainable(plan)
        pool = PartnerPool((*labeled, *unlabeled), self.priority)
        epochs, stopped = self._run_epochs(
            round_index, self.cfg.epochs_per_round, lambda: self._round_samples(labeled, unlabeled, pool)
        )
        self.metrics.rounds.inc()
        record = RoundRecord(
            round=round_index,
            epochs=epochs,
            stopped_early=stopped,
            val_metrics=self._evaluate(self.student, self.val_bags).metrics.to_dict(),
            plan=summary,
            pseacc=pseacc.to_dict() if pseacc is not None else None,
        )
        logger.info(
            "Completed training round",
            extra={
                **summary,
                "best_val_loss": record.best_val_loss,
                "val_acc": record.val_metrics["acc"],
                "val_auc": record.val_metrics["auc"],
                "pseacc": pseacc.value if pseacc is not None else None,
            },
        )
        return record, plan

    def run(self) -> TrainReport:
        cfg = self.cfg
        warmup = self._warmup()
        self.teacher = self.student
        records: list[RoundRecord] = []
        best_params = self.student.storage_rounded()
        best_round = 0
        best_key: tuple[float, ...] = _selection_key(warmup) if warmup is not None else (-math.inf,)
        for round_index in range(1, cfg.rounds + 1):
            record, plan = self._round(round_index)
            records.append(record)
            key = _selection_key(record)
            if key > best_key:
                best_key = key
                best_round = round_index
                best_params = self.student.storage_rounded()
            if self.round_callback is not None:
                self.round_callback(record, plan)

        test_metrics = None
        if self.test_bags:
            test_metrics = self._evaluate(best_params, self.test_bags).metrics.to_dict()
            logger.info("Evaluated best checkpoint on test", extra={"round": best_round, **_headline(test_metrics)})
        return TrainReport(
            config=cfg.to_dict(),
            method=cfg.assignment,
            warmup=warmup,
            rounds=tuple(records),
            best_round=best_round,
            best_val_score=best_key[0],
            test_metrics=test_metrics,
            checkpoint=Checkpoint(params=best_params, seed=cfg.seed, round=best_round, classes=self.priority.classes),
        )


def _selection_key(record: RoundRecord) -> tuple[float, float, float]:
    """Validation AUC (ACC when AUC is undefined), then ACC, then lower validation loss."""

    acc = float(record.val_metrics["acc"])
    auc = record.val_metrics["auc"]
    return (acc if auc is None else float(auc), acc, -record.best_val_loss)


def _headline(metrics: dict[str, object]) -> dict[str, object]:
    return {"acc": metrics["acc"], "auc": metrics["auc"], "f1": metrics["f1"]}


def train(
    ds: Dataset,
    cfg: TrainConfig,
    *,
    metrics: TrainingMetrics | None = None,
    round_callback: RoundCallback | None = None,
) -> TrainReport:
    return SemiWeakTrainer(ds, cfg, metrics=metrics, round_callback=round_callback).run()


__all__ = [
    "Evaluation",
    "LabeledSample",
    "SemiWeakTrainer",
    "UnlabeledSample",
    "evaluate",
    "loss_and_gradients",
    "sub_seed",
    "train",
]
