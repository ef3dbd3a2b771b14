"""Transfer strategy orchestration: zero-shot, pretrain->few-shot,
multi-task, multi-task->few-shot, and the scratch/pretrain x K learning-
curve grid. Reports carry persisted predictions so every number can be
recomputed offline."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .corpus import Corpus, CoverageError, FewShotSpec, sample_fewshot, write_conll
from .metrics import MetricsReport, evaluate
from .model import ModelConfig, ParameterSet, init_params, predict_corpus
from .seeding import derive_seed
from .subword import Vocab, train_bpe
from .synth import SynthConfig, corpus_text, generate_synthetic_bilingual
from .training import TrainConfig, TrainReport, fine_tune, multi_task_train

ZERO_SHOT = "ZeroShot"
PRETRAIN_FEWSHOT = "PretrainThenFewShot"
MULTI_TASK = "MultiTask"
MULTI_TASK_FEWSHOT = "MultiTaskThenFewShot"
SCRATCH_FEWSHOT = "ScratchFewShot"

STRATEGY_KINDS = (ZERO_SHOT, PRETRAIN_FEWSHOT, MULTI_TASK, MULTI_TASK_FEWSHOT, SCRATCH_FEWSHOT)
TABLE_ORDER = STRATEGY_KINDS  # Table rows: the four transfer rows, then scratch


class StrategyError(ValueError):
    pass


def corpus_fingerprint(corpus: Corpus) -> str:
    return hashlib.sha256(write_conll(corpus).encode("utf-8")).hexdigest()[:16]


@dataclass
class StrategySpec:
    """One strategy run: corpora, model, phase budgets, seed.

    Learning rates are sized for the from-scratch toy tagger (the
    clinical-scale 3e-5 stays the TrainConfig default): full rate for
    source/joint phases, a gentler rate for few-shot adaptation so the
    source knowledge is not washed out in the first steps.
    """

    kind: str
    vocab: Vocab
    model_config: ModelConfig
    source: Corpus | None = None
    fewshot: FewShotSpec | Corpus | None = None
    target_train: Corpus | None = None  # sampling pool when fewshot is a spec
    seed: int = 0
    epochs_source: int = 3
    epochs_fewshot: int = 25
    learning_rate: float = 1e-3
    fewshot_learning_rate: float = 3e-4
    batch_size: int = 8
    eval_each_epoch: bool = False

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise StrategyError(f"unknown strategy kind {self.kind!r}; valid: {STRATEGY_KINDS}")
        if self.kind == ZERO_SHOT:
            if self.fewshot is not None:
                raise StrategyError("ZeroShot must not carry a few-shot corpus")
        else:
            if self.fewshot is None:
                raise StrategyError(f"{self.kind} requires a few-shot corpus or spec")
            if isinstance(self.fewshot, FewShotSpec) and self.target_train is None:
                raise StrategyError("a FewShotSpec needs target_train to sample from")
        if self.kind != SCRATCH_FEWSHOT and self.source is None:
            raise StrategyError(f"{self.kind} requires a source corpus")


@dataclass
class StrategyReport:
    kind: str
    seed: int
    precision: float
    recall: float
    f1: float
    per_label: dict[str, dict]
    dev_fingerprint: str
    data_access: list[dict]  # phase -> corpora seen by training
    phases: list[dict]
    config: dict
    predictions: list[list[int]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_label": self.per_label,
            "dev_fingerprint": self.dev_fingerprint,
            "data_access": self.data_access,
            "phases": self.phases,
            "config": self.config,
            "predictions": self.predictions,
        }


def resolve_fewshot(spec: StrategySpec) -> Corpus | None:
    if spec.fewshot is None:
        return None
    if isinstance(spec.fewshot, Corpus):
        return spec.fewshot
    return sample_fewshot(spec.target_train, spec.fewshot)


def _train_config(spec: StrategySpec, phase: int, epochs: int, fewshot_phase: bool) -> TrainConfig:
    return TrainConfig(
        learning_rate=spec.fewshot_learning_rate if fewshot_phase else spec.learning_rate,
        warmup_fraction=0.10,
        epochs=epochs,
        batch_size=spec.batch_size,
        seed=derive_seed(spec.seed, "phase", phase),
        eval_each_epoch=spec.eval_each_epoch,
    )


def run_strategy(spec: StrategySpec, target_dev: Corpus) -> StrategyReport:
    """Execute the strategy's phases in order (sequential checkpoint
    hand-off) and evaluate on target_dev."""
    if len(target_dev) == 0:
        raise StrategyError("empty target dev corpus")

    fewshot = resolve_fewshot(spec)
    params = init_params(spec.model_config, seed=derive_seed(spec.seed, "init"))

    phase_plan: list[tuple[str, str, list[Corpus]]] = []  # (name, mode, corpora)
    if spec.kind == ZERO_SHOT:
        phase_plan = [("source", "fine_tune", [spec.source])]
    elif spec.kind == PRETRAIN_FEWSHOT:
        phase_plan = [
            ("source", "fine_tune", [spec.source]),
            ("fewshot", "fine_tune", [fewshot]),
        ]
    elif spec.kind == MULTI_TASK:
        phase_plan = [("joint", "multi_task", [spec.source, fewshot])]
    elif spec.kind == MULTI_TASK_FEWSHOT:
        phase_plan = [
            ("joint", "multi_task", [spec.source, fewshot]),
            ("fewshot", "fine_tune", [fewshot]),
        ]
    elif spec.kind == SCRATCH_FEWSHOT:
        phase_plan = [("fewshot", "fine_tune", [fewshot])]

    data_access: list[dict] = []
    phases: list[dict] = []
    for i, (name, mode, corpora) in enumerate(phase_plan):
        fewshot_phase = name == "fewshot"
        epochs = spec.epochs_fewshot if fewshot_phase else spec.epochs_source
        cfg = _train_config(spec, i, epochs, fewshot_phase)
        if mode == "fine_tune":
            params, train_report = fine_tune(params, spec.vocab, corpora[0], target_dev, cfg)
        else:
            params, train_report = multi_task_train(params, spec.vocab, corpora, target_dev, cfg)
        data_access.append(
            {
                "phase": name,
                "corpora": [c.name for c in corpora],
                "sentences": sum(len(c) for c in corpora),
            }
        )
        phases.append(
            {
                "phase": name,
                "mode": mode,
                "epochs": epochs,
                "steps": train_report.total_steps,
                "final_loss": train_report.final_loss(),
                "epoch_metrics": train_report.epoch_metrics,
            }
        )

    pred = predict_corpus(target_dev, spec.vocab, params)
    report = evaluate(target_dev, pred)
    return StrategyReport(
        kind=spec.kind,
        seed=spec.seed,
        precision=report.micro.precision,
        recall=report.micro.recall,
        f1=report.micro.f1,
        per_label={
            t: {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
            for t, m in report.per_label.items()
        },
        dev_fingerprint=corpus_fingerprint(target_dev),
        data_access=data_access,
        phases=phases,
        config={
            "kind": spec.kind,
            "seed": spec.seed,
            "epochs_source": spec.epochs_source,
            "epochs_fewshot": spec.epochs_fewshot,
            "learning_rate": spec.learning_rate,
            "fewshot_learning_rate": spec.fewshot_learning_rate,
            "batch_size": spec.batch_size,
            "fewshot_size": len(fewshot) if fewshot is not None else 0,
            "model_config_hash": spec.model_config.hash(),
        },
        predictions=[s.label_ids for s in pred.sentences],
    )


def rescore_report(report: StrategyReport, target_dev: Corpus) -> MetricsReport:
    """Recompute metrics from the persisted predictions (audit path)."""
    if corpus_fingerprint(target_dev) != report.dev_fingerprint:
        raise StrategyError("dev corpus does not match the report's fingerprint")
    pred = Corpus(
        [s.with_labels(labels) for s, labels in zip(target_dev.sentences, report.predictions)],
        target_dev.label_set,
        name="rescored",
    )
    return evaluate(target_dev, pred)


def compare_table(reports: list[StrategyReport]) -> str:
    """Fixed-order strategy table with best P/R/F1 starred."""
    if not reports:
        raise StrategyError("no reports to compare")
    fingerprints = {r.dev_fingerprint for r in reports}
    if len(fingerprints) > 1:
        raise StrategyError(f"reports evaluated on different dev sets: {sorted(fingerprints)}")
    ordered = sorted(reports, key=lambda r: (TABLE_ORDER.index(r.kind), r.seed))
    best = {
        col: max(getattr(r, col) for r in reports) for col in ("precision", "recall", "f1")
    }
    width = max(len(r.kind) for r in reports) + 2
    lines = [f"{'Strategy':<{width}} {'Precision':>10} {'Recall':>10} {'F1':>10}"]
    for r in ordered:
        cells = []
        for col in ("precision", "recall", "f1"):
            v = getattr(r, col)
            mark = "*" if v == best[col] else " "
            cells.append(f"{v:9.3f}{mark}")
        lines.append(f"{r.kind:<{width}} {cells[0]} {cells[1]} {cells[2]}")
    return "\n".join(lines)


@dataclass
class GridResult:
    cells: list[dict]
    warnings: list[dict]

    def as_dict(self) -> dict:
        return {"cells": self.cells, "warnings": self.warnings}

    def curve(self, kind: str, k: int, seed: int) -> list[float]:
        for c in self.cells:
            if c["kind"] == kind and c["k"] == k and c["seed"] == seed:
                return c["f1_curve"]
        raise KeyError((kind, k, seed))


@dataclass
class Benchmark:
    """Corpora + shared subword vocabulary + model config for experiments."""

    source: Corpus
    target_train: Corpus
    target_dev: Corpus
    vocab: Vocab
    model_config: ModelConfig

    @classmethod
    def from_synth(
        cls,
        config: SynthConfig,
        vocab_size: int = 768,
        model_overrides: dict | None = None,
    ) -> "Benchmark":
        source, target_train, target_dev = generate_synthetic_bilingual(config)
        # the shared vocabulary plays the role of a multilingual encoder's:
        # trained on unlabeled text from both languages
        vocab = train_bpe(corpus_text(source) + corpus_text(target_train), vocab_size)
        overrides = dict(model_overrides or {})
        model_config = ModelConfig(
            vocab_size=len(vocab),
            num_labels=source.label_set.num_labels,
            **overrides,
        )
        return cls(source, target_train, target_dev, vocab, model_config)


def run_grid(
    ks: list[int],
    kinds: list[str],
    epochs: int,
    seeds: list[int],
    benchmark: Benchmark,
    learning_rate: float = 3e-4,
    source_learning_rate: float = 1e-3,
    batch_size: int = 8,
    epochs_source: int = 3,
) -> GridResult:
    """scratch/pretrain x K learning curves: per-epoch dev F1 for every
    (kind, K, seed) cell. Both kinds train under the same config; only the
    initialization differs. Infeasible K values are skipped with a warning.
    """
    valid_kinds = {"scratch", "pretrain"}
    if not set(kinds) <= valid_kinds:
        raise StrategyError(f"grid kinds must be within {sorted(valid_kinds)}")

    cells: list[dict] = []
    warnings: list[dict] = []
    pretrained: dict[int, ParameterSet] = {}

    for seed in seeds:
        if "pretrain" in kinds:
            cfg = TrainConfig(
                learning_rate=source_learning_rate,
                epochs=epochs_source,
                batch_size=batch_size,
                seed=derive_seed(seed, "grid", "source"),
            )
            params0 = init_params(benchmark.model_config, seed=derive_seed(seed, "grid", "init"))
            pretrained[seed], _ = fine_tune(
                params0, benchmark.vocab, benchmark.source, benchmark.target_dev, cfg
            )
        for k in ks:
            try:
                fewshot = sample_fewshot(benchmark.target_train, FewShotSpec(k=k, seed=seed))
            except (ValueError, CoverageError) as e:
                warnings.append({"k": k, "seed": seed, "reason": str(e)})
                continue
            for kind in kinds:
                if kind == "pretrain":
                    params = pretrained[seed].copy()
                else:
                    params = init_params(
                        benchmark.model_config, seed=derive_seed(seed, "grid", "init")
                    )
                cfg = TrainConfig(
                    learning_rate=learning_rate,
                    epochs=epochs,
                    batch_size=batch_size,
                    seed=derive_seed(seed, "grid", kind, k),
                    eval_each_epoch=True,
                )
                _, report = fine_tune(
                    params, benchmark.vocab, fewshot, benchmark.target_dev, cfg
                )
                curve = [m["dev_f1"] for m in report.epoch_metrics]
                cells.append(
                    {
                        "kind": kind,
                        "k": k,
                        "seed": seed,
                        "epochs": epochs,
                        "f1_curve": curve,
                        "final_f1": curve[-1],
                    }
                )
    return GridResult(cells, warnings)
