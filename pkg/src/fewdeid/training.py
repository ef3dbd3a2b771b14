"""Optimization loop: Adam with global-norm clipping, linear warmup then
linear decay to zero, deterministic seeded batching, multi-dataset joint
training, best-epoch checkpointing on target-dev entity F1."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import Corpus
from .metrics import evaluate
from .model import ParameterSet, batch_labels, forward, loss, predict_corpus
from .seeding import rng_from
from .subword import Vocab, encode


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-5
    warmup_fraction: float = 0.10
    epochs: int = 3
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 1.0
    weight_decay: float = 0.0
    eval_each_epoch: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainReport:
    step_losses: list[float] = field(default_factory=list)
    step_lrs: list[float] = field(default_factory=list)
    epoch_metrics: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    total_steps: int = 0
    wall_clock_s: float = 0.0
    config: dict = field(default_factory=dict)

    def final_loss(self) -> float:
        return self.step_losses[-1] if self.step_losses else float("nan")

    def to_jsonl(self) -> str:
        """One JSON record per step and per epoch, for plotting."""
        lines = []
        for i, (l, lr) in enumerate(zip(self.step_losses, self.step_lrs)):
            lines.append(json.dumps({"kind": "step", "step": i, "loss": l, "lr": lr}))
        for m in self.epoch_metrics:
            lines.append(json.dumps({"kind": "epoch", **m}))
        lines.append(
            json.dumps(
                {
                    "kind": "summary",
                    "total_steps": self.total_steps,
                    "best_epoch": self.best_epoch,
                    "wall_clock_s": self.wall_clock_s,
                    "config": self.config,
                }
            )
        )
        return "\n".join(lines) + "\n"


def lr_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear 0 -> peak over the warmup steps, then linear peak -> 0."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    peak = config.learning_rate
    warmup = math.ceil(config.warmup_fraction * total_steps)
    if step <= warmup:
        return peak if warmup == 0 else peak * step / warmup
    return peak * (total_steps - step) / (total_steps - warmup)


class AdamState:
    """First/second moment accumulators, lazily shaped to the parameters."""

    def __init__(self):
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params: ParameterSet, state: AdamState, lr: float, config: TrainConfig):
    """Bias-corrected Adam update; gradients are globally norm-clipped first.
    Parameters without a gradient this step are left untouched."""
    named = {k: p for k, p in params.named().items() if p.grad is not None}
    if not named:
        return
    sq = 0.0
    for p in named.values():
        sq += float((p.grad.astype(np.float64) ** 2).sum())
    norm = math.sqrt(sq)
    clip_scale = 1.0
    if config.grad_clip_norm > 0 and norm > config.grad_clip_norm:
        clip_scale = config.grad_clip_norm / norm

    state.t += 1
    t = state.t
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    for name, p in named.items():
        g = p.grad * clip_scale
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + config.adam_eps)
        if config.weight_decay > 0:
            update = update + config.weight_decay * p.data
        p.data -= lr * update


class _EncodedDataset:
    """A corpus encoded once up front, with its own seeded shuffle stream."""

    def __init__(self, corpus: Corpus, vocab: Vocab, max_len: int, seed: int, tag):
        self.corpus = corpus
        self.encoded = [encode(s, vocab, max_len) for s in corpus.sentences]
        self.labels = [s.label_ids for s in corpus.sentences]
        self.rng = rng_from(seed, "shuffle", tag)
        self._order: list[int] = []

    def next_batch(self, batch_size: int) -> list[int]:
        out = []
        while len(out) < batch_size:
            if not self._order:
                self._order = list(self.rng.permutation(len(self.corpus)))
                # one batch never mixes two passes over the data
                if out:
                    break
            out.append(self._order.pop(0))
        return out


def _interleave(counts: list[int]) -> list[int]:
    """Deterministic proportional interleaving of dataset indices: at each
    slot, emit the stream furthest behind its size-proportional quota."""
    total = sum(counts)
    schedule: list[int] = []
    emitted = [0] * len(counts)
    for slot in range(total):
        best, best_deficit = 0, -math.inf
        for j, c in enumerate(counts):
            if emitted[j] >= c:
                continue
            deficit = c / total * (slot + 1) - emitted[j]
            if deficit > best_deficit:
                best, best_deficit = j, deficit
        schedule.append(best)
        emitted[best] += 1
    return schedule


def _train_loop(
    params: ParameterSet,
    datasets: list[_EncodedDataset],
    dev: Corpus | None,
    vocab: Vocab,
    config: TrainConfig,
) -> tuple[ParameterSet, TrainReport]:
    params = params.copy()
    state = AdamState()
    report = TrainReport(config=asdict(config))
    start = time.monotonic()

    counts = [max(1, math.ceil(len(d.corpus) / config.batch_size)) for d in datasets]
    schedule = _interleave(counts)
    steps_per_epoch = len(schedule)
    total_steps = config.epochs * steps_per_epoch
    report.total_steps = total_steps

    best_f1 = -1.0
    best_params: ParameterSet | None = None
    step = 0
    for epoch in range(config.epochs):
        for ds_index in schedule:
            ds = datasets[ds_index]
            idxs = ds.next_batch(config.batch_size)
            batch = [ds.encoded[i] for i in idxs]
            word_labels = [ds.labels[i] for i in idxs]
            lr = lr_at(step, total_steps, config)

            drop_rng = rng_from(config.seed, "dropout", step)
            logits, _ = forward(params, batch, train_mode=True, dropout_rng=drop_rng)
            t_max = logits.shape[1]
            targets = batch_labels(batch, word_labels, t_max)
            step_loss = loss(logits, targets)
            value = float(step_loss.data)
            if not math.isfinite(value):
                raise RuntimeError(
                    f"non-finite loss at step {step} (lr={lr:.3g}, "
                    f"dataset={ds_index}, batch sentences={idxs})"
                )
            ad.backward(step_loss)
            adam_step(params, state, lr, config)
            ad.zero_grads(params.named().values())

            report.step_losses.append(value)
            report.step_lrs.append(lr)
            step += 1

        if config.eval_each_epoch and dev is not None and len(dev) > 0:
            pred = predict_corpus(dev, vocab, params)
            f1 = evaluate(dev, pred).micro.f1
            report.epoch_metrics.append({"epoch": epoch, "dev_f1": f1})
            if f1 > best_f1:
                best_f1 = f1
                best_params = params.copy()
                report.best_epoch = epoch

    if config.eval_each_epoch and best_params is not None:
        params = best_params
    report.wall_clock_s = time.monotonic() - start
    return params, report


def fine_tune(
    params: ParameterSet,
    vocab: Vocab,
    train: Corpus,
    dev: Corpus,
    config: TrainConfig,
) -> tuple[ParameterSet, TrainReport]:
    """Supervised training on one corpus.

    Deterministic given config.seed: shuffles and dropout streams are all
    derived from it. Best checkpoint by dev entity F1 when eval_each_epoch,
    else the final weights.
    """
    if len(train) == 0:
        raise ValueError("training corpus is empty")
    ds = _EncodedDataset(train, vocab, params.config.max_len, config.seed, 0)
    return _train_loop(params, [ds], dev, vocab, config)


def multi_task_train(
    params: ParameterSet,
    vocab: Vocab,
    datasets: list[Corpus],
    dev: Corpus,
    config: TrainConfig,
) -> tuple[ParameterSet, TrainReport]:
    """Joint training on several corpora sharing one label set and model.

    Per epoch each dataset contributes ceil(len/batch_size) batches (floor
    1), interleaved proportionally; each dataset draws from its own seeded
    shuffle stream, so adding or removing one dataset leaves the others'
    batch composition unchanged.
    """
    if not datasets:
        raise ValueError("need at least one dataset")
    label_set = datasets[0].label_set
    for i, d in enumerate(datasets[1:], start=1):
        if d.label_set != label_set:
            raise ValueError(f"dataset {i} label set differs from dataset 0")
    encoded = [
        _EncodedDataset(d, vocab, params.config.max_len, config.seed, i)
        for i, d in enumerate(datasets)
    ]
    return _train_loop(params, encoded, dev, vocab, config)
