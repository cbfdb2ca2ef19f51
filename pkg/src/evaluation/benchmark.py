"""
Document-encoding throughput: hierarchical (selection + summary + encoder)
against the flat Base encoder, at several batch sizes.

Only encoding is timed for the headline numbers; decoding is shared by both
systems. Selection cost and end-to-end latency (with greedy decoding) are
reported in their own columns.
"""

import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd
import torch
from torch import Tensor

from src.errors import BenchmarkError
from src.models.coarse_to_fine import BaseModel, CoarseToFineModel
from src.models.generator import AnswerGenerator
from src.nn import ops
from src.parsing.document import FlatExample, PreparedExample
from src.parsing.vocab import Vocabulary

logger = logging.getLogger(__name__)

MIN_REPETITIONS = 5
# a median shorter than this many clock ticks is too coarse to trust
MIN_TICKS = 100

BENCH_COLUMNS = [
    "config", "batch_size", "k", "docs_per_sec", "median_seconds", "selection_seconds",
    "end_to_end_seconds", "encoder_steps_per_doc", "tokens_per_doc", "speedup",
]


@dataclass
class BenchReport:
    table: pd.DataFrame
    repetitions: int
    timer_resolution: float
    meta: Dict[str, object] = field(default_factory=dict)

    def speedup(self, config: str, batch_size: int) -> float:
        rows = self.table[(self.table["config"] == config) & (self.table["batch_size"] == batch_size)]
        if rows.empty:
            raise BenchmarkError(f"no measurement for {config} at batch size {batch_size}")
        return float(rows["speedup"].iloc[0])

    def to_csv(self, path: str) -> str:
        self.table.to_csv(path, index=False)
        return path


def timer_resolution() -> float:
    return time.get_clock_info("perf_counter").resolution


def median_time(fn: Callable[[], object], repetitions: int) -> float:
    """Median wall-clock seconds of `repetitions` calls after one warm-up call."""
    if repetitions < MIN_REPETITIONS:
        raise BenchmarkError(f"at least {MIN_REPETITIONS} repetitions are required, got {repetitions}")
    fn()
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    median = statistics.median(samples)
    if median < MIN_TICKS * timer_resolution():
        raise BenchmarkError(
            f"measured {median:.3g}s is within {MIN_TICKS} ticks of the timer resolution; "
            "benchmark more examples or raise the repetition count"
        )
    return median


def _batches(items: Sequence, size: int) -> List[Sequence]:
    return [items[i:i + size] for i in range(0, len(items), size)]


def encode_batch(generator: AnswerGenerator, inputs: List[Tensor],
                 weights: Optional[List[Tensor]] = None) -> Tensor:
    """
    Right-pad a list of (T_i, e) inputs and fold the encoder over them at once;
    `weights` are the matching per-position weights from encoder_weights.
    """
    if weights is not None and len(weights) != len(inputs):
        raise BenchmarkError(f"{len(weights)} weight rows for {len(inputs)} inputs")
    if len(inputs) == 1:
        return generator.run_encoder(inputs[0], None if weights is None else weights[0]).unsqueeze(0)
    longest = max(x.shape[0] for x in inputs)
    padded = torch.zeros(len(inputs), longest, inputs[0].shape[1], dtype=inputs[0].dtype)
    mask = torch.zeros(len(inputs), longest)
    gates = None if weights is None else torch.zeros(len(inputs), longest, dtype=inputs[0].dtype)
    for i, x in enumerate(inputs):
        padded[i, : x.shape[0]] = x
        mask[i, : x.shape[0]] = 1.0
        if gates is not None:
            gates[i, : x.shape[0]] = weights[i]
    return generator.run_encoder_batch(padded, mask, gates)


def hierarchical_encoder(model: CoarseToFineModel, examples: Sequence[PreparedExample], batch_size: int,
                         k: int) -> Callable[[], None]:
    batches = _batches(examples, batch_size)

    def run() -> None:
        for batch in batches:
            inputs, weights = [], []
            for ex in batch:
                summary = model.hard_summary(ex, model.select(ex), k, mode="argmax")
                inputs.append(model.generator.encoder_inputs(ex.query_ids, summary, model.embedding))
                weights.append(model.generator.encoder_weights(ex.query_ids, summary))
            encode_batch(model.generator, inputs, weights)

    return run


def base_encoder(model: BaseModel, examples: Sequence[FlatExample], batch_size: int) -> Callable[[], None]:
    batches = _batches(examples, batch_size)

    def run() -> None:
        for batch in batches:
            inputs = [model.generator.encoder_inputs(ex.query_ids, ex.document_ids, model.embedding) for ex in batch]
            weights = [model.generator.encoder_weights(ex.query_ids, ex.document_ids) for ex in batch]
            encode_batch(model.generator, inputs, weights)

    return run


def selection_only(model: CoarseToFineModel, examples: Sequence[PreparedExample]) -> Callable[[], None]:
    def run() -> None:
        for ex in examples:
            model.select(ex)

    return run


def count_encoder_steps(generator: AnswerGenerator, fn: Callable[[], None], num_docs: int) -> float:
    """Average encoder GRU invocations per document for one call of `fn`."""
    before = generator.encoder_steps
    fn()
    return (generator.encoder_steps - before) / num_docs


def benchmark_encoding(model: CoarseToFineModel, base_model: BaseModel, examples: Sequence[PreparedExample],
                       flat_examples: Sequence[FlatExample], vocab: Optional[Vocabulary] = None,
                       batch_sizes: Sequence[int] = (1,), ks: Sequence[int] = (1, 2),
                       repetitions: int = MIN_REPETITIONS) -> BenchReport:
    """
    Time encoding for Base and for the hierarchical model at each K and
    batch size. Speedup is hierarchical docs/sec over Base docs/sec at the
    same batch size (Base against itself is 1.0).

    With `vocab`, end-to-end latency per document (batch 1, greedy decoding)
    is measured as well.
    """
    if not examples or len(examples) != len(flat_examples):
        raise BenchmarkError("benchmark needs the same non-empty examples in both prepared and flat form")
    n = len(examples)
    rows = []
    with torch.no_grad(), ops.finite_checks(False):
        selection_seconds = median_time(selection_only(model, examples), repetitions) / n

        for batch_size in batch_sizes:
            base_run = base_encoder(base_model, flat_examples, batch_size)
            base_seconds = median_time(base_run, repetitions)
            base_rate = n / base_seconds
            rows.append({
                "config": "base", "batch_size": batch_size, "k": 0,
                "docs_per_sec": base_rate, "median_seconds": base_seconds,
                "selection_seconds": 0.0, "end_to_end_seconds": float("nan"),
                "encoder_steps_per_doc": count_encoder_steps(base_model.generator, base_run, n),
                "tokens_per_doc": sum(len(ex.document_ids) for ex in flat_examples) / n,
                "speedup": 1.0,
            })
            for k in ks:
                run = hierarchical_encoder(model, examples, batch_size, k)
                seconds = median_time(run, repetitions)
                rows.append({
                    "config": f"hierarchical-k{k}", "batch_size": batch_size, "k": k,
                    "docs_per_sec": n / seconds, "median_seconds": seconds,
                    "selection_seconds": selection_seconds, "end_to_end_seconds": float("nan"),
                    "encoder_steps_per_doc": count_encoder_steps(model.generator, run, n),
                    "tokens_per_doc": k * examples[0].row_length,
                    "speedup": (n / seconds) / base_rate,
                })
                logger.info("batch=%d k=%d: %.1f docs/s (%.2fx over base)", batch_size, k, n / seconds,
                            rows[-1]["speedup"])

        if vocab is not None:
            _add_end_to_end(rows, model, base_model, examples, flat_examples, vocab, repetitions)

    table = pd.DataFrame(rows, columns=BENCH_COLUMNS)
    return BenchReport(table=table, repetitions=repetitions, timer_resolution=timer_resolution(),
                       meta={"examples": n, "row_length": examples[0].row_length})


def _add_end_to_end(rows: List[dict], model: CoarseToFineModel, base_model: BaseModel,
                    examples: Sequence[PreparedExample], flat_examples: Sequence[FlatExample],
                    vocab: Vocabulary, repetitions: int) -> None:
    n = len(examples)
    latency = {"base": median_time(lambda: [base_model.predict(ex, vocab) for ex in flat_examples], repetitions) / n}
    for row in rows:
        if row["config"] == "base" or row["batch_size"] != 1:
            continue
        k = row["k"]
        key = row["config"]
        if key not in latency:
            latency[key] = median_time(lambda: [model.predict(ex, vocab, k=k) for ex in examples], repetitions) / n
    for row in rows:
        if row["batch_size"] == 1:
            row["end_to_end_seconds"] = latency.get(row["config"], float("nan"))
