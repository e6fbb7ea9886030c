"""Metrics, deterministic evaluation, feature export, throughput, sweeps."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Example, Vocab, make_batch
from .mixup import MixupSpec, materialize
from .model import ModelParams, embed_batch, forward_from_embeddings, forward_tokens


@dataclass
class Metrics:
    accuracy: float
    n_eval: int
    f1: Optional[float] = None
    f1_degenerate: bool = False


@dataclass
class SweepGrid:
    alpha_sm_values: list[float]
    alpha_tmkd_values: list[float]
    mixup_ratio_values: list[int]
    base: "TrainConfig"  # noqa: F821 - avoids a circular import at module load

    def __post_init__(self):
        if not (self.alpha_sm_values and self.alpha_tmkd_values
                and self.mixup_ratio_values):
            raise ValueError("sweep value lists must be nonempty")


def compute_metrics(logits: np.ndarray, labels_onehot: np.ndarray,
                    positive_class: Optional[int] = None) -> Metrics:
    """Argmax accuracy; binary F1 when a positive class is named and C = 2."""
    logits = np.asarray(logits)
    labels = np.asarray(labels_onehot)
    if logits.shape != labels.shape:
        raise ValueError(f"logits {logits.shape} vs labels {labels.shape}")
    pred = logits.argmax(axis=1)
    truth = labels.argmax(axis=1)
    n = len(pred)
    acc = float((pred == truth).mean()) if n else 0.0

    f1 = None
    degenerate = False
    if positive_class is not None and logits.shape[1] == 2:
        tp = int(((pred == positive_class) & (truth == positive_class)).sum())
        fp = int(((pred == positive_class) & (truth != positive_class)).sum())
        fn = int(((pred != positive_class) & (truth == positive_class)).sum())
        if 2 * tp + fp + fn == 0:
            f1, degenerate = 0.0, True
        else:
            f1 = 2.0 * tp / (2 * tp + fp + fn)
    return Metrics(accuracy=acc, n_eval=n, f1=f1, f1_degenerate=degenerate)


def evaluate(params: ModelParams, examples: Sequence[Example], vocab: Vocab,
             max_len: int, num_classes: int, batch_size: int = 32,
             positive_class: Optional[int] = None) -> Metrics:
    """Dropout-off forward over the whole split, each example exactly once."""
    all_logits = []
    all_labels = []
    for start in range(0, len(examples), batch_size):
        batch = make_batch(examples[start:start + batch_size], vocab, max_len,
                           num_classes)
        logits = forward_tokens(params, batch, train_mode=False)
        all_logits.append(logits.data)
        all_labels.append(batch.labels_onehot)
    return compute_metrics(np.concatenate(all_logits),
                           np.concatenate(all_labels), positive_class)


def export_cls_features(params: ModelParams, examples: Sequence[Example],
                        vocab: Vocab, max_len: int, num_classes: int,
                        mixup_specs: Sequence[MixupSpec], out_path) -> int:
    """CSV of final-layer pooled features for originals and mixed neighbours.

    Columns: id, parent_i, parent_j, lambda (1.0 for originals), a
    semicolon-joined soft label, then one column per feature dimension.
    Returns the number of rows written.
    """
    batch = make_batch(examples, vocab, max_len, num_classes)
    _, feats = forward_tokens(params, batch, return_features=True)
    d = feats.shape[1]

    rows = []
    for i in range(len(examples)):
        rows.append((i, i, i, 1.0, batch.labels_onehot[i], feats.data[i]))
    if mixup_specs:
        emb = embed_batch(params, batch.token_ids, batch.pad_mask)
        mixed_emb, mixed_mask, mixed_labels = materialize(
            list(mixup_specs), emb, batch.pad_mask, batch.labels_onehot)
        _, mixed_feats = forward_from_embeddings(params, mixed_emb, mixed_mask,
                                                 return_features=True)
        for k, spec in enumerate(mixup_specs):
            rows.append((len(examples) + k, spec.index_i, spec.index_j,
                         spec.lam, mixed_labels[k], mixed_feats.data[k]))

    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "parent_i", "parent_j", "lambda", "soft_label"]
                        + [f"f{j}" for j in range(d)])
        for rid, pi, pj, lam, label, vec in rows:
            writer.writerow([rid, pi, pj, f"{lam:.12g}",
                             ";".join(f"{v:.12g}" for v in label)]
                            + [f"{v:.12g}" for v in vec])
    return len(rows)


def throughput_bench(params: ModelParams, vocab_size: int, max_len: int,
                     batch_size: int = 16, warmup: int = 2,
                     measured_batches: int = 10,
                     seed: int = 0) -> dict:
    """Forward-only samples/second on synthetic batches, plus parameter count."""
    if measured_batches < 1:
        raise ValueError("measured_batches must be >= 1")
    rng = np.random.default_rng(seed)
    ids = rng.integers(4, vocab_size, size=(batch_size, max_len))
    ids[:, 0] = 2  # [CLS]
    mask = np.ones((batch_size, max_len), dtype=bool)
    emb_args = (params, ids, mask)
    for _ in range(warmup):
        forward_from_embeddings(params, embed_batch(*emb_args), mask)
    start = time.perf_counter()
    for _ in range(measured_batches):
        forward_from_embeddings(params, embed_batch(*emb_args), mask)
    elapsed = time.perf_counter() - start
    return {
        "samples_per_second": batch_size * measured_batches / elapsed,
        "param_count": params.param_count(),
        "batch_size": batch_size,
        "measured_batches": measured_batches,
        "elapsed_seconds": elapsed,
    }


def sweep_grid(grid: SweepGrid, student_config, dataset, teacher: ModelParams,
               variant: str = "sm_tmkd",
               out_dir=None) -> list[dict]:
    """One distillation run per grid cell with a shared seed and data order.

    Failed cells are recorded with their error; the sweep continues.
    Returns the result table; optionally writes grid.tsv / grid.json.
    """
    from dataclasses import replace

    from .distill import distill_student

    results = []
    for ratio in grid.mixup_ratio_values:
        for a_sm in grid.alpha_sm_values:
            for a_tmkd in grid.alpha_tmkd_values:
                cfg = replace(
                    grid.base,
                    mixup=replace(grid.base.mixup, mixup_ratio=int(ratio)),
                    loss=replace(grid.base.loss, alpha_sm=float(a_sm),
                                 alpha_tmkd=float(a_tmkd)))
                cell = {"alpha_sm": float(a_sm), "alpha_tmkd": float(a_tmkd),
                        "mixup_ratio": int(ratio)}
                try:
                    _, record = distill_student(cfg, student_config, dataset,
                                                teacher, variant=variant)
                    cell["dev_accuracy"] = record.final_metrics["dev_accuracy"]
                    cell["error"] = None
                except Exception as exc:  # keep sweeping past a bad cell
                    cell["dev_accuracy"] = None
                    cell["error"] = str(exc)
                results.append(cell)
    if out_dir is not None:
        import os
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "grid.json"), "w") as fh:
            json.dump(results, fh, indent=2)
        with open(os.path.join(out_dir, "grid.tsv"), "w") as fh:
            fh.write("alpha_sm\talpha_tmkd\tmixup_ratio\tdev_accuracy\terror\n")
            for cell in results:
                acc = ("" if cell["dev_accuracy"] is None
                       else f"{cell['dev_accuracy']:.4f}")
                fh.write(f"{cell['alpha_sm']}\t{cell['alpha_tmkd']}\t"
                         f"{cell['mixup_ratio']}\t{acc}\t{cell['error'] or ''}\n")
    return results
