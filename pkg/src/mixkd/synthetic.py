"""Synthetic two-class token task for desk-scale experiments.

Each class owns a small set of key words; a sentence is a mix of key
words from its class and shared noise words, so the class signal is the
presence pattern of key tokens diluted by noise.
"""

from __future__ import annotations

import numpy as np

from .data import Example, Schema, build_vocab
from .distill import TaskData

LABEL_NAMES = ["neg", "pos"]


def _words(vocab_words: int) -> tuple[list[str], list[str], list[str]]:
    words = [f"tok{i:03d}" for i in range(vocab_words)]
    n_keys = max(2, vocab_words // 20)
    return words[:n_keys], words[n_keys:2 * n_keys], words[2 * n_keys:]


def make_examples(n: int, rng: np.random.Generator, vocab_words: int = 200,
                  seq_min: int = 5, seq_max: int = 12,
                  signal_rate: float = 0.3) -> list[Example]:
    keys_neg, keys_pos, noise = _words(vocab_words)
    keys = (keys_neg, keys_pos)
    examples = []
    for _ in range(n):
        label = int(rng.integers(0, 2))
        length = int(rng.integers(seq_min, seq_max + 1))
        toks = [
            keys[label][rng.integers(len(keys[label]))]
            if rng.random() < signal_rate
            else noise[rng.integers(len(noise))]
            for _ in range(length)
        ]
        examples.append(Example(text_a=" ".join(toks), label_id=label))
    return examples


def make_task(n_train: int = 2000, n_dev: int = 500, vocab_words: int = 200,
              seq_min: int = 5, seq_max: int = 12, signal_rate: float = 0.3,
              seed: int = 0) -> TaskData:
    rng = np.random.default_rng(seed)
    train = make_examples(n_train, rng, vocab_words, seq_min, seq_max,
                          signal_rate)
    dev = make_examples(n_dev, rng, vocab_words, seq_min, seq_max, signal_rate)
    vocab = build_vocab(train, min_freq=1)
    return TaskData(train=train, dev=dev, vocab=vocab,
                    label_names=list(LABEL_NAMES), max_len=seq_max + 2)


def write_tsv(examples, label_names, path,
              schema: Schema = Schema(text_a="sentence", label="label")) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{schema.text_a}\t{schema.label}\n")
        for ex in examples:
            fh.write(f"{ex.text_a}\t{label_names[ex.label_id]}\n")
