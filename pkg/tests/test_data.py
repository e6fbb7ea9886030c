"""Corpus loading, vocabulary, encoding, batching, subsampling."""

import numpy as np
import pytest

from mixkd.data import (CLS_ID, PAD_ID, SEP_ID, UNK_ID, Batch, DataError,
                        Example, Schema, build_vocab, collate, decode, encode,
                        load_tsv, make_batch, merge_augmented, subsample,
                        tokenize)


def test_tokenize_lowercases_and_splits_punct():
    assert tokenize("Hello, world!") == ["hello", ",", "world", "!"]
    assert tokenize("a  b\tc") == ["a", "b", "c"]
    assert tokenize("") == []


def test_schema_parse():
    s = Schema.parse("sentence,label")
    assert (s.text_a, s.label, s.text_b) == ("sentence", "label", None)
    s = Schema.parse("sentence1, sentence2, label")
    assert (s.text_a, s.text_b, s.label) == ("sentence1", "sentence2", "label")
    with pytest.raises(DataError):
        Schema.parse("only_one")


def test_example_validation():
    with pytest.raises(DataError):
        Example(text_a="", label_id=0)
    with pytest.raises(DataError):
        Example(text_a="x", label_id=-1)


def _write_tsv(path, rows, header="sentence\tlabel"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")


def test_load_tsv_infers_sorted_labels(tmp_path):
    path = tmp_path / "d.tsv"
    _write_tsv(path, ["good movie\tpos", "bad one\tneg", "fine\tpos"])
    examples, labels = load_tsv(path, Schema.parse("sentence,label"))
    assert labels == ["neg", "pos"]
    assert [e.label_id for e in examples] == [1, 0, 1]
    assert not any(e.augmented for e in examples)


def test_load_tsv_enforces_given_labels(tmp_path):
    path = tmp_path / "d.tsv"
    _write_tsv(path, ["ok\tmaybe"])
    with pytest.raises(DataError, match="line 2"):
        load_tsv(path, Schema.parse("sentence,label"),
                 label_names=["neg", "pos"])


def test_load_tsv_missing_column(tmp_path):
    path = tmp_path / "d.tsv"
    _write_tsv(path, ["x\tpos"], header="text\tlabel")
    with pytest.raises(DataError, match="missing column"):
        load_tsv(path, Schema.parse("sentence,label"))


def test_load_tsv_empty_text(tmp_path):
    path = tmp_path / "d.tsv"
    _write_tsv(path, ["\tpos"])
    with pytest.raises(DataError, match="empty text"):
        load_tsv(path, Schema.parse("sentence,label"))


def test_load_tsv_pair_schema(tmp_path):
    path = tmp_path / "p.tsv"
    _write_tsv(path, ["a question\tan answer\tpos"],
               header="sentence1\tsentence2\tlabel")
    examples, _ = load_tsv(path, Schema.parse("sentence1,sentence2,label"))
    assert examples[0].text_b == "an answer"


def test_build_vocab_ordering():
    examples = [Example("b b b a a c", 0), Example("a c", 1)]
    vocab = build_vocab(examples)
    # a and b tie at 3, lexicographic breaks the tie; reserved ids first
    assert vocab.token_to_id["a"] == 4
    assert vocab.token_to_id["b"] == 5
    assert vocab.token_to_id["c"] == 6
    assert vocab.lookup("zzz") == UNK_ID


def test_build_vocab_min_freq_and_max_size():
    examples = [Example("a a b", 0)]
    vocab = build_vocab(examples, min_freq=2)
    assert "b" not in vocab.token_to_id
    vocab = build_vocab([Example("a b c d", 0)], max_size=6)
    assert vocab.size == 6  # 4 reserved + 2 kept


def test_encode_layout_and_mask():
    vocab = build_vocab([Example("a b", 0)])
    ids, mask = encode(vocab, Example("a b", 0), max_len=8)
    assert ids[0] == CLS_ID
    assert ids[3] == SEP_ID
    assert list(ids[4:]) == [PAD_ID] * 4
    assert list(mask) == [True] * 4 + [False] * 4
    assert decode(vocab, ids, mask) == ["[CLS]", "a", "b", "[SEP]"]


def test_encode_truncation():
    vocab = build_vocab([Example("a b c d e", 0)])
    ids, mask = encode(vocab, Example("a b c d e", 0), max_len=4)
    assert len(ids) == 4 and mask.all()
    assert ids[0] == CLS_ID


def test_encode_pair():
    vocab = build_vocab([Example("a", 0, text_b="b")])
    ids, _ = encode(vocab, Example("a", 0, text_b="b"), max_len=8)
    assert list(ids[:5]) == [CLS_ID, vocab.lookup("a"), SEP_ID,
                             vocab.lookup("b"), SEP_ID]


def test_subsample_floor_order_deterministic():
    examples = [Example(f"tok{i}", i % 2) for i in range(10)]
    out = subsample(examples, 0.35, seed=9)
    assert len(out) == 3
    positions = [examples.index(e) for e in out]
    assert positions == sorted(positions)
    assert out == subsample(examples, 0.35, seed=9)
    with pytest.raises(DataError):
        subsample(examples, 0.0, seed=0)


def test_merge_augmented_flags_extra(tmp_path):
    path = tmp_path / "aug.tsv"
    _write_tsv(path, ["extra sample\tpos"])
    original = [Example("base", 0)]
    merged = merge_augmented(original, path, Schema.parse("sentence,label"),
                             ["neg", "pos"])
    assert len(merged) == 2
    assert not merged[0].augmented and merged[1].augmented


def test_batch_validation():
    ids = np.array([[CLS_ID, 5, PAD_ID]])
    mask = np.array([[True, True, False]])
    labels = np.array([[1.0, 0.0]])
    Batch(ids, mask, labels)  # valid

    with pytest.raises(DataError, match=r"\[CLS\]"):
        Batch(np.array([[5, 5, PAD_ID]]), mask, labels)
    with pytest.raises(DataError, match="prefix"):
        Batch(ids, np.array([[True, False, True]]), labels)
    with pytest.raises(DataError, match="simplex"):
        Batch(ids, mask, np.array([[0.6, 0.6]]))


def test_make_batch_one_hot(small_task):
    batch = make_batch(small_task.train[:5], small_task.vocab,
                       small_task.max_len, 2)
    assert batch.labels_onehot.sum() == 5
    assert len(batch) == 5


def test_collate_covers_epoch(small_task):
    batches = list(collate(small_task.train[:10], small_task.vocab,
                           small_task.max_len, batch_size=4, num_classes=2,
                           shuffle_seed=1))
    assert [len(b) for b in batches] == [4, 4, 2]
    again = list(collate(small_task.train[:10], small_task.vocab,
                         small_task.max_len, batch_size=4, num_classes=2,
                         shuffle_seed=1))
    np.testing.assert_array_equal(batches[0].token_ids, again[0].token_ids)
    other = list(collate(small_task.train[:10], small_task.vocab,
                         small_task.max_len, batch_size=4, num_classes=2,
                         shuffle_seed=2))
    assert not np.array_equal(batches[0].token_ids, other[0].token_ids)
