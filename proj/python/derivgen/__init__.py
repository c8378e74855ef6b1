"""Derivational paradigm completion: perceptron transducer and attentional seq2seq."""

import json as _json

from ._derivgen import (
    DEFAULT_AFFIXES,
    BaselineConfig,
    DataError,
    DatasetSplit,
    ModelError,
    Seq2SeqConfig,
    Seq2SeqModel,
    Transducer,
    Triple,
    UsageError,
    accuracy,
    align,
    avg_edit_distance,
    extract_affix,
    filter_triples,
    generate_synthetic,
    is_concatenative,
    kbest_accuracy,
    levenshtein,
    passes_distance_filter,
    read_triples,
    run_cli,
    split_dataset,
    train_baseline,
    train_seq2seq,
    write_triples,
)
from ._derivgen import _evaluate_json


def evaluate(kbest, gold, tags, inventory=None, whole_word=False):
    """Full report as a dict: overall and per-tag scores plus affix F1 rows."""
    inventory = list(DEFAULT_AFFIXES) if inventory is None else list(inventory)
    kbest = [[p] if isinstance(p, str) else list(p) for p in kbest]
    return _json.loads(_evaluate_json(kbest, list(gold), list(tags), inventory, whole_word))


__all__ = [name for name in dir() if not name.startswith("_")]
