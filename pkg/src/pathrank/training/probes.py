"""Held-out accuracies that show what a stage taught the model."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from pathrank.logic.featurize import single_panorama_sequence, text_only_sequence
from pathrank.model.network import (
    ParamScope,
    forward,
    head_alignment,
    head_masked_lm,
    score_sequences,
)
from pathrank.model.scoring import path_sequence


if TYPE_CHECKING:
    from collections.abc import Sequence

    from pathrank.logic.featurize import MultimodalSequence
    from pathrank.logic.vocab import Vocabulary
    from pathrank.model.params import ModelParams
    from pathrank.training.corpora import CaptionPair, PathPair, QuadExample, SentencePair
    from pathrank.training.curriculum import CurriculumData


def masked_token_accuracy(
    params: ModelParams,
    items: Sequence[tuple[MultimodalSequence, Sequence[int]]],
    vocab: Vocabulary,
) -> float:
    """Share of masked positions whose original token is the top masked-LM prediction."""
    hits = 0
    total = 0
    for seq, positions in items:
        if not positions:
            continue
        ids = seq.text_ids.copy()
        targets = ids[list(positions)].copy()
        ids[list(positions)] = vocab.mask
        scope = ParamScope(params, trainable=False)
        encoded = forward(scope, seq.with_text(ids, seq.text_segments, seq.text_mask))
        rows = np.asarray(encoded.text.data)[list(positions)]
        logits = head_masked_lm(scope, scope.tape.constant(rows)).data
        hits += int(np.sum(np.argmax(logits, axis=1) == targets))
        total += len(positions)
    return hits / total if total else 0.0


def direction_recovery(
    params: ModelParams,
    pairs: Sequence[PathPair],
    data: CurriculumData,
) -> float:
    """Masked-LM accuracy on direction words of path-instruction pairs."""
    directions = set(data.vocab.direction_ids())
    items: list[tuple[MultimodalSequence, Sequence[int]]] = []
    for pair in pairs:
        seq = path_sequence(params, data.panoramas, data.vocab, pair.trajectory, pair.tokens)
        positions = [i for i, token in enumerate(seq.text_ids) if int(token) in directions]
        items.append((seq, positions))
    return masked_token_accuracy(params, items, data.vocab)


def alignment_accuracy(
    params: ModelParams,
    pairs: Sequence[CaptionPair],
    vocab: Vocabulary,
) -> float:
    """Share of caption pairs whose matched/mismatched label the alignment head gets right."""
    if not pairs:
        return 0.0
    hits = 0
    d_v = params.config.d_v
    for pair in pairs:
        scope = ParamScope(params, trainable=False)
        encoded = forward(scope, single_panorama_sequence(pair.panorama, pair.caption, vocab, d_v))
        logit = float(head_alignment(scope, encoded.h_cls, encoded.h_img).data.reshape(()))
        hits += int((logit > 0.0) == pair.matched)
    return hits / len(pairs)


def selection_accuracy(
    params: ModelParams,
    quads: Sequence[QuadExample],
    data: CurriculumData,
) -> float:
    """4-way multiple-choice accuracy: the positive member must score highest."""
    if not quads:
        return 0.0
    hits = 0
    for quad in quads:
        seqs = [
            path_sequence(params, data.panoramas, data.vocab, trajectory, quad.tokens)
            for trajectory in quad.trajectories
        ]
        hits += int(int(np.argmax(score_sequences(params, seqs))) == quad.positive)
    return hits / len(quads)


def sentence_recovery(
    params: ModelParams,
    pairs: Sequence[SentencePair],
    vocab: Vocabulary,
    every: int = 4,
) -> float:
    """Masked-LM accuracy on sentence pairs, masking every `every`-th ordinary token."""
    items: list[tuple[MultimodalSequence, Sequence[int]]] = []
    for pair in pairs:
        seq = text_only_sequence(pair.first, vocab, params.config.d_v, pair.second)
        ordinary = [
            i for i, token in enumerate(seq.text_ids) if int(token) not in vocab.special_ids
        ]
        items.append((seq, ordinary[every - 1 :: every]))
    return masked_token_accuracy(params, items, vocab)
