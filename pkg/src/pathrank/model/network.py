"""Two-stream co-attention transformer over path-instruction sequences, and its heads.

The language stream runs `n_lang_layers - n_coattn_layers` solo layers and the visual
stream `n_vis_layers - n_coattn_layers`; then both streams alternate a co-attention
block (each stream queries the other) with one regular layer, `n_coattn_layers` times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.autodiff import DimensionError, Tape, backward, ops
from pathrank.logic.errors import TruncationError


if TYPE_CHECKING:
    from numpy.typing import NDArray

    from pathrank.autodiff.tape import Array, Tensor
    from pathrank.logic.featurize import MultimodalSequence
    from pathrank.model.params import ModelParams


MASKED_LOGIT = -1e4


class ParamScope:
    """Binds model parameters to one tape, creating leaves on first use.

    With `trainable=False` no parameter receives gradient, so forward passes record
    nothing unless `track_features` asks for gradients of the visual features.
    """

    def __init__(
        self,
        params: ModelParams,
        tape: Tape | None = None,
        *,
        trainable: bool = True,
        track_features: bool = False,
        rng: np.random.Generator | None = None,
    ) -> None:
        """Prepare lazy leaves for `params` on `tape`, a fresh one by default."""
        self.params = params
        self.config = params.config
        self.tape = tape if tape is not None else Tape(dtype=params.dtype)
        self.trainable = trainable
        self.track_features = track_features
        self.rng = rng
        self.leaves: dict[str, Tensor] = {}

    def __call__(self, name: str) -> Tensor:
        """Leaf tensor of one parameter."""
        leaf = self.leaves.get(name)
        if leaf is None:
            leaf = self.tape.leaf(self.params[name], requires_grad=self.trainable)
            self.leaves[name] = leaf
        return leaf

    def gradients(self, loss: Tensor) -> dict[str, Array]:
        """Gradient of `loss` for every parameter used so far."""
        return backward(self.tape, loss, self.leaves)


@dataclass(frozen=True)
class Encoded:
    """Contextualized outputs of both streams."""

    text: Tensor
    visual: Tensor
    h_cls: Tensor
    h_img: Tensor
    features: Tensor


def linear(scope: ParamScope, x: Tensor, prefix: str, *, bias: bool = True) -> Tensor:
    """Affine map with weights `<prefix>.w` and bias `<prefix>.b`."""
    y = ops.matmul(x, scope(f"{prefix}.w"))
    return ops.add(y, scope(f"{prefix}.b")) if bias else y


def norm(scope: ParamScope, x: Tensor, prefix: str) -> Tensor:
    """Layer normalization with `<prefix>.gamma` and `<prefix>.beta`."""
    return ops.layernorm(x, scope(f"{prefix}.gamma"), scope(f"{prefix}.beta"))


def key_padding_bias(n_queries: int, key_mask: NDArray[np.floating]) -> NDArray[np.float64]:
    """Additive attention bias hiding keys whose mask is 0."""
    row = (1.0 - np.asarray(key_mask, dtype=np.float64)) * MASKED_LOGIT
    return np.broadcast_to(row, (n_queries, row.shape[0])).copy()


def attention(
    scope: ParamScope,
    prefix: str,
    queries: Tensor,
    keys: Tensor,
    key_mask: NDArray[np.floating] | None,
) -> Tensor:
    """Multi-head scaled dot-product attention of `queries` over `keys`."""
    n_heads = scope.config.n_heads
    head_dim = scope.config.head_dim
    q = linear(scope, queries, f"{prefix}.q")
    k = linear(scope, keys, f"{prefix}.k")
    v = linear(scope, keys, f"{prefix}.v")
    bias = None if key_mask is None else key_padding_bias(queries.shape[0], key_mask)
    heads = []
    for head in range(n_heads):
        lo, hi = head * head_dim, (head + 1) * head_dim
        qh = ops.slice_(q, lo, hi, axis=1)
        kh = ops.slice_(k, lo, hi, axis=1)
        vh = ops.slice_(v, lo, hi, axis=1)
        logits = ops.scale(ops.matmul(qh, ops.transpose(kh)), 1.0 / math.sqrt(head_dim))
        if bias is not None:
            logits = ops.add_constant(logits, bias)
        heads.append(ops.matmul(ops.softmax(logits, axis=1), vh))
    merged = heads[0] if n_heads == 1 else ops.concat(heads, axis=1)
    return linear(scope, merged, f"{prefix}.o")


def feed_forward(scope: ParamScope, x: Tensor, prefix: str) -> Tensor:
    """Position-wise GELU feed-forward network."""
    return linear(scope, ops.gelu(linear(scope, x, f"{prefix}.in")), f"{prefix}.out")


def _dropout(scope: ParamScope, x: Tensor) -> Tensor:
    return ops.dropout(x, scope.config.dropout, scope.rng)


def transformer_layer(
    scope: ParamScope,
    prefix: str,
    x: Tensor,
    key_mask: NDArray[np.floating] | None,
) -> Tensor:
    """Self-attention and feed-forward sublayers, each with a residual and layer norm."""
    attended = attention(scope, f"{prefix}.attn", x, x, key_mask)
    x = norm(scope, ops.add(x, _dropout(scope, attended)), f"{prefix}.attn_ln")
    transformed = feed_forward(scope, x, f"{prefix}.ffn")
    return norm(scope, ops.add(x, _dropout(scope, transformed)), f"{prefix}.ffn_ln")


def coattention_block(
    scope: ParamScope,
    index: int,
    text: Tensor,
    visual: Tensor,
    text_mask: NDArray[np.floating],
) -> tuple[Tensor, Tensor]:
    """Language queries attend over visual keys and visual queries over language keys."""
    lang = f"coattn.{index}.lang"
    vis = f"coattn.{index}.vis"
    text_cross = attention(scope, f"{lang}.cross", text, visual, None)
    visual_cross = attention(scope, f"{vis}.cross", visual, text, text_mask)
    text = norm(scope, ops.add(text, _dropout(scope, text_cross)), f"{lang}.cross_ln")
    visual = norm(scope, ops.add(visual, _dropout(scope, visual_cross)), f"{vis}.cross_ln")
    text_ffn = feed_forward(scope, text, f"{lang}.ffn")
    visual_ffn = feed_forward(scope, visual, f"{vis}.ffn")
    text = norm(scope, ops.add(text, _dropout(scope, text_ffn)), f"{lang}.ffn_ln")
    visual = norm(scope, ops.add(visual, _dropout(scope, visual_ffn)), f"{vis}.ffn_ln")
    return text, visual


def check_sequence(scope: ParamScope, seq: MultimodalSequence) -> None:
    """Reject sequences outside the configured bounds."""
    config = scope.config
    if seq.n_text > config.max_text_positions:
        raise TruncationError(
            f"text stream has {seq.n_text} tokens, limit is {config.max_text_positions}",
        )
    if seq.visual_pano.size and int(seq.visual_pano.max()) >= config.n_max:
        raise TruncationError(f"sequence spans more than {config.n_max} panoramas")
    if seq.visual_features.shape[1] != config.d_v:
        raise DimensionError("visual features", tuple(seq.visual_features.shape), (config.d_v,))
    if seq.text_ids.size and int(seq.text_ids.max()) >= config.vocab_size:
        raise DimensionError("text ids", tuple(seq.text_ids.shape), (config.vocab_size,))


def embed_text(scope: ParamScope, seq: MultimodalSequence) -> Tensor:
    """Word, position and segment embeddings, summed and normalized."""
    words = ops.embedding_lookup(scope("text.word"), seq.text_ids)
    positions = ops.embedding_lookup(scope("text.position"), np.arange(seq.n_text))
    segments = ops.embedding_lookup(scope("text.segment"), seq.text_segments)
    return norm(scope, ops.add(ops.add(words, positions), segments), "text.ln")


def feature_leaf(scope: ParamScope, seq: MultimodalSequence) -> Tensor:
    """Visual features as a leaf, tracked when attribution needs their gradient."""
    return scope.tape.leaf(seq.visual_features, requires_grad=scope.track_features)


def visual_input_embedding(scope: ParamScope, seq: MultimodalSequence, features: Tensor) -> Tensor:
    """Per-token visual input before normalization.

    Region rows sum the feature projection, the panorama-index embedding and the
    projected spatial vector; IMG rows use a learned marker embedding instead of the
    feature projection.
    """
    hidden = scope.config.hidden
    tape = scope.tape
    region = (seq.visual_region >= 0).astype(np.float64)
    projected = ops.mul_constant(
        linear(scope, features, "vis.proj"),
        np.repeat(region[:, None], hidden, axis=1),
    )
    markers = ops.matmul(tape.constant((1.0 - region)[:, None]), scope("vis.img"))
    panoramas = ops.embedding_lookup(scope("vis.pano"), seq.visual_pano)
    spatial = linear(scope, tape.constant(seq.visual_spatial), "vis.spatial", bias=False)
    return ops.add(ops.add(ops.add(projected, markers), panoramas), spatial)


def forward(scope: ParamScope, seq: MultimodalSequence) -> Encoded:
    """Encode both streams and pool the [CLS] and first IMG outputs."""
    check_sequence(scope, seq)
    config = scope.config
    features = feature_leaf(scope, seq)
    text = embed_text(scope, seq)
    visual = norm(scope, visual_input_embedding(scope, seq, features), "vis.ln")
    text_mask = seq.text_mask

    solo_lang = config.n_lang_layers - config.n_coattn_layers
    solo_vis = config.n_vis_layers - config.n_coattn_layers
    for i in range(solo_lang):
        text = transformer_layer(scope, f"lang.{i}", text, text_mask)
    for i in range(solo_vis):
        visual = transformer_layer(scope, f"vis.{i}", visual, None)
    for j in range(config.n_coattn_layers):
        text, visual = coattention_block(scope, j, text, visual, text_mask)
        text = transformer_layer(scope, f"lang.{solo_lang + j}", text, text_mask)
        visual = transformer_layer(scope, f"vis.{solo_vis + j}", visual, None)

    return Encoded(
        text=text,
        visual=visual,
        h_cls=ops.embedding_lookup(text, [0]),
        h_img=ops.embedding_lookup(visual, [0]),
        features=features,
    )


def compatibility_score(scope: ParamScope, encoded: Encoded) -> Tensor:
    """Path-instruction compatibility `w . (h_CLS * h_IMG)`, a (1, 1) tensor."""
    return linear(scope, ops.mul(encoded.h_cls, encoded.h_img), "score", bias=False)


def _prediction_head(scope: ParamScope, h: Tensor, prefix: str) -> Tensor:
    transformed = norm(scope, ops.gelu(linear(scope, h, f"{prefix}.transform")), f"{prefix}.ln")
    return linear(scope, transformed, f"{prefix}.decoder")


def head_masked_lm(scope: ParamScope, h_text: Tensor) -> Tensor:
    """Vocabulary logits for each given text row."""
    return _prediction_head(scope, h_text, "mlm")


def head_masked_region(scope: ParamScope, h_regions: Tensor) -> Tensor:
    """Landmark-class logits for each given region row."""
    return _prediction_head(scope, h_regions, "region")


def head_alignment(scope: ParamScope, h_cls: Tensor, h_img: Tensor) -> Tensor:
    """Matched-versus-mismatched logit of an image-text pair."""
    return linear(scope, ops.mul(h_cls, h_img), "align")


def head_next_sentence(scope: ParamScope, h_cls: Tensor) -> Tensor:
    """Is-next-sentence logit of a text pair."""
    return linear(scope, h_cls, "nsp")


def score_sequence(params: ModelParams, seq: MultimodalSequence) -> float:
    """Compatibility score without recording gradients."""
    scope = ParamScope(params, trainable=False)
    return float(compatibility_score(scope, forward(scope, seq)).data.reshape(()))


def score_sequences(params: ModelParams, seqs: list[MultimodalSequence]) -> NDArray[np.float64]:
    """Compatibility scores of several sequences."""
    return np.array([score_sequence(params, seq) for seq in seqs], dtype=np.float64)
