"""Tests for pathrank.model.params."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from pathrank.logic.errors import ArtifactFormatError
from pathrank.model.params import (
    INIT_STD,
    MAGIC,
    ModelParams,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    parameter_shapes,
    save_checkpoint,
)
from tests.conftest import small_vocab, tiny_model_config, tiny_params


if TYPE_CHECKING:
    from pathlib import Path


def test_init_follows_the_initialization_scheme() -> None:
    """Gains start at one, biases at zero, weights within two standard deviations."""
    params = tiny_params(small_vocab())

    for name in params:
        value = params[name]
        if name.endswith(".gamma"):
            np.testing.assert_array_equal(value, 1.0)
        elif name.endswith((".b", ".beta")):
            np.testing.assert_array_equal(value, 0.0)
        else:
            assert np.all(np.abs(value) <= 2.0 * INIT_STD + 1e-7)
    assert params.dtype == np.float32


def test_init_is_seeded_and_matches_shapes() -> None:
    """Same seed gives the same weights, one array per declared shape."""
    vocab = small_vocab()
    config = tiny_model_config(vocab)

    first = ModelParams.init(config, 4)
    second = ModelParams.init(config, 4)
    other = ModelParams.init(config, 5)

    shapes = parameter_shapes(config)
    assert list(first) == list(shapes)
    assert all(first[name].shape == shape for name, shape in shapes.items())
    np.testing.assert_array_equal(first["score.w"], second["score.w"])
    assert not np.array_equal(first["score.w"], other["score.w"])
    assert first.n_values() == sum(int(np.prod(shape)) for shape in shapes.values())
    assert len(first) == len(shapes)


def test_replace_and_astype() -> None:
    """Replacements keep dtype and shape; unknown names are rejected."""
    params = tiny_params(small_vocab())

    updated = params.replace({"score.w": np.ones((8, 1))})

    assert updated["score.w"].dtype == np.float32
    np.testing.assert_array_equal(updated["score.w"], 1.0)
    assert params["score.w"].max() < 1.0
    assert params.astype(np.float64).dtype == np.float64
    with pytest.raises(KeyError):
        params.replace({"missing": np.ones(1)})
    with pytest.raises(ValueError, match="shape"):
        params.replace({"score.w": np.ones((1, 8))})


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_checkpoint_save_and_load(tmp_path: Path, dtype: type[np.floating]) -> None:
    """Checkpoints restore every array bit for bit alongside their config."""
    params = tiny_params(small_vocab(), seed=2, dtype=dtype)
    path = tmp_path / "ckpt" / "model.prnk"

    config_path = save_checkpoint(params, path)
    loaded = load_checkpoint(path)

    assert config_path == path.with_suffix(".json")
    assert path.read_bytes()[:4] == MAGIC
    assert loaded.config == params.config
    assert loaded.dtype == dtype
    for name in params:
        np.testing.assert_array_equal(loaded[name], params[name])


def test_decode_rejects_corrupt_payloads() -> None:
    """Bad magic, truncation and trailing bytes are format errors."""
    vocab = small_vocab()
    params = tiny_params(vocab)
    payload = encode_checkpoint(params)

    with pytest.raises(ArtifactFormatError, match="magic"):
        decode_checkpoint(b"XXXX" + payload[4:], params.config)
    with pytest.raises(ArtifactFormatError):
        decode_checkpoint(payload[:-5], params.config)
    with pytest.raises(ArtifactFormatError):
        decode_checkpoint(payload[:10], params.config)
    with pytest.raises(ArtifactFormatError, match="trailing"):
        decode_checkpoint(payload + b"\x00", params.config)


def test_decode_rejects_config_mismatch() -> None:
    """A checkpoint only loads into the architecture it was saved from."""
    vocab = small_vocab()
    params = tiny_params(vocab)

    with pytest.raises(ArtifactFormatError):
        decode_checkpoint(encode_checkpoint(params), tiny_model_config(vocab, hidden=16))


def test_load_checkpoint_without_config(tmp_path: Path) -> None:
    """A checkpoint missing its config file cannot be read."""
    path = tmp_path / "orphan.prnk"
    path.write_bytes(encode_checkpoint(tiny_params(small_vocab())))

    with pytest.raises(ArtifactFormatError, match="cannot read"):
        load_checkpoint(path)
