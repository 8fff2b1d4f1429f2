import numpy as np
import pytest

from triembed.audio import LogMelSpectrogram
from triembed.diffcore import Tensor, backward, sum_
from triembed.encoders import (
    AudioEncoder,
    ImageEncoder,
    TextTable,
    encode_audio,
    encode_image,
    encode_text,
    load_state,
    state_dict,
)


def test_image_grid_shape():
    enc = ImageEncoder(3, (4, 4, 4), emb_size=16)
    feats = encode_image(np.zeros((32, 32, 3)), enc)
    assert feats.grid.shape == (4, 4, 16)


def test_image_size_not_divisible():
    enc = ImageEncoder(3, (4, 4, 4))
    with pytest.raises(ValueError, match="divisible"):
        encode_image(np.zeros((30, 32, 3)), enc)
    with pytest.raises(ValueError, match="channels"):
        encode_image(np.zeros((32, 32, 1)), enc)


def test_audio_sequence_length():
    enc = AudioEncoder(40, (8, 8), emb_size=16)
    feats = encode_audio(LogMelSpectrogram(np.zeros((98, 40)), 16000, 0.010), enc)
    assert feats.seq.shape == (24, 16)
    with pytest.raises(ValueError, match="Mel bands"):
        encode_audio(np.zeros((98, 20)), enc)
    with pytest.raises(ValueError, match="frames"):
        encode_audio(np.zeros((3, 40)), enc)


def test_text_lookup_rows():
    table = np.arange(12.0).reshape(4, 3)
    feats = encode_text([2, 0, 2], table)
    np.testing.assert_array_equal(feats.seq.data, table[[2, 0, 2]])
    with pytest.raises(ValueError, match="vocabulary"):
        encode_text([4], table)
    with pytest.raises(ValueError, match="empty"):
        encode_text([], table)


def test_frozen_table_gets_no_gradient():
    t = TextTable(5, 3, frozen=True)
    assert t.params == {}
    before = t.table.data.copy()
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    out = sum_(encode_text([1, 3], t).seq * x)
    backward(out)
    assert t.table.grad is None or not t.table.grad.any()
    np.testing.assert_array_equal(t.table.data, before)


def test_unfrozen_table_accumulates_repeated_rows():
    t = TextTable(4, 2, frozen=False)
    backward(sum_(t([1, 1, 3])))
    np.testing.assert_array_equal(t.table.grad, [[0, 0], [2, 2], [0, 0], [1, 1]])


def test_seeded_init_reproducible_and_bounded():
    a, b = ImageEncoder(seed=5), ImageEncoder(seed=5)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)
    w = a.params["image.conv0.w"].data
    assert np.abs(w).max() <= np.sqrt(1 / 27)
    assert not a.params["image.conv0.b"].data.any()


def test_state_roundtrip():
    a, b = AudioEncoder(8, (4, 4), 6, seed=1), AudioEncoder(8, (4, 4), 6, seed=2)
    load_state([b], state_dict(a))
    x = np.random.default_rng(0).standard_normal((1, 12, 8))
    np.testing.assert_array_equal(a(x).data, b(x).data)
    with pytest.raises(ValueError, match="shape"):
        load_state([AudioEncoder(8, (4, 5), 6)], state_dict(a))
