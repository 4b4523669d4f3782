"""Broadcast decoder: partition of unity, identity start, oracle, grads."""

import numpy as np
import pytest

import slotseg.autodiff as ad
from slotseg.autodiff import Tensor
from slotseg.rng import rng_from
from slotseg.slot_decoder import (SlotDecoder, SlotReconstruction,
                                  broadcast_decode, combine,
                                  decode_slot_masks, reconstruction_loss)
from slotseg.slots import SlotSet

from helpers import check_gradients, oracle_combine


def _slots(rng, k, d):
    return SlotSet(slots=Tensor(rng.normal(0.0, 1.0, size=(k, d))))


def test_masks_partition_unity_random_weights():
    rng = rng_from(20, "decoder")
    dec = SlotDecoder(grid=(5, 4), d_slot=8, d_feat=9, seed=1, hidden=16)
    for trial in range(5):
        parts = combine(broadcast_decode(dec, _slots(rng, 4, 8)))
        sums = parts.masks.data.sum(axis=0)
        assert np.allclose(sums, 1.0, atol=1e-12)
        assert np.all(parts.masks.data >= 0.0)


def test_identity_start_reconstructs_slots():
    rng = rng_from(21, "decoder")
    d = 8
    dec = SlotDecoder(grid=(3, 3), d_slot=d, d_feat=d, seed=2, hidden=2 * d)
    slots = rng.normal(0.0, 1.0, size=(5, d))
    parts = combine(broadcast_decode(dec, SlotSet(slots=Tensor(slots))))
    # every position carries its slot vector unchanged, alpha stays zero
    expected = np.repeat(slots[:, None, :], 9, axis=1)
    assert np.array_equal(parts.per_slot.data, expected)
    assert np.all(parts.alpha.data == 0.0)
    assert np.all(parts.masks.data == 1.0 / 5.0)
    assert np.all(dec.pos.data == 0.0)


def test_small_hidden_or_mismatched_dims_fall_back_to_random():
    dec_a = SlotDecoder(grid=(3, 3), d_slot=8, d_feat=9, seed=3, hidden=32)
    dec_b = SlotDecoder(grid=(3, 3), d_slot=8, d_feat=8, seed=3, hidden=8)
    for dec in (dec_a, dec_b):
        assert np.any(dec.pos.data != 0.0)
        rng = rng_from(22, "decoder")
        parts = broadcast_decode(dec, _slots(rng, 3, 8))
        assert np.any(parts.alpha.data != 0.0)


def test_combine_matches_oracle():
    rng = rng_from(23, "combine")
    per_slot = rng.normal(0.0, 2.0, size=(4, 7, 5))
    alpha = rng.normal(0.0, 3.0, size=(4, 7))
    parts = combine(SlotReconstruction(per_slot=Tensor(per_slot),
                                       alpha=Tensor(alpha)))
    expected = oracle_combine(per_slot, alpha)
    assert np.max(np.abs(parts.combined.data - expected)) <= 1e-10


def test_reconstruction_loss_is_mse():
    a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    b = np.array([[1.0, 0.0], [3.0, 8.0]])
    loss = reconstruction_loss(a, b)
    assert float(loss.data) == pytest.approx((4.0 + 16.0) / 4.0)
    rng = rng_from(24, "mse")
    x = rng.normal(size=(6, 5))
    y = rng.normal(size=(6, 5))
    assert float(reconstruction_loss(Tensor(x), y).data) == pytest.approx(
        np.mean((x - y) ** 2), abs=1e-12)
    with pytest.raises(ValueError):
        reconstruction_loss(Tensor(np.zeros((2, 3))), np.zeros((3, 2)))


def test_broadcast_decode_rejects_wrong_slot_dim():
    dec = SlotDecoder(grid=(2, 2), d_slot=8, d_feat=8, seed=4, hidden=16)
    rng = rng_from(25, "decoder")
    with pytest.raises(ValueError):
        broadcast_decode(dec, _slots(rng, 3, 9))


def test_decode_slot_masks_shape_and_values():
    rng = rng_from(26, "decoder")
    dec = SlotDecoder(grid=(4, 6), d_slot=4, d_feat=8, seed=5, hidden=16)
    masks = decode_slot_masks(dec, _slots(rng, 3, 4))
    assert isinstance(masks, np.ndarray)
    assert masks.shape == (3, 4, 6)
    assert np.allclose(masks.sum(axis=0), 1.0, atol=1e-12)


def test_decoder_gradients():
    rng = rng_from(27, "decoder")
    dec = SlotDecoder(grid=(2, 2), d_slot=4, d_feat=5, seed=6, hidden=8)
    target = rng.normal(size=(4, 5))
    leaf = Tensor(rng.normal(size=(3, 4)), requires_grad=True)

    def loss_fn():
        parts = combine(broadcast_decode(dec, SlotSet(slots=leaf)))
        return reconstruction_loss(parts.combined, target)

    tensors = [leaf, dec.pos, dec.mlp.layers[0].weight,
               dec.mlp.layers[-1].weight, dec.mlp.layers[-1].bias]
    check_gradients(loss_fn, tensors, rtol=1e-4)
