import math

import numpy as np
import pytest

from loranlab.activations import identity, relu, sigmoid, sinter, swish, tanh
from loranlab.adapters import (
    AdapterError,
    FrozenLinear,
    LoRAAdapter,
    LoRANAdapter,
    adapter_forward,
    as_identity_baseline,
    delta_weight,
    init_adapter,
    init_dense,
    init_loran,
    parameter_count,
    trainable_parameters,
)
from loranlab.engine import Tensor, add_bias, matmul
from loranlab.rng import SplitMix64


def frozen_layer(d, k, seed, bias=False):
    rng = SplitMix64(seed)
    b = Tensor(rng.normal_vector(d)) if bias else None
    return FrozenLinear(Tensor(rng.normal_matrix(d, k)), bias=b)


# --- init -------------------------------------------------------------------


def test_fresh_adapter_update_is_exactly_zero():
    for d, k, r in ((4, 4, 1), (16, 8, 3), (64, 64, 8)):
        ad = init_adapter(d, k, r, alpha=16.0, seed=5)
        assert np.all(ad.b.data == 0.0)
        assert np.all(delta_weight(ad).data == 0.0)
        assert delta_weight(ad).shape == (d, k)


def test_fresh_loran_update_is_zero_for_zero_fixing_maps():
    for spec in (identity(), relu(), tanh(), swish(25.0), sinter(0.5, 5e3)):
        ad = init_loran(8, 6, 2, alpha=16.0, seed=5, activation=spec)
        assert np.all(delta_weight(ad).data == 0.0)


def test_same_seed_gives_bitwise_identical_factors():
    a1 = init_adapter(10, 12, 4, alpha=8.0, seed=77)
    a2 = init_adapter(10, 12, 4, alpha=8.0, seed=77)
    assert np.array_equal(a1.a.data, a2.a.data)
    assert not np.array_equal(a1.a.data, init_adapter(10, 12, 4, 8.0, seed=78).a.data)


def test_gaussian_factor_moments():
    # r*k = 1024 entries: |mean| < 4/sqrt(r*k), variance within 30% of 1/r.
    r, k = 8, 128
    ad = init_adapter(16, k, r, alpha=16.0, seed=3)
    entries = ad.a.data.reshape(-1)
    assert entries.size == r * k == 1024
    assert abs(entries.mean()) < 4.0 / math.sqrt(r * k)
    assert abs(entries.var(ddof=1) - 1.0 / r) < 0.3 / r


def test_invalid_rank_is_rejected():
    with pytest.raises(AdapterError):
        init_adapter(4, 8, 0, alpha=1.0, seed=0)
    with pytest.raises(AdapterError):
        init_adapter(4, 8, 5, alpha=1.0, seed=0)
    init_adapter(4, 8, 4, alpha=1.0, seed=0)  # boundary rank is fine


# --- delta weight -----------------------------------------------------------


def test_identity_loran_delta_equals_lora_bitwise():
    for scale_inside in (True, False):
        plain = init_adapter(9, 7, 3, alpha=12.0, seed=21)
        plain.b.data[:] = SplitMix64(4).normal_matrix(9, 3)
        wrapped = LoRANAdapter(inner=plain, activation=identity(), scale_inside=scale_inside)
        assert np.array_equal(delta_weight(wrapped).data, delta_weight(plain).data)


def test_sinter_delta_hand_checked_rank_one():
    # B = e0, A = ones, s = 1, f = sinter(0.5, 1): row 0 is (1 + 0.5 sin 1) * ones.
    b = Tensor(np.array([[1.0], [0.0], [0.0], [0.0]]), requires_grad=True)
    a = Tensor(np.ones((1, 4)), requires_grad=True)
    ad = LoRANAdapter(
        inner=LoRAAdapter(b=b, a=a, rank=1, alpha=1.0),
        activation=sinter(0.5, 1.0),
    )
    delta = delta_weight(ad).data
    expected = 1.0 + 0.5 * math.sin(1.0)
    assert abs(expected - 1.4207354924039482) < 1e-15
    assert np.allclose(delta[0], expected, atol=1e-15)
    assert np.all(delta[1:] == 0.0)


def test_scale_placement_differs_for_nonlinear_maps():
    inner = init_adapter(6, 6, 2, alpha=8.0, seed=9)
    inner.b.data[:] = SplitMix64(10).normal_matrix(6, 2)
    inside = LoRANAdapter(inner=inner, activation=tanh(), scale_inside=True)
    outside = LoRANAdapter(inner=inner, activation=tanh(), scale_inside=False)
    d_in = delta_weight(inside).data
    d_out = delta_weight(outside).data
    assert not np.allclose(d_in, d_out)
    s = inner.scale
    m = inner.b.data @ inner.a.data
    assert np.allclose(d_in, np.tanh(s * m), atol=1e-15)
    assert np.allclose(d_out, s * np.tanh(m), atol=1e-15)


# --- adapter forward --------------------------------------------------------


def test_forward_at_init_equals_frozen_forward_bitwise():
    layer = frozen_layer(8, 5, seed=2, bias=True)
    x = Tensor(SplitMix64(3).normal_matrix(5, 20))
    base = layer.forward(x).data
    for spec in (identity(), relu(), tanh(), swish(1.0), sinter(5e-5, 1e4)):
        ad = init_loran(8, 5, 2, alpha=16.0, seed=4, activation=spec)
        assert np.array_equal(adapter_forward(layer, ad, x).data, base)


def test_sigmoid_forward_at_init_is_rank_one_constant_shift():
    layer = frozen_layer(8, 5, seed=2)
    x = Tensor(SplitMix64(3).normal_matrix(5, 11))
    base = layer.forward(x)
    for scale_inside in (True, False):
        ad = init_loran(8, 5, 2, alpha=16.0, seed=4, activation=sigmoid(),
                        scale_inside=scale_inside)
        got = adapter_forward(layer, ad, x).data
        const = 0.5 if scale_inside else ad.inner.scale * 0.5
        shift = matmul(Tensor(np.full((8, 5), const)), x)
        expected = (base + shift).data
        assert np.array_equal(got, expected)
        # Rank-1 check: every row of the shift matrix is identical.
        assert np.ptp(got - base.data, axis=0).max() < 1e-12


def test_forward_gradients_match_central_differences():
    # 6x5 layer, rank 2, sinter at the tuned point; loss is sum of squares.
    from loranlab.engine import finite_difference_check, hadamard, sum_all

    rng = SplitMix64(12)
    layer = frozen_layer(6, 5, seed=13)
    x = Tensor(rng.normal_matrix(5, 3))
    b_data = rng.normal_matrix(6, 2, std=0.3)
    a_data = rng.normal_matrix(2, 5, std=1.0 / math.sqrt(2))
    spec = sinter(5e-5, 1e4)

    def wrt_b(t):
        ad = LoRANAdapter(LoRAAdapter(b=t, a=Tensor(a_data), rank=2, alpha=4.0), spec)
        out = adapter_forward(layer, ad, x)
        return sum_all(hadamard(out, out))

    def wrt_a(t):
        ad = LoRANAdapter(LoRAAdapter(b=Tensor(b_data), a=t, rank=2, alpha=4.0), spec)
        out = adapter_forward(layer, ad, x)
        return sum_all(hadamard(out, out))

    assert finite_difference_check(wrt_b, Tensor(b_data.copy()), h=1e-6) < 1e-4
    assert finite_difference_check(wrt_a, Tensor(a_data.copy()), h=1e-6) < 1e-4


def test_forward_shape_mismatch_raises():
    layer = frozen_layer(8, 5, seed=2)
    ad = init_adapter(8, 6, 2, alpha=16.0, seed=4)
    with pytest.raises(AdapterError):
        adapter_forward(layer, ad, Tensor(np.zeros((6, 3))))


# --- parameters -------------------------------------------------------------


def test_parameter_counts_hand_checked():
    assert parameter_count(init_adapter(64, 64, 8, 16.0, seed=0)) == 1024
    assert parameter_count(init_loran(64, 64, 8, 16.0, 0, sinter())) == 1024
    assert parameter_count(init_adapter(768, 768, 64, 16.0, seed=0)) == 98304


def test_parameter_parity_for_random_shapes():
    rng = SplitMix64(31)
    for _ in range(20):
        d = 2 + rng.next_below(100)
        k = 2 + rng.next_below(100)
        r = 1 + rng.next_below(min(d, k))
        plain = init_adapter(d, k, r, 16.0, seed=1)
        wrapped = init_loran(d, k, r, 16.0, 1, sinter())
        assert parameter_count(plain) == parameter_count(wrapped) == r * (d + k)


def test_trainable_parameters_are_the_factor_tensors():
    ad = init_loran(6, 5, 2, 4.0, seed=8, activation=tanh())
    params = trainable_parameters(ad)
    assert params[0] is ad.inner.b and params[1] is ad.inner.a
    assert all(p.requires_grad for p in params)
    dense = init_dense(6, 5)
    assert trainable_parameters(dense) == [dense.w]
    assert parameter_count(dense) == 30


def test_as_identity_baseline_shares_factors():
    ad = init_loran(6, 5, 2, 4.0, seed=8, activation=sinter(), scale_inside=False)
    base = as_identity_baseline(ad)
    assert base.inner is ad.inner
    assert base.activation.kind == "identity"
    assert base.scale_inside is False


# --- frozen layer -----------------------------------------------------------


def test_frozen_layer_rejects_trainable_tensors():
    with pytest.raises(AdapterError):
        FrozenLinear(Tensor(np.zeros((3, 3)), requires_grad=True))
    with pytest.raises(AdapterError):
        FrozenLinear(Tensor(np.zeros((3, 3))), bias=Tensor(np.zeros(2)))


def test_frozen_layer_bias_applies_per_row():
    layer = FrozenLinear(Tensor(np.eye(2)), bias=Tensor(np.array([1.0, -1.0])))
    out = layer.forward(Tensor(np.zeros((2, 3))))
    expected = add_bias(Tensor(np.zeros((2, 3))), Tensor(np.array([1.0, -1.0])))
    assert np.array_equal(out.data, expected.data)


def test_content_hash_tracks_weights():
    layer = frozen_layer(4, 4, seed=1, bias=True)
    h1 = layer.content_hash()
    assert h1 == frozen_layer(4, 4, seed=1, bias=True).content_hash()
    assert h1 != frozen_layer(4, 4, seed=2, bias=True).content_hash()
