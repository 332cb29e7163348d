import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from numpy.testing import assert_allclose, assert_array_equal

from dtmamba.errors import ContractError, DataError, InversionError, WindowingError
from dtmamba.preprocess import (
    HORIZON,
    RevIN,
    RevinStats,
    SeriesBatch,
    channel_independence,
    channel_independence_inverse,
    revin_forward,
    revin_inverse,
)


def fwd(x, eps=1e-5, affine=True):
    x = np.asarray(x, dtype=float)
    return revin_forward(SeriesBatch.lookback(x), RevIN(x.shape[2], affine=affine, eps=eps))


def test_constant_channel_normalizes_to_zero():
    out, stats = fwd(np.full((2, 5, 3), 5.0))
    assert_array_equal(out.values.data, 0.0)
    assert np.all(stats.std + stats.eps >= stats.eps)


def test_hand_normalization():
    out, _ = fwd([[[1.0], [2.0], [3.0]]], eps=0.0)
    assert_allclose(out.values.data[0, :, 0], [-1.2247448714, 0.0, 1.2247448714], atol=1e-9)


def test_stats_are_per_instance_per_channel(rng):
    x = rng.normal(size=(3, 10, 2))
    _, stats = fwd(x)
    assert stats.mean.shape == stats.std.shape == (3, 1, 2)
    assert_allclose(stats.mean[1, 0, 1], x[1, :, 1].mean())
    assert_allclose(stats.std[2, 0, 0], x[2, :, 0].std())


def test_round_trip_random_batch(rng):
    x = rng.normal(size=(2, 8, 3)) * 4 + 7
    out, stats = fwd(x)
    back = revin_inverse(out, stats).values.data
    assert np.abs(back - x).max() < 1e-9


def test_round_trip_with_learned_affine(rng):
    x = rng.normal(size=(2, 8, 3))
    revin = RevIN(3)
    revin.gamma.data[:] = [0.5, -2.0, 3.0]
    revin.beta.data[:] = [1.0, 0.0, -1.0]
    out, stats = revin_forward(SeriesBatch.lookback(x), revin)
    assert np.abs(revin_inverse(out, stats).values.data - x).max() < 1e-9


def test_inverse_identity_stats(rng):
    v = rng.normal(size=(2, 4, 3))
    ones = RevIN(3)
    stats = RevinStats(np.zeros((2, 1, 3)), np.ones((2, 1, 3)), ones.gamma, ones.beta, 0.0)
    assert_array_equal(revin_inverse(SeriesBatch(v, HORIZON, 2, 3), stats).values.data, v)


def test_inverse_maps_zero_to_mean(rng):
    x = rng.normal(size=(2, 6, 3)) + 3
    _, stats = fwd(x)
    z = SeriesBatch(np.zeros((2, 4, 3)), HORIZON, 2, 3)
    assert_allclose(revin_inverse(z, stats).values.data, np.broadcast_to(stats.mean, (2, 4, 3)))


def test_inverse_rejects_vanishing_gamma(rng):
    x = rng.normal(size=(1, 5, 2))
    revin = RevIN(2)
    out, stats = revin_forward(SeriesBatch.lookback(x), revin)
    revin.gamma.data[1] = 1e-13
    with pytest.raises(InversionError):
        revin_inverse(out, stats)


def test_forward_input_checks():
    with pytest.raises(WindowingError):
        fwd(np.ones((1, 1, 2)))
    bad = np.ones((1, 4, 2))
    bad[0, 1, 1] = np.nan
    with pytest.raises(DataError):
        fwd(bad)


finite_batch = hnp.arrays(
    np.float64, st.tuples(st.integers(1, 3), st.integers(2, 12), st.integers(1, 4)),
    elements=st.floats(-1e3, 1e3),
)


@given(finite_batch)
def test_round_trip_property(x):
    out, stats = fwd(x)
    assert np.abs(revin_inverse(out, stats).values.data - x).max() <= 1e-9 * max(1.0, np.abs(x).max())


@given(finite_batch)
def test_normalized_moments(x):
    # exact unit std requires eps = 0; the default eps is covered below
    sd = x.std(axis=1)
    if np.any(sd < 1e-3):
        return
    out = fwd(x, eps=0.0)[0].values.data
    assert np.abs(out.mean(axis=1)).max() < 1e-9
    assert np.abs(out.std(axis=1) - 1).max() < 1e-6


@given(finite_batch)
def test_default_eps_shrinks_std_by_eps_over_sigma(x):
    sd = x.std(axis=1)
    if np.any(sd < 1e-3):
        return
    out = fwd(x)[0].values.data
    assert np.abs(out.mean(axis=1)).max() < 1e-9
    assert_allclose(out.std(axis=1), sd / (sd + 1e-5), rtol=1e-9)


@settings(max_examples=50)
@given(finite_batch, st.floats(1e-3, 1e3), st.data())
def test_channel_scale_invariance(x, k, data):
    c = data.draw(st.integers(0, x.shape[2] - 1))
    if np.any(x.std(axis=1) < 1e-3):
        return
    y = x.copy()
    y[:, :, c] *= k
    a, sa = fwd(x, eps=0.0)
    b, sb = fwd(y, eps=0.0)
    assert_allclose(sb.std[:, :, c], k * sa.std[:, :, c], rtol=1e-12)
    assert np.abs(a.values.data - b.values.data).max() < 1e-9


def test_channel_independence_index_map():
    x = SeriesBatch.lookback(np.array([[[1.0, 10.0], [2.0, 20.0]]]))
    ci = channel_independence(x)
    assert_array_equal(ci.values.data, [[[1.0, 2.0]], [[10.0, 20.0]]])


def test_channel_independence_single_channel(rng):
    x = rng.normal(size=(3, 5, 1))
    ci = channel_independence(SeriesBatch.lookback(x)).values.data
    assert ci.shape == (3, 1, 5)
    assert_array_equal(ci[:, 0, :], x[:, :, 0])


def test_channel_independence_inverse_spot_check(rng):
    v = rng.normal(size=(6, 1, 4))
    out = channel_independence_inverse(v, B=2, N=3)
    assert out.values.shape == (2, 4, 3) and out.layout == HORIZON
    assert out.values.data[1, 2, 1] == v[4, 0, 2]


def test_channel_independence_inverse_single_channel(rng):
    v = rng.normal(size=(2, 1, 5))
    assert_array_equal(channel_independence_inverse(v, 2, 1).values.data[:, :, 0], v[:, 0, :])


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6), st.integers(1, 5)),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_channel_independence_is_a_bijection(x):
    B, L, N = x.shape
    ci = channel_independence(SeriesBatch.lookback(x))
    assert_array_equal(channel_independence_inverse(ci, B, N).values.data, x)
    back = channel_independence_inverse(ci, B, N).values.data
    again = channel_independence(SeriesBatch.lookback(back)).values.data
    assert_array_equal(again, ci.values.data)


def test_layout_contracts(rng):
    ci = channel_independence(SeriesBatch.lookback(rng.normal(size=(2, 3, 2))))
    with pytest.raises(ContractError):
        channel_independence(ci)
    with pytest.raises(ContractError):
        channel_independence_inverse(rng.normal(size=(5, 1, 3)), 2, 3)
    with pytest.raises(ContractError):
        SeriesBatch(np.zeros((2, 3, 4)), HORIZON, 2, 3)
