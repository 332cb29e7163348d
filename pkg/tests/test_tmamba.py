import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dtmamba import tensor as T
from dtmamba.errors import ConfigError
from dtmamba.nn import DropoutMask, Linear, dropout_mask
from dtmamba.tmamba import TMambaBlock, tmamba_forward

KW = dict(d_state=3, e_fact=1, d_conv=2)


def make_block(rng, in_dim=5, ni=4, n2=3, **kw):
    return TMambaBlock(in_dim, ni, n2, rng, **{**KW, **kw})


def test_embed_degenerate_affine(rng):
    lin = Linear(3, 2, rng)
    lin.weight.data[:] = 0.0
    lin.bias.data[:] = [0.5, -1.0]
    assert_array_equal(lin(rng.normal(size=(4, 1, 3))).data, np.broadcast_to([0.5, -1.0], (4, 1, 2)))


def test_embed_identity(rng):
    lin = Linear(3, 3, rng)
    lin.weight.data = np.eye(3)
    lin.bias.data[:] = 0.0
    x = rng.normal(size=(2, 1, 3))
    assert_array_equal(lin(x).data, x)


def test_embed_hand_matmul(rng):
    lin = Linear(3, 2, rng)
    lin.weight.data = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    lin.bias.data[:] = 0.0
    assert_array_equal(lin(np.array([[[1.0, 2.0, 3.0]]])).data, [[[4.0, 5.0]]])


def test_embed_width_mismatch(rng):
    with pytest.raises(ConfigError):
        make_block(rng)(np.ones((2, 1, 4)))


def test_residual_identity_and_zero(rng):
    block = make_block(rng, ni=3, n2=3)
    x_e = T.as_tensor(rng.normal(size=(2, 1, 3)))
    block.residual_fc.weight.data = np.eye(3)
    block.residual_fc.bias.data[:] = 0.0
    assert_array_equal(block.residual_branch(x_e).data, x_e.data)
    block.residual_fc.weight.data[:] = 0.0
    block.residual_fc.bias.data[:] = 2.0
    assert_array_equal(block.residual_branch(x_e).data, 2.0)


def test_residual_gradient_reaches_embedding_when_mambas_are_silent(rng):
    block = make_block(rng)
    for m in (block.mamba_low, block.mamba_high):
        m.out_proj.weight.data[:] = 0.0
    out, r = block(rng.normal(size=(3, 1, 5)))
    assert_array_equal(out.data, 0.0)
    (T.tsum(r * r) + T.tsum(out)).backward()
    assert np.abs(block.embed.weight.grad).max() > 0


def test_zero_dropout_is_identity(rng):
    block = make_block(rng, dropout_p=0.0)
    x = rng.normal(size=(3, 1, 5))
    a = block(x, training=True, rng=np.random.default_rng(0))[0].data
    b = block(x, training=False)[0].data
    assert_array_equal(a, b)


def test_eval_mode_is_deterministic(rng):
    block = make_block(rng, dropout_p=0.5)
    x = rng.normal(size=(3, 1, 5))
    a, ra = tmamba_forward(x, block)
    b, rb = tmamba_forward(x, block)
    assert_array_equal(a.data, b.data)
    assert_array_equal(ra.data, rb.data)


def test_twin_swap_leaves_output_unchanged(rng):
    block = make_block(rng)
    x = rng.normal(size=(4, 1, 5))
    before = block(x)[0].data
    block.mamba_low, block.mamba_high = block.mamba_high, block.mamba_low
    assert_array_equal(block(x)[0].data, before)


def test_twins_share_hyperparameters_not_storage(rng):
    block = make_block(rng)
    lo, hi = block.mamba_low, block.mamba_high
    assert (lo.d_model, lo.e_fact, lo.d_conv, lo.ssm.d_state) == (hi.d_model, hi.e_fact, hi.d_conv, hi.ssm.d_state)
    for (_, a), (_, b) in zip(lo.named_parameters(), hi.named_parameters()):
        assert a is not b and a.data is not b.data
    assert not np.array_equal(lo.in_proj.weight.data, hi.in_proj.weight.data)


def test_tied_twins_count_once(rng):
    untied = make_block(np.random.default_rng(0))
    tied = make_block(np.random.default_rng(0), tied=True)
    assert tied.mamba_low is tied.mamba_high
    assert untied.num_parameters() - tied.num_parameters() == untied.mamba_high.num_parameters()


def test_single_mamba_block(rng):
    block = make_block(rng, twins=False)
    assert block.mamba_high is None
    assert block(rng.normal(size=(2, 1, 5)))[0].shape == (2, 1, 4)


def test_dropout_is_unbiased():
    rng = np.random.default_rng(0)
    ones = np.ones((10_000, 8))
    for p in (0.05, 0.5):
        m = dropout_mask(ones.shape, p, True, rng).apply(T.as_tensor(ones)).data
        # per element at p = 0.05 (the mean's std is ~0.2%), overall at p = 0.5
        mean = m.mean(axis=0) if p == 0.05 else m.mean()
        assert np.all(np.abs(mean - 1.0) < 0.02)
        assert set(np.unique(m)) <= {0.0, 1.0 / (1.0 - p)}


def test_eval_mask_is_all_ones():
    m = dropout_mask((3, 4), 0.3, False, None)
    assert_array_equal(m.mask, 1.0)


def test_both_twins_see_the_same_mask(rng):
    block = make_block(rng, dropout_p=0.5)
    x = rng.normal(size=(3, 1, 5))
    out, _ = block(x, training=True, rng=np.random.default_rng(1))
    # the block draws exactly one mask; replaying the draw feeds both twins
    x_e = block.embed(x)
    x_d = dropout_mask(x_e.shape, 0.5, True, np.random.default_rng(1)).apply(x_e)
    assert (x_d.data == 0).any()
    expect = block.mamba_low(x_d) + block.mamba_high(x_d)
    assert_array_equal(out.data, expect.data)


def test_residual_taps_pre_dropout_embedding(rng):
    block = make_block(rng)
    x = rng.normal(size=(3, 1, 5))
    dead = DropoutMask(np.zeros((3, 1, 4)), 0.5, True)
    out, r = block(x, training=True, mask=dead)
    assert np.abs(r.data).min() > 0
    assert_allclose(r.data, block.residual_branch(block.embed(x)).data)


@pytest.mark.parametrize("axis", ["feature", "time"])
def test_width_contract(rng, axis):
    T_, n1, n2 = 8, 6, 4
    b1 = TMambaBlock(T_, n1, n2, rng, mamba_axis=axis, **KW)
    b2 = TMambaBlock(n1, n2, n2, rng, mamba_axis=axis, **KW)
    x = rng.normal(size=(5, 1, T_))
    h1, r1 = b1(x)
    h2, r2 = b2(h1)
    assert h1.shape == (5, 1, n1) and h2.shape == (5, 1, n2)
    assert r1.shape == r2.shape == (5, 1, n2)


def test_no_residual_block(rng):
    block = make_block(rng, residual=False)
    assert block.residual_fc is None
    assert block(rng.normal(size=(2, 1, 5)))[1] is None


def test_bad_dropout_rejected(rng):
    with pytest.raises(ConfigError):
        make_block(rng, dropout_p=1.0)
