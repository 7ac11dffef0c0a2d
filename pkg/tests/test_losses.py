import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from priorinpaint.gan import discriminate
from priorinpaint.losses import (
    LossWeights,
    combined_loss,
    contextual_loss,
    gradient_diff_loss,
    realism_loss,
)
from priorinpaint.nets import Discriminator, Generator, freeze

from helpers import central_diff, rel_err


def naive_contextual(I, G, M):
    total, count = 0.0, 0
    for y in range(I.shape[0]):
        for x in range(I.shape[1]):
            if M[y, x]:
                total += abs(G[y, x] - I[y, x])
                count += 1
    return total / count if count else 0.0


def naive_gradient_diff(I, G, M):
    """Double-loop oracle for the masked forward-difference L1."""
    h, w = I.shape
    sx = nx = sy = ny = 0
    for y in range(h):
        for x in range(w - 1):
            if M[y, x] and M[y, x + 1]:
                sx += abs((I[y, x + 1] - I[y, x]) - (G[y, x + 1] - G[y, x]))
                nx += 1
    for y in range(h - 1):
        for x in range(w):
            if M[y, x] and M[y + 1, x]:
                sy += abs((I[y + 1, x] - I[y, x]) - (G[y + 1, x] - G[y, x]))
                ny += 1
    return (sx / nx if nx else 0.0) + (sy / ny if ny else 0.0)


@pytest.mark.exact
def test_contextual_examples():
    rng = np.random.default_rng(0)
    I = rng.random((8, 8))
    M = (rng.random((8, 8)) > 0.4).astype(float)
    assert contextual_loss(I, I, M).item() == 0.0
    assert contextual_loss(I, rng.random((8, 8)), np.zeros((8, 8))).item() == 0.0
    assert contextual_loss(np.zeros((4, 4)), np.full((4, 4), 0.5), np.ones((4, 4))).item() == 0.5
    with pytest.raises(ValueError):
        contextual_loss(I, I[:4], M)


@pytest.mark.exact
def test_realism_examples():
    assert realism_loss(0.5).item() == pytest.approx(math.log(0.5), abs=1e-12)
    assert realism_loss(0.0).item() == pytest.approx(math.log(1 - 1e-6), abs=1e-12)
    assert realism_loss(1.0).item() == pytest.approx(math.log(1e-6), abs=1e-9)
    assert realism_loss(1.0).item() == pytest.approx(-13.8155, abs=1e-4)


@pytest.mark.exact
def test_gradient_diff_examples():
    I = np.tile([0.0, 0.5, 1.0], (3, 1))
    G = np.zeros((3, 3))
    M = np.ones((3, 3))
    got = gradient_diff_loss(I, G, M).item()
    assert abs(got - naive_gradient_diff(I, G, M)) < 1e-12
    assert got == 0.5
    assert gradient_diff_loss(I, I, M).item() == 0.0
    assert gradient_diff_loss(np.full((5, 5), 0.3), np.full((5, 5), 0.8), M[:1].repeat(5, 0)[:, :1].repeat(5, 1)).item() == 0.0


@pytest.mark.exact
def test_combined_examples():
    rng = np.random.default_rng(1)
    I, G = rng.random((6, 6)), rng.random((6, 6))
    M = (rng.random((6, 6)) > 0.5).astype(float)
    w = LossWeights(1, 0, 0)
    assert torch.equal(combined_loss(I, G, M, 0.3, w), contextual_loss(I, G, M))
    got = combined_loss(I, I, M, 0.5, LossWeights(1, 1, 1)).item()
    assert got == pytest.approx(math.log(0.5), abs=1e-12)


@pytest.mark.exact
def test_weights_validated():
    with pytest.raises(ValueError):
        LossWeights(-1, 0, 0)
    with pytest.raises(ValueError):
        LossWeights(0, 0, 0)


arrays = st.integers(0, 2 ** 31 - 1).map(lambda s: np.random.default_rng(s))


@pytest.mark.exact
@settings(max_examples=60, deadline=None)
@given(arrays, st.integers(2, 7), st.integers(2, 7))
def test_oracles_agree(rng, h, w):
    I, G = rng.random((h, w)), rng.random((h, w))
    M = (rng.random((h, w)) > 0.4).astype(float)
    assert abs(contextual_loss(I, G, M).item() - naive_contextual(I, G, M)) < 1e-9
    assert abs(gradient_diff_loss(I, G, M).item() - naive_gradient_diff(I, G, M)) < 1e-9


@pytest.mark.audit
@settings(max_examples=40, deadline=None)
@given(arrays)
def test_hole_pixels_never_matter(rng):
    I, G = rng.random((2, 1, 8, 8)), rng.random((2, 1, 8, 8))
    M = (rng.random((2, 1, 8, 8)) > 0.5).astype(float)
    noise = rng.random(I.shape) * 100
    I2 = np.where(M == 1, I, noise)
    for fn in (contextual_loss, gradient_diff_loss):
        assert torch.equal(fn(I, G, M), fn(I2, G, M))
    # NaNs in the hole do not leak either
    I3 = np.where(M == 1, I, np.nan)
    assert torch.isfinite(combined_loss(I3, G, M, torch.tensor([0.3, 0.6]))).all()


@pytest.mark.exact
@settings(max_examples=40, deadline=None)
@given(arrays)
def test_nonnegative_and_batch_consistent(rng):
    I, G = rng.random((3, 1, 5, 5)), rng.random((3, 1, 5, 5))
    M = (rng.random((3, 1, 5, 5)) > 0.3).astype(float)
    batch = gradient_diff_loss(I, G, M)
    assert (batch >= 0).all()
    for i in range(3):
        assert batch[i].item() == pytest.approx(gradient_diff_loss(I[i], G[i], M[i]).item(), abs=1e-12)


# --- gradient checks, float64, central differences ---------------------------------

@pytest.mark.gradcheck
@pytest.mark.parametrize("inst", range(10))
@pytest.mark.parametrize("name", ["contextual", "gradient_diff"])
def test_image_loss_gradients(name, inst):
    rng = np.random.default_rng(100 + inst)
    I = torch.tensor(rng.random((5, 5)))
    M = torch.tensor((rng.random((5, 5)) > 0.3).astype(float))
    G = torch.tensor(rng.random((5, 5)), requires_grad=True)
    fn = contextual_loss if name == "contextual" else gradient_diff_loss
    fn(I, G, M).backward()
    num = central_diff(lambda g: fn(I, g, M).item(), G.detach().clone())
    assert rel_err(G.grad, num) < 1e-3


@pytest.mark.gradcheck
@pytest.mark.parametrize("inst", range(10))
def test_combined_through_frozen_generator(inst):
    torch.manual_seed(inst)
    gen = freeze(Generator(d=8, ch=8).double())
    disc = freeze(Discriminator(ch=4).double())
    rng = np.random.default_rng(inst)
    I = torch.tensor(rng.random((1, 1, 32, 32)))
    M = torch.tensor((rng.random((1, 1, 32, 32)) > 0.5).astype(float))
    w = LossWeights()

    def f(z):
        fake = gen(z)
        return combined_loss(I, fake, M, torch.sigmoid(disc(fake)), w).sum()

    z = torch.tensor(rng.uniform(-1, 1, (1, 8)), requires_grad=True)
    f(z).backward()
    with torch.no_grad():
        num = central_diff(lambda v: f(v).item(), z.detach().clone())
    assert rel_err(z.grad, num) < 1e-3
    # the generator is untouched by backprop into z
    assert all(p.grad is None for p in gen.parameters())


@pytest.mark.exact
def test_discriminate_deterministic():
    disc = freeze(Discriminator(ch=4))
    x = torch.rand(1, 32, 32)
    assert torch.equal(discriminate(disc, x), discriminate(disc, x))
