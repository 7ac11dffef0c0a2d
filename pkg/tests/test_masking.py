import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from priorinpaint.masking import (
    MaskSampler,
    MaskSpec,
    apply_mask,
    compose,
    default_spec,
    gen_center_mask,
    gen_checker_mask,
    gen_freehand_mask,
    generate_mask,
    hole_fraction,
    load_mask,
    save_mask,
)


@pytest.mark.exact
def test_center_mask_fraction_example():
    m = gen_center_mask(32, 32, 0.5, 0.7, seed=7)
    assert 0.48 <= hole_fraction(m) <= 0.72


@pytest.mark.exact
def test_center_mask_is_centered_rectangle():
    m = gen_center_mask(32, 32, 0.5, 0.7, seed=11)
    rows, cols = np.nonzero(m == 0)
    r0, r1, c0, c1 = rows.min(), rows.max(), cols.min(), cols.max()
    assert (m[r0:r1 + 1, c0:c1 + 1] == 0).all()
    assert (m == 0).sum() == (r1 - r0 + 1) * (c1 - c0 + 1)
    assert abs((r0 + r1) / 2 - 15.5) <= 0.5 and abs((c0 + c1) / 2 - 15.5) <= 0.5


@pytest.mark.exact
@pytest.mark.parametrize("seed", [0, 5, 123])
def test_center_mask_degenerate_fractions(seed):
    assert (gen_center_mask(32, 32, 0.0, 0.0, seed) == 1).all()
    assert (gen_center_mask(32, 32, 1.0, 1.0, seed) == 0).all()


@pytest.mark.parametrize("args", [(32, 32, 0.7, 0.5), (32, 32, -0.1, 0.5), (32, 32, 0.5, 1.2), (0, 32, 0.5, 0.6),
                                  (1, 32, 0.5, 0.6)])
@pytest.mark.exact
def test_center_mask_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        gen_center_mask(*args, seed=0)


@pytest.mark.exact
def test_freehand_fraction_and_determinism():
    m = gen_freehand_mask(32, 32, 0.5, seed=3)
    assert 0.50 <= hole_fraction(m) <= 0.56
    np.testing.assert_array_equal(m, gen_freehand_mask(32, 32, 0.5, seed=3))


@pytest.mark.exact
@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5])
def test_freehand_rejects_bad_target(bad):
    with pytest.raises(ValueError):
        gen_freehand_mask(32, 32, bad, seed=0)


def _components_bruteforce(hole):
    """Flood-fill count of 8-connected components, independent of scipy."""
    h, w = hole.shape
    seen = np.zeros_like(hole, dtype=bool)
    count = 0
    for y in range(h):
        for x in range(w):
            if hole[y, x] and not seen[y, x]:
                count += 1
                stack = [(y, x)]
                seen[y, x] = True
                while stack:
                    cy, cx = stack.pop()
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = cy + dy, cx + dx
                            if 0 <= ny < h and 0 <= nx < w and hole[ny, nx] and not seen[ny, nx]:
                                seen[ny, nx] = True
                                stack.append((ny, nx))
    return count


@pytest.mark.exact
@pytest.mark.parametrize("seed", range(20))
def test_freehand_component_count(seed):
    hole = gen_freehand_mask(32, 32, 0.5, seed) == 0
    n = _components_bruteforce(hole)
    assert n == ndimage.label(hole, structure=np.ones((3, 3)))[1]
    assert 1 <= n <= 8


@pytest.mark.exact
def test_checker_fraction_example():
    m = gen_checker_mask(32, 32, 0.5, {4, 8}, seed=1)
    assert 0.44 <= hole_fraction(m) <= 0.56


@pytest.mark.exact
def test_checker_hand_enumeration():
    m = gen_checker_mask(4, 4, 0.5, {2}, seed=0, phase=(0, 0))
    expected = np.array([[0, 0, 1, 1],
                         [0, 0, 1, 1],
                         [1, 1, 0, 0],
                         [1, 1, 0, 0]])
    np.testing.assert_array_equal(m, expected)
    assert (m == 0).sum() == 8


@pytest.mark.exact
def test_checker_determinism_and_errors():
    a = gen_checker_mask(32, 32, 0.5, (4, 8), seed=9)
    np.testing.assert_array_equal(a, gen_checker_mask(32, 32, 0.5, (4, 8), seed=9))
    with pytest.raises(ValueError):
        gen_checker_mask(32, 32, 0.5, set(), seed=0)


@pytest.mark.exact
@pytest.mark.parametrize("target", [0.3, 0.7])
def test_checker_off_half_targets(target):
    m = gen_checker_mask(32, 32, target, (4,), seed=2)
    assert abs(hole_fraction(m) - target) <= 2 * 4 / 32


@pytest.mark.exact
@pytest.mark.parametrize("kind", ["RC", "RF", "RCh"])
def test_spec_dispatch_is_binary_and_deterministic(kind):
    spec = default_spec(kind, seed=42)
    a = generate_mask(spec, 32, 32)
    assert set(np.unique(a)) <= {0, 1}
    np.testing.assert_array_equal(a, generate_mask(MaskSpec.from_json(spec.to_json()), 32, 32))


@pytest.mark.exact
def test_unknown_kind():
    with pytest.raises(ValueError):
        MaskSpec("XX")


@pytest.mark.exact
def test_apply_mask_examples():
    img = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(apply_mask(img, np.ones((2, 2))), img)
    np.testing.assert_array_equal(apply_mask(img, np.zeros((2, 2))), np.zeros((2, 2)))
    np.testing.assert_array_equal(apply_mask(img, np.array([[1, 0], [1, 1]])), [[1.0, 0.0], [3.0, 4.0]])
    with pytest.raises(ValueError):
        apply_mask(img, np.ones((3, 3)))


@pytest.mark.exact
def test_compose_examples():
    img = np.array([[1.0, 2.0], [3.0, 4.0]]) / 4
    gen = np.full((2, 2), 0.9)
    np.testing.assert_array_equal(compose(img, np.ones((2, 2)), gen), img)
    np.testing.assert_array_equal(compose(img, np.zeros((2, 2)), gen), gen)
    np.testing.assert_allclose(compose(img, np.array([[1, 0], [1, 1]]), gen), [[0.25, 0.9], [0.75, 1.0]],
                               rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        compose(img, np.ones((2, 2)), np.ones((3, 3)))


@pytest.mark.exact
def test_compose_torch_matches_numpy():
    rng = np.random.default_rng(0)
    img, gen = rng.random((2, 1, 8, 8)), rng.random((2, 1, 8, 8))
    mask = gen_center_mask(8, 8, 0.5, 0.5, 0)
    out_t = compose(torch.from_numpy(img), torch.from_numpy(mask), torch.from_numpy(gen))
    np.testing.assert_array_equal(out_t.numpy(), compose(img, mask, gen))


images = st.integers(0, 2 ** 31 - 1).map(lambda s: np.random.default_rng(s).random((6, 6)))
masks = st.integers(0, 2 ** 31 - 1).map(lambda s: (np.random.default_rng(s).random((6, 6)) > 0.5).astype(np.uint8))


@pytest.mark.exact
@settings(max_examples=50, deadline=None)
@given(images, images, masks)
def test_compose_properties(img, gen, mask):
    out = compose(img, mask, gen)
    np.testing.assert_array_equal(apply_mask(out, mask), apply_mask(img, mask))
    np.testing.assert_array_equal(compose(img, mask, img), img)


@pytest.mark.exact
@settings(max_examples=50, deadline=None)
@given(images, images, masks, st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(a, b, mask, alpha, beta):
    lhs = apply_mask(alpha * a + beta * b, mask)
    np.testing.assert_allclose(lhs, alpha * apply_mask(a, mask) + beta * apply_mask(b, mask), atol=1e-12)
    g1, g2 = np.zeros_like(a), np.zeros_like(b)
    lhs = compose(alpha * a + beta * b, mask, alpha * g1 + beta * g2)
    rhs = alpha * compose(a, mask, g1) + beta * compose(b, mask, g2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@pytest.mark.exact
def test_png_roundtrip(tmp_path):
    spec = default_spec("RF", seed=5)
    m = generate_mask(spec, 32, 32)
    path = save_mask(tmp_path / "m.png", m, spec)
    back, back_spec = load_mask(path)
    np.testing.assert_array_equal(back, m)
    assert back_spec == spec
    from PIL import Image
    raw = np.asarray(Image.open(path))
    assert set(np.unique(raw)) <= {0, 255}


@pytest.mark.exact
def test_sampler_is_seeded():
    g1, g2 = torch.Generator().manual_seed(3), torch.Generator().manual_seed(3)
    s = MaskSampler(32, 32, bank_size=20, seed=1)
    a, b = s.sample(8, g1), s.sample(8, g2)
    assert a.shape == (8, 1, 32, 32)
    assert torch.equal(a, b)
    assert torch.equal(MaskSampler(32, 32, bank_size=20, seed=1).bank, s.bank)


@pytest.mark.maskstats
@pytest.mark.parametrize("kind,lo,hi", [("RC", 0.48, 0.72), ("RF", 0.50, 0.56), ("RCh", 0.44, 0.56)])
def test_hole_fraction_over_many_seeds(kind, lo, hi):
    fracs = np.array([hole_fraction(generate_mask(default_spec(kind, s), 32, 32)) for s in range(1000)])
    assert fracs.min() >= lo and fracs.max() <= hi, (fracs.min(), fracs.max())
