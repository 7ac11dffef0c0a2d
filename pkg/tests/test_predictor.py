import numpy as np
import pytest
import torch

from priorinpaint.checkpoint import CheckpointError
from priorinpaint.gan import gan_hash, sample_z
from priorinpaint.masking import MaskSampler, apply_mask, gen_center_mask
from priorinpaint.predictor import (
    PredictorConfig,
    inpaint,
    load_predictor,
    predict_z,
    save_predictor,
    train_predictor,
)


@pytest.mark.exact
def test_predict_z_shape_range_determinism(predictor, toy):
    img = toy[0][0]
    mask = gen_center_mask(32, 32, 0.5, 0.7, seed=0)
    z1 = predict_z(predictor, apply_mask(img, mask), mask)
    z2 = predict_z(predictor, apply_mask(img, mask), mask)
    assert z1.shape == (predictor.d,)
    assert torch.equal(z1, z2)
    assert z1.abs().max() <= 1


@pytest.mark.audit
def test_predict_z_ignores_hole_contents(predictor, toy):
    img = toy[0][1]
    mask = gen_center_mask(32, 32, 0.5, 0.7, seed=2)
    noisy = np.where(mask == 1, img, np.random.default_rng(0).random(img.shape))
    assert torch.equal(predict_z(predictor, img, mask), predict_z(predictor, noisy, mask))


@pytest.mark.degenerate
def test_all_ones_mask_is_identity(predictor, gan, toy):
    img = torch.as_tensor(toy[0][:3, None])
    out, _ = inpaint(predictor, gan[0], img, np.ones((32, 32)))
    assert torch.equal(out, img)


@pytest.mark.exact
def test_kept_pixels_bit_exact(predictor, gan, toy):
    img = torch.as_tensor(toy[0][2])
    mask = gen_center_mask(32, 32, 0.5, 0.7, seed=5)
    out, z = inpaint(predictor, gan[0], img, mask)
    keep = torch.as_tensor(mask == 1)
    assert torch.equal(out[0][keep], img[keep])
    assert z.shape == (predictor.d,)


@pytest.mark.exact
def test_conditional_predictor(cpredictor, cgan, toy):
    img, prior = toy[0][0], toy[2][0]
    mask = gen_center_mask(32, 32, 0.5, 0.7, seed=1)
    out, _ = inpaint(cpredictor, cgan[0], img, mask, prior)
    assert out.shape == (1, 32, 32)
    with pytest.raises(ValueError):
        predict_z(cpredictor, img, mask)


@pytest.mark.exact
def test_incompatible_models(predictor, cgan, toy):
    with pytest.raises(ValueError):
        inpaint(predictor, cgan[0], toy[0][0], np.ones((32, 32)), toy[2][0])


@pytest.mark.exact
def test_gan_untouched_by_training(gan, toy):
    before = gan_hash(gan[0], gan[1])
    train_predictor(gan[0], gan[1], toy[0][:, None],
                    cfg=PredictorConfig(batch_size=4, steps=3, ch=4, mask_bank=10))
    assert gan_hash(gan[0], gan[1]) == before


@pytest.fixture(scope="module")
def trained_pred(gan300, toy):
    cfg = PredictorConfig(batch_size=16, steps=500, ch=4, mask_bank=50, lr=1e-4)
    sampler = MaskSampler(32, 32, ("RC",), 50, seed=0)
    return train_predictor(gan300[0], gan300[1], toy[0][:, None], sampler, cfg=cfg)


@pytest.mark.exact
def test_smoke_run_loss_decreases(sharp_gan):
    """On the generator's own samples, 100-step block means of the loss fall from block to block."""
    gen, disc = sharp_gan
    with torch.no_grad():
        imgs = gen(sample_z(64, gen.d, seed=7))
    cfg = PredictorConfig(batch_size=16, steps=500, ch=4, mask_bank=50, lr=3e-3)
    sampler = MaskSampler(32, 32, ("RC",), 50, seed=0)
    _, hist = train_predictor(gen, disc, imgs.numpy(), sampler, cfg=cfg)
    blocks = np.array([h["loss"] for h in hist]).reshape(5, 100).mean(1)
    assert np.all(np.diff(blocks) < 0), blocks


@pytest.mark.exact
def test_training_deterministic(gan, toy):
    cfg = PredictorConfig(batch_size=4, steps=5, ch=4, mask_bank=10)
    a = train_predictor(gan[0], gan[1], toy[0][:, None], cfg=cfg)
    b = train_predictor(gan[0], gan[1], toy[0][:, None], cfg=cfg)
    assert a[1] == b[1]


@pytest.mark.persistence
def test_roundtrip_and_hash_pin(predictor, gan, cgan, toy, tmp_path):
    path = tmp_path / "p.ckpt"
    save_predictor(path, predictor, gan[0], gan[1])
    pred2, manifest = load_predictor(path, gan[0], gan[1])
    assert manifest["gan_hash"] == gan_hash(gan[0], gan[1])
    mask = gen_center_mask(32, 32, 0.5, 0.7, seed=3)
    a, _ = inpaint(predictor, gan[0], toy[0][4], mask)
    b, _ = inpaint(pred2, gan[0], toy[0][4], mask)
    assert torch.equal(a, b)
    with pytest.raises(CheckpointError):
        load_predictor(path, cgan[0], cgan[1])


@pytest.mark.exact
def test_predicted_latents_beat_random_draws(trained_pred, gan300):
    """Paired held-out comparison: predicted z scores better than a fresh U[-1,1] draw."""
    from helpers import toy_images
    from priorinpaint.gan import sample_z
    from priorinpaint.masking import default_spec, generate_mask
    from priorinpaint.predictor import frame_losses
    imgs = torch.as_tensor(toy_images(200, seed=99)[0][:, None])
    masks = torch.as_tensor(np.stack([generate_mask(default_spec("RC", 500 + i), 32, 32)
                                      for i in range(200)])[:, None], dtype=torch.float32)
    gen, disc = gan300
    with torch.no_grad():
        z_pred = predict_z(trained_pred[0], apply_mask(imgs, masks), masks)
        pred_loss, _ = frame_losses(gen, disc, imgs, masks, z_pred)
        rand_loss, _ = frame_losses(gen, disc, imgs, masks, sample_z(200, gen.d, seed=1))
    assert pred_loss.mean() < rand_loss.mean()
