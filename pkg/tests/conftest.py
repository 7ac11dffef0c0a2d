import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

import helpers  # noqa: E402
from helpers import toy_images  # noqa: E402
from priorinpaint.gan import GanConfig, train_cgan, train_gan  # noqa: E402
from priorinpaint.predictor import PredictorConfig, train_predictor  # noqa: E402
from priorinpaint.sequence import SeqConfig, train_sequence  # noqa: E402
from priorinpaint.synthetic import prior_maps, render_sequence  # noqa: E402

torch.set_num_threads(1)

SMALL_GAN = dict(d=16, g_ch=8, d_ch=4, batch_size=8, steps=50, seed=0, ema=0.0)


@pytest.fixture(scope="session")
def toy():
    imgs, kps = toy_images(8, seed=0)
    return imgs, kps, prior_maps(kps).astype(np.float32)


@pytest.fixture(scope="session")
def toy_seqs():
    samples = [render_sequence(6, 0.15, seed=s) for s in range(4)]
    frames = np.stack([np.stack(s.frames) for s in samples]).astype(np.float32)
    kps = np.stack([np.stack(s.keypoints) for s in samples])
    return frames, prior_maps(kps).astype(np.float32)


@pytest.fixture(scope="session")
def gan(toy):
    gen, disc, hist = train_gan(toy[0][:, None], GanConfig(**SMALL_GAN))
    return gen, disc, hist


@pytest.fixture(scope="session")
def sharp_gan(toy):
    """Untrained toy GAN with generator weights scaled 3x, so its output clearly depends on z.

    Short-trained toy GANs collapse to nearly one image, which leaves an
    inverter nothing to learn; smoke runs train on this generator's own samples.
    """
    gen, disc, _ = train_gan(toy[0][:, None], GanConfig(**{**SMALL_GAN, "steps": 0}))
    with torch.no_grad():
        for p in gen.parameters():
            p.mul_(3.0)
    return gen, disc


@pytest.fixture(scope="session")
def gan300(toy):
    """A toy GAN trained long enough for its output to depend on z."""
    gen, disc, _ = train_gan(toy[0][:, None], GanConfig(**{**SMALL_GAN, "steps": 300}))
    return gen, disc


@pytest.fixture(scope="session")
def cgan(toy):
    gen, disc, hist = train_cgan(toy[0][:, None], toy[2][:, None], GanConfig(**SMALL_GAN, conditional=True))
    return gen, disc, hist


@pytest.fixture(scope="session")
def predictor(gan, toy):
    cfg = PredictorConfig(batch_size=8, steps=30, ch=4, mask_bank=20)
    pred, _ = train_predictor(gan[0], gan[1], toy[0][:, None], cfg=cfg)
    return pred


@pytest.fixture(scope="session")
def cpredictor(cgan, toy):
    cfg = PredictorConfig(batch_size=8, steps=30, ch=4, mask_bank=20)
    pred, _ = train_predictor(cgan[0], cgan[1], toy[0][:, None], cfg=cfg, priors=toy[2][:, None])
    return pred


@pytest.fixture(scope="session")
def seqmodel(gan, toy_seqs):
    cfg = SeqConfig(batch_size=4, steps=20, ch=4, hidden=16, mask_bank=20)
    model, _ = train_sequence(gan[0], gan[1], toy_seqs[0], cfg=cfg)
    return model


@pytest.fixture(scope="session")
def cseqmodel(cgan, toy_seqs):
    cfg = SeqConfig(batch_size=4, steps=20, ch=4, hidden=16, mask_bank=20)
    model, _ = train_sequence(cgan[0], cgan[1], toy_seqs[0], cfg=cfg, seq_priors=toy_seqs[1])
    return model


SUITE_MARKERS = ("exact", "gradcheck", "audit", "degenerate", "maskstats", "persistence")


def _is_acceptance(item) -> bool:
    return item.path.name == "test_acceptance.py"


def pytest_collection_modifyitems(config, items):
    # acceptance runs last so it can read the outcomes of the marked unit tests
    items.sort(key=_is_acceptance)
    helpers.COLLECTED.clear()
    for item in items:
        if _is_acceptance(item):
            continue
        for m in SUITE_MARKERS:
            if item.get_closest_marker(m):
                helpers.COLLECTED.setdefault(m, set()).add(item.nodeid)


def pytest_runtest_logreport(report):
    if report.failed:
        helpers.OUTCOMES[report.nodeid] = False
    elif report.when == "call" and report.passed:
        helpers.OUTCOMES.setdefault(report.nodeid, True)
    elif report.skipped:
        helpers.OUTCOMES[report.nodeid] = False


def pytest_terminal_summary(terminalreporter):
    if helpers.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in helpers.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
