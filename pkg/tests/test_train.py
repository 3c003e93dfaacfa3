import dataclasses

import numpy as np
import pytest

from spikefet import train as train_mod
from spikefet import tensor as T
from spikefet.config import load_config
from spikefet.data import gen_dataset
from spikefet.losses import LossWeights
from spikefet.model import SpikeFET, read_checkpoint
from spikefet.tracker import SpikeTracker, evaluate_tracker, run_sequence, static_boxes
from spikefet.train import DivergenceError, MomentumSGD, draw_batch, parse_log, train

from test_cli import CFG


@pytest.fixture(scope="module")
def setup():
    cfg = load_config(CFG)
    seqs = gen_dataset(cfg.data.spec, 2, 3)
    return cfg.train, seqs


def test_seeded_run_is_bit_exact(setup, tmp_path):
    cfg, seqs = setup
    _, a = train(cfg, seqs, tmp_path / "a")
    _, b = train(cfg, seqs, tmp_path / "b")
    assert a == b
    assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "b" / "checkpoint.bin").read_bytes()
    rows = parse_log(a)
    assert rows.shape == (cfg.steps, 10)
    # L_track column equals the weighted sum of the raw terms
    w = cfg.weights
    coef = np.array([1, w.lambda_iou, w.lambda_l1, 1, w.lambda_iou, w.lambda_l1, w.alpha, w.beta])
    np.testing.assert_allclose(rows[:, 1], rows[:, 2:] @ coef, rtol=1e-9)


def test_beta_zero_removes_sim(setup):
    cfg, seqs = setup
    cfg0 = dataclasses.replace(cfg, steps=2, weights=LossWeights(beta=0.0))
    _, lines = train(cfg0, seqs)
    assert np.all(parse_log(lines)[:, -1] == 0.0)


def test_divergence_keeps_last_good(setup, tmp_path, monkeypatch):
    cfg, seqs = setup
    real = train_mod.compute_losses
    calls = {"n": 0}

    def flaky(outputs, boxes, weights):
        calls["n"] += 1
        terms = real(outputs, boxes, weights)
        if calls["n"] == 3:
            terms["cls_F"] = terms["cls_F"] * np.nan
        return terms

    monkeypatch.setattr(train_mod, "compute_losses", flaky)
    with pytest.raises(DivergenceError):
        train(cfg, seqs, tmp_path)
    st, meta = read_checkpoint(tmp_path / "checkpoint.bin")
    assert meta["status"] == "diverged" and meta["step"] == "2"
    assert all(np.all(np.isfinite(v)) for v in st.values())
    assert len((tmp_path / "train.log").read_text().split("\n")) - 1 == 2


def test_momentum_sgd_update():
    p = T.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    opt = MomentumSGD([p], lr=0.1, momentum=0.9)
    p.grad = np.array([1.0, -1.0])
    opt.step()
    np.testing.assert_allclose(p.data, [0.9, 2.1])
    opt.step()
    np.testing.assert_allclose(p.data, [0.9 - 0.19, 2.1 + 0.19])


def test_clipping_bounds_update():
    p = T.Tensor(np.zeros(2), requires_grad=True)
    opt = MomentumSGD([p], lr=1.0, momentum=0.0, clip=1.0)
    p.grad = np.array([3.0, 4.0])
    opt.step()
    np.testing.assert_allclose(p.data, [-0.6, -0.8])


def test_draw_batch_templates_ordered(setup):
    cfg, seqs = setup
    frames, events, boxes = draw_batch(seqs, dataclasses.replace(cfg, batch=3), np.random.default_rng(0))
    assert frames[0].shape == (3, 1, 16, 16) and frames[2].shape == (3, 1, 32, 32)
    assert events[0].shape == (3, 6, 16, 16)
    assert boxes.shape == (3, 4) and np.all((boxes[:, 2:] > 0))


def test_tracker_runs_and_duplicates_template(setup):
    cfg, seqs = setup
    model = SpikeFET(cfg.model, seed=0).eval()
    tr = SpikeTracker(model)
    boxes, scores = run_sequence(tr, seqs[0])
    assert boxes.shape == (len(seqs[0]) - 1, 4) and np.all(np.isfinite(boxes))
    assert np.all(boxes[:, 2:] >= 4)
    a, p, outs = evaluate_tracker(tr, seqs)
    assert 0 <= a <= 1 and 0 <= p <= 1 and set(outs) == {s.name for s in seqs}
    assert static_boxes(seqs[0]).shape == boxes.shape
