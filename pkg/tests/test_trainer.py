import csv

import pytest
import torch

from hrstyle.errors import CorruptCheckpoint, ValidationError
from hrstyle.losses import LossConfig
from hrstyle.network import GenerationNetworkSpec
from hrstyle.trainer import (
    LOSS_HISTORY_HEADER,
    TrainingConfig,
    load_checkpoint,
    run_transfer,
    write_loss_history,
)

SMALL_NET = GenerationNetworkSpec(base_channels=4, blocks_per_segment=1)
SHALLOW = LossConfig(content_layer="conv1_2", style_layers={"conv1_1": 1.0, "conv2_1": 1.0})


@pytest.fixture(scope="module")
def pair():
    gen = torch.Generator().manual_seed(0)
    return torch.rand(3, 16, 16, generator=gen), torch.rand(3, 20, 12, generator=gen)


def _run(pair, fx, steps=3, **kw):
    return run_transfer(pair[0], pair[1], SMALL_NET, SHALLOW, TrainingConfig(steps=steps, **kw), fx=fx)


def test_single_step_budget(pair, fx):
    run = _run(pair, fx, steps=1)
    assert len(run.loss_history) == 1
    assert run.loss_history[0].step == 1


def test_history_and_output(pair, fx):
    run = _run(pair, fx, steps=4)
    assert [r.step for r in run.loss_history] == [1, 2, 3, 4]
    for r in run.loss_history:
        assert min(r.total, r.content, r.style, r.tv) >= 0
        assert r.total == pytest.approx(r.content + r.style + r.tv, rel=1e-5)
        assert r.content == pytest.approx(SHALLOW.lambda_content * r.raw_content, rel=1e-6)
    img = run.final_image
    assert img.range == "unit" and img.size == (16, 16)
    assert 0.0 <= float(img.data.min()) and float(img.data.max()) <= 1.0
    assert run.config["training"]["steps"] == 4
    assert run.extractor_source == fx.source


def test_extractor_is_frozen(pair, fx):
    before = fx.fingerprint()
    _run(pair, fx, steps=2)
    assert fx.fingerprint() == before


def test_same_seed_same_history(pair, fx):
    a = _run(pair, fx, steps=3, seed=7)
    b = _run(pair, fx, steps=3, seed=7)
    assert a.totals == b.totals
    c = _run(pair, fx, steps=3, seed=8)
    assert c.totals != a.totals


def test_training_config_validation():
    for kw in ({"steps": 0}, {"learning_rate": 0}, {"log_every": 0}, {"checkpoint_every": 0}):
        with pytest.raises(ValidationError):
            TrainingConfig(**kw)


def test_checkpoint_resume_matches_uninterrupted(pair, fx, tmp_path):
    cfg = TrainingConfig(steps=6, checkpoint_every=3)
    ckpt = tmp_path / "run.pt"
    full = run_transfer(pair[0], pair[1], SMALL_NET, SHALLOW, cfg, fx=fx)
    part = run_transfer(pair[0], pair[1], SMALL_NET, SHALLOW, cfg, fx=fx, checkpoint_path=ckpt, stop_after=3)
    assert len(part.loss_history) == 3
    state = load_checkpoint(ckpt)
    assert state.step == 3 and len(state.history) == 3
    resumed = run_transfer(resume=ckpt, fx=fx)
    assert [r.step for r in resumed.loss_history] == list(range(1, 7))
    torch.testing.assert_close(
        torch.tensor(resumed.totals, dtype=torch.float64), torch.tensor(full.totals, dtype=torch.float64),
        rtol=1e-5, atol=0,
    )


def test_corrupt_checkpoint(tmp_path):
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(tmp_path / "none.pt")
    bad = tmp_path / "bad.pt"
    torch.save({"format": "something else"}, bad)
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(bad)


def test_loss_history_csv(pair, fx, tmp_path):
    run = _run(pair, fx, steps=2)
    path = write_loss_history(run.loss_history, tmp_path / "h.csv")
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == LOSS_HISTORY_HEADER == ("step", "total", "content", "style", "tv", "wall_ms")
    assert len(rows) == 3
    assert float(rows[1][1]) == run.loss_history[0].total  # repr round-trips exactly
    bare = write_loss_history(run.loss_history, tmp_path / "b.csv", timing=False)
    assert open(bare).readline().strip() == "step,total,content,style,tv"
