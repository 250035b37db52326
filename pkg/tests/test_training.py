import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from constrained_layout.geometry import BoundingBox
from constrained_layout.language import DesignSpec, ObjectDecl, TRUE
from constrained_layout.policy import InputCounters, PolicyParams, forward_backward
from constrained_layout.refinement import Token, decode
from constrained_layout.training import (
    CheckpointError, CheckpointVersionError, TrainConfig, dataset_loss, encode_example,
    load_checkpoint, load_training_state, make_batch, nll_loss, save_checkpoint, train,
)

L, R, S, START = Token.LEFT, Token.RIGHT, Token.STOP, Token.START


def spec_of(*types, domain=None):
    objs = tuple(ObjectDecl(i, t) for i, t in enumerate(types))
    return DesignSpec(objs, TRUE, domain) if domain else DesignSpec(objs, TRUE)


def test_encode_example_worked():
    spec = spec_of("chair", domain={"x": (0, 100), "y": (0, 1000), "w": (0, 1000), "h": (0, 1000)})
    seq = encode_example(spec, {0: BoundingBox(37, 500, 500, 500)})
    assert [(s.input, s.target) for s in seq[:3]] == [(START, L), (L, R), (R, S)]
    assert [(s.input, s.target) for s in seq[3:4]] == [(START, S)]
    assert [s.var.kind for s in seq] == ["x"] * 3 + ["y", "w", "h"]


def test_encode_empty_and_out_of_range():
    assert encode_example(spec_of(), {}) == []
    with pytest.raises(ValueError):
        encode_example(spec_of("chair"), {0: BoundingBox(1001, 0, 0, 0)})


def test_encode_decodes_back():
    rng = np.random.default_rng(0)
    spec = spec_of("chair", "oven", "sink")
    for _ in range(30):
        lay = {i: BoundingBox(*(int(v) for v in rng.integers(0, 1001, 4))) for i in range(3)}
        seq = encode_example(spec, lay, rng, shuffle=True)
        got = {}
        cur = []
        for s in seq:
            cur.append(s.target)
            if s.target == S:
                got[(s.var.obj, s.var.kind)] = decode(cur, (0, 1000))
                cur = []
        assert got == {(o, k): lay[o].get(k) for o in lay for k in "xywh"}


def test_nll_examples():
    assert abs(nll_loss([[1 / 3] * 3] * 4, [0, 1, 2, 0]) - math.log(3)) < 1e-12
    assert nll_loss([[1.0, 0, 0], [0, 1.0, 0]], [0, 1]) == 0.0
    got = nll_loss([[0.5, 0.25, 0.25], [0.5, 0.25, 0.25]], [0, 1])
    assert abs(got - 1.0397207708399179) < 1e-12
    with pytest.raises(FloatingPointError, match="step 1"):
        nll_loss([[0.5, 0.5, 0], [0.5, 0.5, 0.0]], [0, 2])


def _tiny_dataset(n=6, seed=0):
    rng = np.random.default_rng(seed)
    spec = spec_of("chair", "oven")
    return [(spec, {i: BoundingBox(*(int(v) for v in rng.integers(0, 1001, 4))) for i in range(2)})
            for _ in range(n)]


def _params(H=8, seed=0):
    return PolicyParams.init(("chair", "oven"), H, np.random.default_rng(seed))


def test_batch_gradient_is_mean_of_example_gradients():
    data = _tiny_dataset(2)
    p = _params()
    enc = [(s, encode_example(s, l)) for s, l in data]
    _, g = forward_backward(p, make_batch(p, enc))
    _, g0 = forward_backward(p, make_batch(p, enc[:1]))
    _, g1 = forward_backward(p, make_batch(p, enc[1:]))
    for k in g:
        np.testing.assert_allclose(g[k], (g0[k] + g1[k]) / 2, rtol=1e-9, atol=1e-13)


def test_teacher_forcing_counters():
    data = _tiny_dataset(4)
    p = _params()
    enc = [(s, encode_example(s, l)) for s, l in data]
    batch = make_batch(p, enc)
    full = InputCounters()
    forward_backward(p, batch, 1.0, None, full)
    assert full.sampled == 0 and full.teacher > 0
    free = InputCounters()
    forward_backward(p, batch, 0.0, np.random.default_rng(0), free)
    assert free.teacher == 0 and free.sampled == full.teacher
    half = InputCounters()
    forward_backward(p, batch, 0.5, np.random.default_rng(0), half)
    assert half.teacher + half.sampled == full.teacher
    assert 0 < half.sampled < full.teacher


def test_free_running_needs_rng():
    p = _params()
    s, l = _tiny_dataset(1)[0]
    with pytest.raises(ValueError):
        forward_backward(p, make_batch(p, [(s, encode_example(s, l))]), 0.5, None)


def test_overfit_single_example():
    data = _tiny_dataset(1)
    cfg = TrainConfig(lr=1e-2, batch=1, epochs=200, teacher_forcing_p=1.0, seed=0,
                      shuffle_objects=False)
    res = train(data, _params(16), cfg)
    assert res.losses[-1] < 0.05
    assert res.losses[-1] < res.losses[0]


def test_training_is_deterministic():
    data = _tiny_dataset(16)
    cfg = TrainConfig(lr=1e-3, epochs=3, seed=5)
    a = train(data, _params(), cfg)
    b = train(data, _params(), cfg)
    assert a.losses == b.losses
    assert a.params == b.params
    assert a.loss_log() == b.loss_log()
    assert a.loss_log().splitlines()[0].startswith("1,")


def test_loss_decreases_with_default_config():
    data = _tiny_dataset(32)
    res = train(data, _params(), TrainConfig(lr=1e-3, epochs=4))
    assert res.losses[-1] < res.losses[0]


def test_callback_stops_early():
    res = train(_tiny_dataset(8), _params(), TrainConfig(epochs=10),
                callback=lambda ep, loss, p: ep == 2)
    assert res.epochs_done == 2 and len(res.losses) == 2


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        train([], _params())


def test_dataset_loss_at_zero_params_is_ln3():
    p = PolicyParams.init(("chair", "oven"), 4, zero=True)
    assert abs(dataset_loss(p, _tiny_dataset(5)) - math.log(3)) < 1e-12


# -- checkpoints ----------------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 9))
def test_checkpoint_round_trip(tmp_path_factory, seed, H):
    rng = np.random.default_rng(seed)
    p = PolicyParams.init(("chair", "sink"), H, rng)
    for k in p.arrays:
        p.arrays[k] = rng.normal(0, 10, p.arrays[k].shape) * rng.random()
    path = tmp_path_factory.mktemp("ck") / "p.json"
    save_checkpoint(p, path, epochs_done=3)
    assert load_checkpoint(path) == p


def test_resume_matches_uninterrupted(tmp_path):
    data = _tiny_dataset(16)
    cfg = TrainConfig(lr=1e-3, epochs=2, seed=1)
    first = train(data, _params(), cfg)
    save_checkpoint(first.params, tmp_path / "c.json", epochs_done=first.epochs_done,
                    optimizer=first.optimizer)
    params, done, opt = load_training_state(tmp_path / "c.json")
    assert done == 2 and opt.t == first.optimizer.t
    more = train(data, params, cfg, optimizer=opt, start_epoch=done)
    assert more.epochs_done == 4
    assert more.loss_log(done + 1).splitlines()[0].startswith("3,")


def test_checkpoint_errors(tmp_path):
    p = _params()
    path = tmp_path / "c.json"
    save_checkpoint(p, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(tmp_path / "v.json")
    text = path.read_text()
    (tmp_path / "t.json").write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "t.json")
    doc = json.loads(text)
    doc["arrays"]["head.w1"]["shape"] = [3, 3]
    (tmp_path / "s.json").write_text(json.dumps(doc))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "s.json")
