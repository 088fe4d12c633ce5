from types import SimpleNamespace

import numpy as np
import pytest

from motioncfm.data.layout import PoseLayout
from motioncfm.data.normalize import NormStats
from motioncfm.sampler import (
    SampleConfig,
    SamplingError,
    euler_integrate,
    euler_sample,
    generate_batch,
    guided_predict,
    sample_noise,
)

NULL = 3


def constant(target):
    return lambda xt, t, cond: np.broadcast_to(target, xt.shape).copy()


def label_model(xt, t, cond):
    # a smooth, condition-dependent clean estimate
    return np.tanh(xt) * 0.5 + cond[:, None, None] * 0.1 + t[:, None, None] ** 2


@pytest.mark.parametrize("steps", [1, 2, 10, 100])
def test_constant_target_lands_on_it(steps):
    rng = np.random.default_rng(steps)
    x1 = rng.standard_normal((2, 5, 3))
    x = euler_integrate(constant(x1), rng.standard_normal(x1.shape), [0, 1], NULL, steps, 1.0)
    np.testing.assert_allclose(x, x1, atol=1e-9, rtol=0)


def test_constant_target_with_sigma_min():
    # with sigma_min > 0 the path ends at x1 plus a sigma_min-sized noise residue
    rng = np.random.default_rng(0)
    x1 = rng.standard_normal((1, 4, 2))
    x = euler_integrate(constant(x1), rng.standard_normal(x1.shape), [0], NULL, 1000, 1.0, sigma_min=0.01)
    assert np.all(np.isfinite(x))
    assert np.max(np.abs(x - x1)) < 0.1


def test_single_step_by_hand():
    x0 = np.full((1, 2, 1), 2.0)
    x = euler_integrate(lambda xt, t, c: np.full_like(xt, 5.0), x0, [0], NULL, 1, 1.0, sigma_min=0.2)
    # x1 = x0 + (G - 0.8 x0) / 1
    np.testing.assert_allclose(x, 2.0 + (5.0 - 1.6))


def test_guidance_combination():
    rng = np.random.default_rng(1)
    xt = rng.standard_normal((3, 4, 2))
    t = np.array([0.1, 0.5, 0.9])
    cond = np.array([0, 1, 2])
    c = label_model(xt, t, cond)
    u = label_model(xt, t, np.full(3, NULL))
    np.testing.assert_allclose(guided_predict(label_model, xt, t, cond, NULL, 2.0), 2 * c - u, atol=1e-14)


@pytest.mark.parametrize("scale, branch", [(1.0, "cond"), (0.0, "null")])
def test_guidance_collapse_is_bitwise(scale, branch):
    calls = []

    def counting(xt, t, cond):
        calls.append(cond.copy())
        return label_model(xt, t, cond)

    for seed in range(20):
        rng = np.random.default_rng(seed)
        x0 = rng.standard_normal((2, 6, 3))
        cond = rng.integers(0, NULL, size=2)
        single = cond if branch == "cond" else np.full(2, NULL)
        ref = euler_integrate(lambda xt, t, c: label_model(xt, t, single), x0, cond, NULL, 7, 1.0)
        calls.clear()
        got = euler_integrate(counting, x0, cond, NULL, 7, scale)
        assert got.tobytes() == ref.tobytes()
        # the other branch is never evaluated
        assert len(calls) == 7 and all(np.array_equal(c, single) for c in calls)


def test_nonfinite_state_raises():
    def blowup(xt, t, cond):
        return np.full_like(xt, np.inf) if t[0] > 0.4 else xt

    with pytest.raises(SamplingError) as info:
        euler_integrate(blowup, np.zeros((1, 2, 2)), [0], NULL, 10, 1.0)
    assert info.value.step == 5


@pytest.mark.parametrize("kwargs", [{"steps": 0}, {"steps": 2.5}, {"guidance_scale": -1.0},
                                    {"sigma_min": 1.0}, {"frames": 1}])
def test_sample_config_validation(kwargs):
    with pytest.raises(ValueError):
        SampleConfig(**kwargs)


def fake_model(dim=23):
    layout = PoseLayout(2)
    assert layout.feature_dim == dim
    return SimpleNamespace(
        predict_clean=label_model, null_id=NULL, layout=layout, fps=20.0,
        norm=NormStats(np.full(dim, 1.0), np.full(dim, 2.0)),
    )


def test_noise_streams_are_per_sample():
    a = sample_noise(4, 0, (3, 2))
    assert np.array_equal(a, sample_noise(4, 0, (3, 2)))
    assert not np.array_equal(a, sample_noise(4, 1, (3, 2)))
    assert not np.array_equal(a, sample_noise(5, 0, (3, 2)))


def test_batch_does_not_depend_on_chunking():
    model = fake_model()
    config = SampleConfig(steps=5, guidance_scale=2.5, frames=6, seed=9)
    ids = [0, 1, 2, 0, 1]
    lengths = [6, 4, 6, 8, 4]
    whole = generate_batch(model, ids, config, lengths=lengths, chunk=64)
    pieces = generate_batch(model, ids, config, lengths=lengths, chunk=1)
    for a, b in zip(whole, pieces):
        np.testing.assert_allclose(a.frames, b.frames, rtol=0, atol=1e-12)
    assert [m.n_frames for m in whole] == lengths
    one = euler_sample(model, 1, config, index=3)
    assert one.n_frames == 6
    alone = generate_batch(model, [ids[3]], SampleConfig(steps=5, guidance_scale=2.5, frames=8, seed=9), index_offset=3)
    np.testing.assert_allclose(alone[0].frames, whole[3].frames, rtol=0, atol=1e-12)


def test_outputs_are_denormalized():
    model = fake_model()
    model.predict_clean = lambda xt, t, c: np.zeros_like(xt)
    out = generate_batch(model, [0], SampleConfig(steps=3, guidance_scale=1.0, frames=5))[0]
    # a zero clean estimate lands on zero in normalized space, i.e. the mean
    np.testing.assert_allclose(out.frames, 1.0, atol=1e-12)
    assert out.fps == 20.0


def test_batch_is_deterministic_and_seeded():
    model = fake_model()
    config = SampleConfig(steps=4, frames=5, seed=2)
    a = generate_batch(model, [0, 2], config)
    b = generate_batch(model, [0, 2], config)
    c = generate_batch(model, [0, 2], SampleConfig(steps=4, frames=5, seed=3))
    assert all(x.frames.tobytes() == y.frames.tobytes() for x, y in zip(a, b))
    assert not np.array_equal(a[0].frames, c[0].frames)


def test_length_mismatch():
    with pytest.raises(ValueError):
        generate_batch(fake_model(), [0, 1], SampleConfig(), lengths=[5])


def test_more_steps_converge():
    rng = np.random.default_rng(3)
    x0 = rng.standard_normal((2, 5, 3))
    finals = {m: euler_integrate(label_model, x0, [0, 1], NULL, m, 2.0) for m in (5, 50, 100, 1000)}
    errs = {m: np.abs(finals[m] - finals[1000]).max() for m in (5, 50, 100)}
    assert errs[100] < errs[50] < errs[5]


def test_single_step_returns_prediction_at_zero():
    rng = np.random.default_rng(4)
    x0 = rng.standard_normal((2, 5, 3))
    out = euler_integrate(label_model, x0, [0, 2], NULL, 1, 2.0)
    np.testing.assert_allclose(out, guided_predict(label_model, x0, 0.0, [0, 2], NULL, 2.0), rtol=0, atol=1e-12)


def test_step_doubling_gap_shrinks_on_trained_model(tiny_data):
    from motioncfm.nn.predictor import PredictorConfig
    from motioncfm.trainer import TrainConfig, train

    # sigma_min > 0 keeps the field bounded at t = 1, so Euler is first order;
    # at sigma_min = 0 the last step evaluates the predictor at t = 1 - 1/M
    motions, ids, vocab = tiny_data
    config = PredictorConfig.desk("frame_mlp", motions[0].layout.feature_dim, vocab.n_conditions,
                                  hidden_dim=32, layer_count=2)
    train_config = TrainConfig(steps=600, batch_size=8, learning_rate=1e-3, sigma_min=0.1)
    ck = train(motions, ids, vocab, config, train_config).checkpoint
    x0 = np.stack([sample_noise(0, i, (16, ck.layout.feature_dim)) for i in range(4)])
    cond = np.array([0, 1, 2, 3])

    def run(m):
        return euler_integrate(ck.predict_clean, x0, cond, ck.null_id, m, 1.0, ck.cfm.sigma_min)

    outs = {m: run(m) for m in (5, 10, 20, 25, 50, 100, 200)}
    gaps = [np.sqrt(np.mean((outs[m] - outs[2 * m]) ** 2)) for m in (5, 10, 25, 50, 100)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
