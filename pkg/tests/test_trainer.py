import numpy as np
import pytest

from motioncfm import trainer as trmod
from motioncfm.data.layout import ConditionVocab
from motioncfm.nn import checkpoint as ckmod
from motioncfm.nn import predictor
from motioncfm.nn.checkpoint import Checkpoint, CheckpointFormatError
from motioncfm.nn.predictor import PredictorConfig, forward, init_params
from motioncfm.trainer import (
    OptimizerState,
    TrainConfig,
    TrainingDivergedError,
    adamw_step,
    clip_by_global_norm,
    train,
    write_loss_curve,
)


def net(data, variant="frame_mlp", **kw):
    motions, _, vocab = data
    return PredictorConfig.desk(variant, motions[0].layout.feature_dim, vocab.n_conditions,
                                hidden_dim=16, layer_count=1, **kw)


def test_first_adamw_step_is_signed_unit_step():
    config = TrainConfig(learning_rate=0.1, weight_decay=0.0, epsilon=1e-30)
    params = np.array([1.0, -2.0, 3.0])
    grads = np.array([0.5, -4.0, 1e-3])
    adamw_step(params, grads, OptimizerState.zeros(3), config)
    np.testing.assert_allclose(params, [0.9, -1.9, 2.9], rtol=0, atol=1e-12)


def test_adamw_decay_is_decoupled():
    config = TrainConfig(learning_rate=0.1, weight_decay=0.5)
    params = np.array([2.0, -4.0])
    state = OptimizerState.zeros(2)
    for _ in range(3):
        adamw_step(params, np.zeros(2), state, config)
    # zero gradients leave the moments at zero, so only the decay acts
    np.testing.assert_allclose(params, np.array([2.0, -4.0]) * 0.95 ** 3, rtol=1e-14)
    assert state.step == 3


def test_adamw_second_step_by_hand():
    config = TrainConfig(learning_rate=0.01, weight_decay=0.0, epsilon=1e-30)
    params = np.array([0.0])
    state = OptimizerState.zeros(1)
    adamw_step(params, np.array([1.0]), state, config)
    adamw_step(params, np.array([3.0]), state, config)
    m_hat = (0.9 * 0.1 * 1.0 + 0.1 * 3.0) / (1 - 0.9 ** 2)
    v_hat = (0.999 * 0.001 * 1.0 + 0.001 * 9.0) / (1 - 0.999 ** 2)
    assert params[0] == pytest.approx(-0.01 - 0.01 * m_hat / np.sqrt(v_hat), rel=1e-12)


def test_adamw_rejects_bad_input():
    config = TrainConfig()
    with pytest.raises(ValueError):
        adamw_step(np.zeros(2), np.zeros(3), OptimizerState.zeros(2), config)
    with pytest.raises(ValueError):
        adamw_step(np.zeros(2), np.array([np.nan, 0.0]), OptimizerState.zeros(2), config)


def test_clip_by_global_norm():
    g = np.array([3.0, 4.0])
    assert clip_by_global_norm(g, 1.0) == 5.0
    np.testing.assert_allclose(g, [0.6, 0.8])
    g = np.array([0.3, 0.4])
    clip_by_global_norm(g, 1.0)
    np.testing.assert_array_equal(g, [0.3, 0.4])
    g = np.array([30.0, 40.0])
    clip_by_global_norm(g, None)
    np.testing.assert_array_equal(g, [30.0, 40.0])


@pytest.mark.parametrize("kwargs", [
    {"batch_size": 0}, {"steps": -1}, {"learning_rate": -1.0}, {"beta1": 1.0},
    {"condition_dropout_prob": 1.0}, {"grad_clip": 0.0}, {"objective": "noise"}, {"sigma_min": 1.0},
])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_zero_learning_rate_keeps_initialization(tiny_data):
    motions, ids, vocab = tiny_data
    config = TrainConfig(steps=5, batch_size=4, learning_rate=0.0, seed=3)
    result = train(motions, ids, vocab, net(tiny_data), config)
    init = init_params(net(tiny_data), np.random.default_rng(np.random.SeedSequence([3, 0])))
    assert result.checkpoint.params.flat.tobytes() == init.flat.tobytes()
    assert [s for s, _ in result.loss_curve] == list(range(5))


@pytest.mark.parametrize("variant", ["frame_mlp", "attention"])
def test_training_is_seed_deterministic(tiny_data, variant):
    motions, ids, vocab = tiny_data
    runs = [train(motions, ids, vocab, net(tiny_data, variant, head_count=2), TrainConfig(steps=4, batch_size=4, seed=s))
            for s in (1, 1, 2)]
    assert runs[0].checkpoint.params.flat.tobytes() == runs[1].checkpoint.params.flat.tobytes()
    assert runs[0].loss_curve == runs[1].loss_curve
    assert runs[0].checkpoint.params.flat.tobytes() != runs[2].checkpoint.params.flat.tobytes()


# the field loss keeps an irreducible noise term, so it cannot fall as far
@pytest.mark.parametrize("objective, ratio", [("target", 0.7), ("vector_field", 0.85)])
def test_loss_goes_down(tiny_data, objective, ratio):
    motions, ids, vocab = tiny_data
    config = TrainConfig(steps=300, batch_size=8, learning_rate=3e-3, objective=objective, seed=0)
    result = train(motions, ids, vocab, net(tiny_data), config)
    first, last = result.smoothed(window=30)
    assert last < ratio * first


def test_log_every_thins_curve(tiny_data):
    motions, ids, vocab = tiny_data
    result = train(motions, ids, vocab, net(tiny_data), TrainConfig(steps=7, batch_size=2, log_every=3))
    assert [s for s, _ in result.loss_curve] == [0, 3, 6]


def test_checkpoint_round_trip(tiny_data, tmp_path):
    motions, ids, vocab = tiny_data
    ck = train(motions, ids, vocab, net(tiny_data), TrainConfig(steps=3, batch_size=4)).checkpoint
    path = tmp_path / "model.fmck"
    ck.save(path)
    back = Checkpoint.load(path)
    assert back.params.flat.tobytes() == ck.params.flat.tobytes()
    assert back.norm.mean.tobytes() == ck.norm.mean.tobytes()
    assert back.vocab == ck.vocab and back.layout == ck.layout and back.cfm == ck.cfm
    assert back.meta["train"]["steps"] == 3
    x = np.random.default_rng(0).standard_normal((2, 9, ck.layout.feature_dim))
    a = forward(ck.params, x, [0.2, 0.8], [0, vocab.null_id])
    b = back.predict_clean(x, [0.2, 0.8], [0, vocab.null_id])
    assert a.tobytes() == b.tobytes()
    # a save of the loaded model is byte-identical
    back.save(tmp_path / "again.fmck")
    assert (tmp_path / "again.fmck").read_bytes() == path.read_bytes()


def test_checkpoint_corruption(tiny_data, tmp_path):
    motions, ids, vocab = tiny_data
    ck = train(motions, ids, vocab, net(tiny_data), TrainConfig(steps=1, batch_size=2)).checkpoint
    path = tmp_path / "model.fmck"
    ck.save(path)
    raw = path.read_bytes()
    (tmp_path / "magic.fmck").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.fmck").write_bytes(raw[:-20])
    (tmp_path / "version.fmck").write_bytes(raw[:4] + (99).to_bytes(4, "little") + raw[8:])
    for name in ("magic", "short", "version"):
        with pytest.raises(CheckpointFormatError):
            ckmod.load_checkpoint(tmp_path / f"{name}.fmck")


def test_divergence_keeps_last_good(tiny_data, monkeypatch):
    motions, ids, vocab = tiny_data
    real = trmod.loss_and_grad
    calls = []

    def flaky(params, batch, cfm):
        calls.append(params.flat.copy())
        if len(calls) == 4:
            raise predictor.DivergenceError("loss is not finite")
        return real(params, batch, cfm)

    monkeypatch.setattr(trmod, "loss_and_grad", flaky)
    with pytest.raises(TrainingDivergedError) as info:
        train(motions, ids, vocab, net(tiny_data), TrainConfig(steps=10, batch_size=2))
    err = info.value
    assert err.step == 3 and len(err.loss_curve) == 3
    # the saved weights are the ones the failing step started from
    assert err.checkpoint.params.flat.tobytes() == calls[3].tobytes()


def test_train_input_errors(tiny_data):
    motions, ids, vocab = tiny_data
    with pytest.raises(ValueError):
        train([], [], vocab, net(tiny_data), TrainConfig(steps=1))
    with pytest.raises(ValueError):
        train(motions, ids, ConditionVocab(["a", "b"]), net(tiny_data), TrainConfig(steps=1))
    bad = list(ids)
    bad[0] = vocab.null_id
    with pytest.raises(ValueError):
        train(motions, bad, vocab, net(tiny_data), TrainConfig(steps=1))


def test_write_loss_curve(tmp_path):
    path = tmp_path / "loss.csv"
    write_loss_curve([(0, 1.5), (1, 0.25)], path)
    assert path.read_text().splitlines() == ["step,loss", "0,1.5", "1,0.25"]


def test_scalar_adamw_example():
    config = TrainConfig(learning_rate=0.1, weight_decay=0.0, epsilon=1e-8)
    params = np.array([1.0])
    adamw_step(params, np.array([1.0]), OptimizerState.zeros(1), config)
    assert params[0] == pytest.approx(0.9, abs=1e-8)


def test_zero_gradient_zero_decay_is_identity():
    params = np.array([0.3, -1.2])
    adamw_step(params, np.zeros(2), OptimizerState.zeros(2), TrainConfig(weight_decay=0.0))
    assert params.tolist() == [0.3, -1.2]


def test_full_dropout_ignores_labels(tiny_data):
    motions, ids, vocab = tiny_data
    # the largest probability below 1 drops every condition
    config = TrainConfig(steps=6, batch_size=4, condition_dropout_prob=float(np.nextafter(1.0, 0.0)))
    permuted = [(i + 1) % len(vocab) for i in ids]
    a = train(motions, ids, vocab, net(tiny_data), config)
    b = train(motions, permuted, vocab, net(tiny_data), config)
    assert a.checkpoint.params.flat.tobytes() == b.checkpoint.params.flat.tobytes()
    assert a.loss_curve == b.loss_curve


def test_round_trip_preserves_batch_loss(tiny_data, tmp_path):
    from motioncfm.cfm import make_training_batch
    from motioncfm.nn.predictor import FlowBatch, loss_and_grad

    motions, ids, vocab = tiny_data
    ck = train(motions, ids, vocab, net(tiny_data), TrainConfig(steps=3, batch_size=4)).checkpoint
    ck.save(tmp_path / "m.fmck")
    back = Checkpoint.load(tmp_path / "m.fmck")
    data = [((m.frames - ck.norm.mean) / ck.norm.std, c) for m, c in zip(motions, ids)]
    batch = FlowBatch.from_samples(make_training_batch(data, 5, np.random.default_rng(0)))
    assert loss_and_grad(ck.params, batch, ck.cfm)[0] == loss_and_grad(back.params, batch, back.cfm)[0]
