import numpy as np
import pytest
from gradcheck import gradient_check

from motioncfm.cfm import CfmConfig, make_training_batch
from motioncfm.nn.predictor import (
    DivergenceError,
    FlowBatch,
    PredictorConfig,
    PredictorParams,
    backward,
    count_params,
    embed_inputs,
    forward,
    init_params,
    loss_and_grad,
)

D, C = 95, 5


def make(variant, seed=0, **kw):
    config = PredictorConfig.desk(variant, D, C, **kw)
    params = init_params(config, np.random.default_rng(seed))
    params.flat += 0.05 * np.random.default_rng(seed + 1).standard_normal(len(params))
    return params


@pytest.fixture(params=["frame_mlp", "attention"])
def variant(request):
    return request.param


def test_frame_mlp_hand_count():
    # time MLP 2*(16*16+16), condition table 3*16, input 10*16+16,
    # one body layer 16*16+16, output 16*10+10
    config = PredictorConfig(feature_dim=10, n_conditions=3, variant="frame_mlp", hidden_dim=16, layer_count=1)
    assert count_params(config) == 544 + 48 + 176 + 272 + 170 == 1210


def test_attention_hand_count():
    config = PredictorConfig(feature_dim=10, n_conditions=3, variant="attention", hidden_dim=8,
                             layer_count=1, head_count=2, ff_dim=12, max_frames=20)
    time = 2 * (8 * 8 + 8)
    cond = 3 * 8
    inp = 10 * 8 + 8
    pos = 20 * 8
    attn = 4 * (8 * 8 + 8)
    norms = 2 * 2 * 8
    ff = 8 * 12 + 12 + 12 * 8 + 8
    out = 8 * 10 + 10
    assert count_params(config) == time + cond + inp + pos + attn + norms + ff + out


def test_count_matches_initialization(variant):
    config = PredictorConfig.desk(variant, D, C)
    assert count_params(config) == len(init_params(config, np.random.default_rng(0)).flat)


def test_count_grows_with_width(variant):
    small = PredictorConfig.desk(variant, D, C, hidden_dim=32)
    big = PredictorConfig.desk(variant, D, C, hidden_dim=64)
    assert count_params(big) > count_params(small)


def test_config_validation():
    with pytest.raises(ValueError):
        PredictorConfig(D, C, "attention", hidden_dim=30, head_count=4)
    with pytest.raises(ValueError):
        PredictorConfig(D, C, "rnn")
    with pytest.raises(ValueError):
        PredictorConfig(D, 1)


def test_flat_view_is_shared():
    params = make("frame_mlp")
    params["out.b"][0] = 123.0
    lo, _ = params.offsets["out.b"]
    assert params.flat[lo] == 123.0
    assert params.block_of(lo) == "out.b"
    with pytest.raises(ValueError):
        PredictorParams(params.config, np.zeros(3))


def test_embed_is_pure(variant):
    params = make(variant)
    x = np.random.default_rng(0).standard_normal((6, D))
    assert np.array_equal(embed_inputs(params, x, 0.3, 1), embed_inputs(params, x, 0.3, 1))


def test_embed_condition_only_changes_token_zero(variant):
    params = make(variant)
    x = np.random.default_rng(1).standard_normal((6, D))
    a = embed_inputs(params, x, 0.3, 2)
    b = embed_inputs(params, x, 0.3, C - 1)
    assert a.shape == (7, params.config.hidden_dim)
    assert np.array_equal(a[1:], b[1:])
    np.testing.assert_allclose(a[0] - b[0], params["cond.table"][2] - params["cond.table"][C - 1], atol=1e-12)


def test_embed_time_only_changes_token_zero(variant):
    params = make(variant)
    x = np.random.default_rng(2).standard_normal((6, D))
    a = embed_inputs(params, x, 0.0, 1)
    b = embed_inputs(params, x, 1.0, 1)
    assert np.array_equal(a[1:], b[1:])
    assert not np.allclose(a[0], b[0])


def test_too_many_frames(variant):
    params = make(variant, max_frames=8)
    with pytest.raises(ValueError):
        forward(params, np.zeros((9, D)), 0.5, 0)
    with pytest.raises(ValueError):
        embed_inputs(params, np.zeros((9, D)), 0.5, 0)


def test_bad_inputs(variant):
    params = make(variant)
    with pytest.raises(ValueError):
        forward(params, np.zeros((4, D + 1)), 0.5, 0)
    with pytest.raises(ValueError):
        forward(params, np.zeros((4, D)), 0.5, C)


def test_zero_body_outputs_bias(variant):
    params = make(variant)
    params.flat[:] = 0.0
    params["out.b"][:] = np.arange(D, dtype=float)
    out = forward(params, np.random.default_rng(3).standard_normal((5, D)), 0.7, 1)
    np.testing.assert_array_equal(out, np.tile(np.arange(D, dtype=float), (5, 1)))


def test_frame_mlp_frames_independent():
    params = make("frame_mlp")
    frame = np.random.default_rng(4).standard_normal((1, D))
    one = forward(params, frame, 0.4, 2)
    two = forward(params, np.repeat(frame, 2, axis=0), 0.4, 2)
    # BLAS may block a 1-row and a 2-row product differently, so compare to rounding
    np.testing.assert_allclose(two, np.repeat(one, 2, axis=0), rtol=0, atol=1e-12)


def test_attention_permutation_equivariance_without_positions():
    params = make("attention", positional_encoding=False)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((7, D))
    perm = rng.permutation(7)
    np.testing.assert_allclose(forward(params, x[perm], 0.2, 1), forward(params, x, 0.2, 1)[perm], atol=1e-12)


def test_attention_positions_break_equivariance():
    params = make("attention")
    rng = np.random.default_rng(6)
    x = rng.standard_normal((7, D))
    perm = np.roll(np.arange(7), 1)
    assert not np.allclose(forward(params, x[perm], 0.2, 1), forward(params, x, 0.2, 1)[perm])


def test_padded_frames_do_not_leak(variant):
    params = make(variant)
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 8, D))
    mask = np.array([[True] * 5 + [False] * 3])
    y = x.copy()
    y[0, 5:] = rng.standard_normal((3, D)) * 50
    a = forward(params, x, 0.5, 1, mask)
    b = forward(params, y, 0.5, 1, mask)
    np.testing.assert_allclose(a[0, :5], b[0, :5], atol=1e-12)


def test_forward_is_deterministic(variant):
    params = make(variant)
    x = np.random.default_rng(8).standard_normal((3, 6, D))
    a = forward(params, x, np.array([0.1, 0.5, 0.9]), np.array([0, 1, C - 1]))
    b = forward(params, x, np.array([0.1, 0.5, 0.9]), np.array([0, 1, C - 1]))
    assert a.shape == x.shape and np.all(np.isfinite(a))
    assert a.tobytes() == b.tobytes()


def _batch(seed, lengths=(4, 6, 3)):
    rng = np.random.default_rng(seed)
    data = [(rng.standard_normal((n, D)), i % C) for i, n in enumerate(lengths)]
    return make_training_batch(data, len(lengths), rng, indices=range(len(lengths)))


def test_exact_fit_gives_zero_output_bias_gradient(variant):
    params = make(variant)
    samples = _batch(9)
    batch = FlowBatch.from_samples(samples)
    pred = forward(params, batch.xt, batch.t, batch.condition_id, batch.mask)
    batch.x1 = np.where(batch.mask[..., None], pred, batch.x1)
    loss, grads = loss_and_grad(params, batch, CfmConfig())
    assert loss == 0.0
    assert np.all(grads["out.b"] == 0.0)


def test_duplicated_batch_same_gradient(variant):
    params = make(variant)
    samples = _batch(10)
    loss1, g1 = backward(params, params.config, samples, CfmConfig())
    loss2, g2 = backward(params, params.config, samples + samples, CfmConfig())
    assert loss2 == pytest.approx(loss1, rel=1e-12)
    np.testing.assert_allclose(g2, g1, rtol=1e-10, atol=1e-14)


def test_backward_is_deterministic(variant):
    params = make(variant)
    samples = _batch(11)
    _, g1 = backward(params, params.config, samples, CfmConfig(0.0, "vector_field"))
    _, g2 = backward(params, params.config, samples, CfmConfig(0.0, "vector_field"))
    assert g1.tobytes() == g2.tobytes()


def test_backward_rejects_other_config():
    params = make("frame_mlp")
    other = PredictorConfig.desk("frame_mlp", D, C, hidden_dim=64)
    with pytest.raises(ValueError):
        backward(params, other, _batch(12), CfmConfig())


def test_non_finite_loss_raises(variant):
    params = make(variant)
    params["out.b"][0] = np.inf
    with pytest.raises(DivergenceError):
        backward(params, params.config, _batch(13), CfmConfig())


@pytest.mark.parametrize("objective", ["target", "vector_field"])
def test_gradient_matches_finite_differences(variant, objective):
    worst, _, _ = gradient_check(variant, n_coords=60, seed=3, objective=objective)
    assert worst < 1e-4
