"""Central finite-difference check of the predictor gradient."""

import numpy as np

from motioncfm.cfm import CfmConfig, make_training_batch
from motioncfm.nn.predictor import (
    FlowBatch,
    PredictorConfig,
    init_params,
    loss_and_grad,
)

FD_STEP = 1e-4
GRAD_FLOOR = 1e-6


def relative_error(a, b, floor=GRAD_FLOOR):
    """``|a - b| / max(|a|, |b|, floor)``, elementwise."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(variant, n_coords=200, seed=0, objective="target", feature_dim=95, n_conditions=5):
    """Max relative error between analytic and central-difference gradients.

    The batch mixes sequence lengths (so masking is exercised), random
    times and every condition id including the empty one. Parameters are
    perturbed away from their initialization so no block sits at a
    special value.
    """
    rng = np.random.default_rng(seed)
    config = PredictorConfig.desk(variant, feature_dim, n_conditions)
    params = init_params(config, rng)
    params.flat += 0.05 * rng.standard_normal(len(params))
    data = [(rng.standard_normal((n, feature_dim)), c % n_conditions)
            for c, n in enumerate((5, 7, 3, 6))]
    batch = FlowBatch.from_samples(make_training_batch(data, 4, rng, indices=[0, 1, 2, 3]))
    cfm = CfmConfig(0.0, objective)
    _, grads = loss_and_grad(params, batch, cfm)
    coords = rng.choice(len(params), size=n_coords, replace=False)
    numeric = np.empty(n_coords)
    for k, i in enumerate(coords):
        saved = params.flat[i]
        params.flat[i] = saved + FD_STEP
        up, _ = loss_and_grad(params, batch, cfm)
        params.flat[i] = saved - FD_STEP
        down, _ = loss_and_grad(params, batch, cfm)
        params.flat[i] = saved
        numeric[k] = (up - down) / (2 * FD_STEP)
    err = relative_error(grads.flat[coords], numeric)
    return float(err.max()), coords, err
