"""
Nesterov-momentum SGD and the per-epoch hyperparameter schedule.
"""

import numpy as np

# Parameter kinds shrunk by L2 weight decay; batch-norm gamma/beta are left alone.
DECAYED_KINDS = ("filter", "scale")


def init_velocity(params):
    return {key: np.zeros_like(value) for key, value in params.items()}


def sgd_step(params, grads, velocity, mu, eta, lam):
    """
    Applies one Nesterov-momentum update in place.

    With v' = mu * v - eta * g the weights move by -mu * v + (1 + mu) * v',
    and filters and pooling scales additionally shrink by eta * lam * w.

    Args:
        params (dict): Parameter arrays, updated in place.
        grads (dict): Gradients keyed like `params`.
        velocity (dict): Momentum buffers keyed like `params`, updated in place.
        mu (float): Momentum.
        eta (float): Learning rate.
        lam (float): L2 weight decay.
    """
    for key, weights in params.items():
        previous = velocity[key]
        current = mu * previous - eta * grads[key]
        update = -mu * previous + (1.0 + mu) * current
        if key[0] in DECAYED_KINDS:
            update = update - eta * lam * weights
        weights += update.astype(weights.dtype, copy=False)
        velocity[key] = current


def schedule_step(mu, eta, lam, config):
    """
    Advances momentum, learning rate and weight decay by one epoch.

    Returns:
        tuple: (mu', eta', lam') with mu' = mu_max - (mu_max - mu) * mu_delta,
        eta' = max(eta * eta_delta, eta_min) and lam' = max(lam * lambda_delta, lambda_min).
    """
    return (
        config.mu_max - (config.mu_max - mu) * config.mu_delta,
        max(eta * config.eta_delta, config.eta_min),
        max(lam * config.lambda_delta, config.lambda_min),
    )
