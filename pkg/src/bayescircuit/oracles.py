"""Reference Bayes filters in natural-parameter form.

Each filter is the recursion theta_{k+1} = Theta_N . n_{k+1} + h(theta_k),
where h maps belief parameters to prediction parameters. The map h is exact
for the finite-state chain (matrix-vector arithmetic) and the linear SDE
(conjugate Gaussian propagation), and approximate for the pendulum, where a
high-concentration von Mises block is treated as Gaussian so an extended
Kalman time-update can be applied.
"""

from __future__ import annotations

import numpy as np

from .dynamics import (
    LinearSdeSpec,
    MarkovChainSpec,
    PendulumSpec,
    pendulum_drift,
    wrap_angle,
)
from .families import VARIANCE_PARAM_CEIL, NaturalParams
from .populations import PopulationEncoding

# numeric floors guarding degenerate (nearly flat) beliefs early in a run
KAPPA_FLOOR = 1e-4
VARIANCE_FLOOR = 1e-6


def discrete_predict(spec: MarkovChainSpec, belief: NaturalParams) -> NaturalParams:
    """Push a categorical belief through the transition matrix."""
    theta = np.append(belief.theta, 0.0)
    theta -= theta.max()
    p = np.exp(theta)
    p /= p.sum()
    p_next = spec.transition.T @ p
    log_p = np.log(p_next)
    return NaturalParams(belief.family, log_p[:-1] - log_p[-1])


def kalman_predict(spec: LinearSdeSpec, belief: NaturalParams) -> NaturalParams:
    """Gaussian prediction: mu' = (1 + h a) mu, var' = (1 + h a)^2 var + h b^2."""
    t0, t1 = belief.theta
    if not t1 < 0:
        raise ValueError("belief must be a proper Gaussian")
    mu = -t0 / (2.0 * t1)
    var = -1.0 / (2.0 * t1)
    drift = 1.0 + spec.h * spec.a
    mu_next = drift * mu
    var_next = drift * drift * var + spec.h * spec.b**2
    return NaturalParams(
        belief.family, np.array([mu_next / var_next, -1.0 / (2.0 * var_next)])
    )


def split_von_mises_gaussian(theta: np.ndarray) -> tuple[float, float, float, float]:
    """(mean angle, concentration, mean velocity, velocity variance) from the
    product family's natural parameters, with numeric floors applied. An
    improper velocity block is read as maximally flat."""
    kappa = max(float(np.hypot(theta[0], theta[1])), KAPPA_FLOOR)
    mu_vm = float(np.arctan2(theta[1], theta[0]))
    t3 = min(float(theta[3]), VARIANCE_PARAM_CEIL)
    var = max(-1.0 / (2.0 * t3), VARIANCE_FLOOR)
    mu_n = float(theta[2] * var)
    return mu_vm, kappa, mu_n, var


def join_von_mises_gaussian(
    mu_vm: float, kappa: float, mu_n: float, var: float
) -> np.ndarray:
    return np.array(
        [
            kappa * np.cos(mu_vm),
            kappa * np.sin(mu_vm),
            mu_n / var,
            -1.0 / (2.0 * var),
        ]
    )


def ekf_pendulum_predict(spec: PendulumSpec, belief: NaturalParams) -> NaturalParams:
    """Approximate prediction for the von Mises x Gaussian belief.

    The von Mises block is converted to a Gaussian with variance 1/kappa
    (accurate at high concentration), the extended Kalman time-update is run
    on the bivariate Gaussian, and the result is converted back with
    kappa = 1 / predicted angle variance.
    """
    theta = belief.theta
    if not np.all(np.isfinite(theta)):
        raise ValueError("non-finite belief parameters")
    mu_vm, kappa, mu_n, var = split_von_mises_gaussian(theta)
    mean = np.array([mu_vm, mu_n])
    cov = np.diag([1.0 / kappa, var])

    dq, dqdot = pendulum_drift(spec, mean[0], mean[1])
    mean_next = np.array([wrap_angle(mean[0] + spec.h * dq), mean[1] + spec.h * dqdot])
    jac = np.array(
        [
            [0.0, 1.0],
            [-spec.gravity * np.cos(mean[0]), -spec.friction],
        ]
    )
    f = np.eye(2) + spec.h * jac
    noise = np.diag([0.0, spec.h**2 * spec.vel_noise])
    cov_next = f @ cov @ f.T + noise
    if cov_next[0, 0] <= 0 or cov_next[1, 1] <= 0:
        raise ValueError("non-positive predicted covariance")

    kappa_next = max(1.0 / cov_next[0, 0], KAPPA_FLOOR)
    var_next = max(cov_next[1, 1], VARIANCE_FLOOR)
    return NaturalParams(
        belief.family,
        join_von_mises_gaussian(mean_next[0], kappa_next, mean_next[1], var_next),
    )


def filter_step(
    enc: PopulationEncoding, predict, belief: NaturalParams, n: np.ndarray
) -> NaturalParams:
    """One prediction/update cycle: Theta_N . n + h(theta)."""
    prediction = predict(belief)
    n = np.asarray(n)
    if n.shape != (enc.n_neurons,):
        raise ValueError(f"response has shape {n.shape}, expected ({enc.n_neurons},)")
    return NaturalParams(belief.family, enc.theta_matrix @ n + prediction.theta)


def run_oracle(
    predict, enc: PopulationEncoding, responses, prior: NaturalParams
) -> list[NaturalParams]:
    """Belief parameters for every step of a response sequence, starting from
    theta_0 = Theta_N . n_0 + theta_prior."""
    if len(responses) == 0:
        raise ValueError("response sequence must be nonempty")
    beliefs = [
        NaturalParams(prior.family, enc.theta_matrix @ np.asarray(responses[0]) + prior.theta)
    ]
    for n in responses[1:]:
        beliefs.append(filter_step(enc, predict, beliefs[-1], n))
    return beliefs


def categorical_brute_force(
    spec: MarkovChainSpec,
    enc: PopulationEncoding,
    responses,
    prior_probs: np.ndarray,
) -> np.ndarray:
    """Exhaustive-path posterior over the final state given a response
    sequence; an independent check of the recursive filter."""
    n_states = spec.transition.shape[0]
    log_emission = np.array(
        [
            [
                float(np.sum(np.asarray(n) * np.log(enc.rate(s)) - enc.rate(s)))
                for s in range(n_states)
            ]
            for n in responses
        ]
    )
    total = np.zeros(n_states)
    for path in np.ndindex(*([n_states] * len(responses))):
        logp = np.log(prior_probs[path[0]]) + log_emission[0, path[0]]
        for k in range(1, len(path)):
            logp += np.log(spec.transition[path[k - 1], path[k]])
            logp += log_emission[k, path[k]]
        total[path[-1]] += np.exp(logp)
    return total / total.sum()
