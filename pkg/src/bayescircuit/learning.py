"""Learning signals for the prediction network.

Both signals estimate the gradient of the marginal negative log-likelihood
of a response given the encoded prediction, which takes the form of a
prediction error: (prediction expectation - posterior expectation) of the
stimulus sufficient statistics, pushed through the prediction population's
decoding matrix. Feeding the resulting delta to the network's backward pass
yields the parameter gradient to descend. The closed-form (EF) signal
evaluates both expectations as exponential-family mean parameters; the
contrastive-divergence (CD) signal replaces the prediction expectation with
the sufficient statistic of the final stimulus sample of a short Gibbs
chain started at the observed response.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .families import (
    CATEGORICAL,
    NaturalParams,
    ensure_proper,
    sample,
    sufficient_statistic,
    to_mean,
)
from .populations import PopulationEncoding
from .wiring import CircuitWiring, decode, neural_bayes_update


@dataclass(frozen=True)
class GradientSignal:
    """Prediction-error row vector to feed backward through the network,
    with the two mean-parameter vectors it was built from."""

    delta: np.ndarray  # (d_y,)
    posterior_mean: np.ndarray
    prediction_mean: np.ndarray


def ef_signal(
    enc: PopulationEncoding,
    wiring: CircuitWiring,
    n: np.ndarray,
    y: np.ndarray,
) -> GradientSignal:
    """Closed-form signal: (tau(theta_X) - tau(Theta_N.n + theta_X)) . Theta_Y.

    Feeding the returned delta to the network's backward pass yields the
    gradient of the marginal negative log-likelihood, so descending it
    trains the predictions toward the Bayes posterior. Improper intermediate
    codes are nudged proper before taking expectations.
    """
    n = np.asarray(n)
    prediction = ensure_proper(decode(wiring.theta_y, y, wiring.family))
    posterior = ensure_proper(
        NaturalParams(wiring.family, enc.theta_matrix @ n + prediction.theta)
    )
    post_mean = to_mean(posterior).mu
    pred_mean = to_mean(prediction).mu
    delta = (pred_mean - post_mean) @ wiring.theta_y
    return GradientSignal(delta, post_mean, pred_mean)


def cd_signal(
    enc: PopulationEncoding,
    wiring: CircuitWiring,
    n: np.ndarray,
    y: np.ndarray,
    steps: int,
    rng: np.random.Generator,
) -> GradientSignal:
    """Contrastive-divergence signal with a Gibbs chain of the given length,
    initialized at the observed response."""
    if steps < 1:
        raise ValueError("Gibbs chain needs at least one sweep")
    n = np.asarray(n)
    y = np.asarray(y, dtype=float)
    prediction = ensure_proper(decode(wiring.theta_y, y, wiring.family))
    n_chain = n
    x_chain = None
    for _ in range(steps):
        posterior = ensure_proper(
            decode(wiring.theta_z, neural_bayes_update(wiring, n_chain, y), wiring.family)
        )
        x_chain = sample(posterior, rng)
        n_chain = rng.poisson(enc.rate(x_chain))
    post_mean = to_mean(
        ensure_proper(NaturalParams(wiring.family, enc.theta_matrix @ n + prediction.theta))
    ).mu
    model_stat = sufficient_statistic(wiring.family, x_chain)
    delta = (model_stat - post_mean) @ wiring.theta_y
    return GradientSignal(delta, post_mean, model_stat)


def cd_signal_batch(
    enc: PopulationEncoding,
    wiring: CircuitWiring,
    n: np.ndarray,
    y: np.ndarray,
    steps: int,
    n_chains: int,
    rng: np.random.Generator,
) -> GradientSignal:
    """Average of many independent contrastive-divergence signals for one
    (response, prediction) pair, with the Gibbs chains run in lockstep.
    Categorical stimuli only; used to check the sampler against the
    closed-form signal."""
    if enc.family.kind != CATEGORICAL:
        raise NotImplementedError("batch chains are implemented for finite stimuli")
    if steps < 1 or n_chains < 1:
        raise ValueError("need at least one sweep and one chain")
    n = np.asarray(n)
    y = np.asarray(y, dtype=float)
    n_states = enc.family.n_states
    stats = np.array([sufficient_statistic(enc.family, s) for s in range(n_states)])
    rate_table = np.array([enc.rate(s) for s in range(n_states)])
    theta_x = wiring.theta_y @ y
    n_chain = np.broadcast_to(n, (n_chains, n.size)).copy()
    x_chain = None
    for _ in range(steps):
        z = n_chain @ wiring.a.T + y @ wiring.b.T
        logits = np.column_stack([z @ wiring.theta_z.T, np.zeros(n_chains)])
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        u = rng.random(n_chains)
        x_chain = (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1)
        n_chain = rng.poisson(rate_table[x_chain])
    post_mean = to_mean(
        ensure_proper(NaturalParams(wiring.family, enc.theta_matrix @ n + theta_x))
    ).mu
    model_stat = stats[x_chain].mean(axis=0)
    delta = (model_stat - post_mean) @ wiring.theta_y
    return GradientSignal(delta, post_mean, model_stat)


def nll_objective(
    enc: PopulationEncoding,
    y: np.ndarray,
    n: np.ndarray,
    wiring: CircuitWiring | None = None,
) -> float:
    """Exact marginal negative log-likelihood of a response given prediction
    rates, up to response-only constants. Categorical stimuli only (the
    marginalization is an explicit sum over states); used to verify the
    learning signals.

    Without a wiring, y is decoded with the observation population's own
    matrix (the naive code).
    """
    if enc.family.kind != CATEGORICAL:
        raise NotImplementedError("exact marginalization needs a finite stimulus space")
    theta_y = wiring.theta_y if wiring is not None else enc.theta_matrix
    theta_x = theta_y @ np.asarray(y, dtype=float)
    n = np.asarray(n)
    stats, total_rate = _categorical_tables(enc)
    log_joint = stats @ (enc.theta_matrix @ n + theta_x) - total_rate
    log_norm = stats @ theta_x
    return float(_logsumexp(log_norm) - _logsumexp(log_joint))


def _logsumexp(v: np.ndarray) -> float:
    m = v.max()
    return m + np.log(np.exp(v - m).sum())


# per-encoding tables reused across the many evaluations a finite-difference
# check performs; keyed by identity with the encoding pinned to stay valid
_CAT_TABLES: dict[int, tuple] = {}


def _categorical_tables(enc: PopulationEncoding) -> tuple[np.ndarray, np.ndarray]:
    cached = _CAT_TABLES.get(id(enc))
    if cached is not None and cached[0] is enc:
        return cached[1], cached[2]
    n_states = enc.family.n_states
    stats = np.array([sufficient_statistic(enc.family, s) for s in range(n_states)])
    total_rate = np.array([enc.rate(s).sum() for s in range(n_states)])
    _CAT_TABLES[id(enc)] = (enc, stats, total_rate)
    return stats, total_rate
