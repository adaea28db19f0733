"""Poisson populations: tuning curves, spike generation, and the log-linear
encoding that makes decoding a matrix product.

A population of independent Poisson neurons with tuning curves f_i and gain
gamma fires n_i ~ Poisson(gamma * f_i(x)) per time-step. For the tuning-curve
geometries used here, the rates can be written exactly as
exp(s(x) . Theta[:, i] + bias_i), so the posterior over the stimulus given a
response n and prior code theta is simply theta + Theta . n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .families import Family, NaturalParams, sufficient_statistic


@dataclass(frozen=True)
class DiscreteTable:
    """Tuning curves over a finite stimulus set, given as a table of
    per-state, per-neuron rates (shape n_states x n_neurons)."""

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", table)
        if table.ndim != 2 or np.any(table <= 0):
            raise ValueError("rate table must be 2-d and strictly positive")

    @property
    def n_neurons(self) -> int:
        return self.table.shape[1]

    @property
    def family(self) -> Family:
        return Family.categorical(self.table.shape[0])


@dataclass(frozen=True)
class GaussianGrid:
    """Gaussian bumps exp(-(x - x0_i)^2 / (2 sigma^2)) on a 1-d stimulus."""

    preferred: np.ndarray
    variance: float

    def __post_init__(self):
        preferred = np.asarray(self.preferred, dtype=float)
        object.__setattr__(self, "preferred", preferred)
        if np.any(np.diff(preferred) <= 0):
            raise ValueError("preferred stimuli must be strictly increasing")
        if self.variance <= 0:
            raise ValueError("variance must be positive")

    @property
    def n_neurons(self) -> int:
        return len(self.preferred)

    @property
    def family(self) -> Family:
        return Family.gaussian()


@dataclass(frozen=True)
class VonMisesGrid:
    """Circular bumps exp(kappa * cos(q - q0_i)) on the angle."""

    preferred: np.ndarray
    concentration: float

    def __post_init__(self):
        preferred = np.asarray(self.preferred, dtype=float)
        object.__setattr__(self, "preferred", preferred)
        if self.concentration <= 0:
            raise ValueError("concentration must be positive")

    @property
    def n_neurons(self) -> int:
        return len(self.preferred)

    @property
    def family(self) -> Family:
        return Family.von_mises()

    @staticmethod
    def evenly_spaced(n: int, concentration: float) -> "VonMisesGrid":
        # endpoint-exclusive: the circle has no boundary
        return VonMisesGrid(-np.pi + 2 * np.pi * np.arange(n) / n, concentration)


@dataclass(frozen=True)
class Concatenation:
    """Independent angle and velocity populations over a 2-d stimulus
    (q, qdot); half the neurons respond to each component."""

    angle: VonMisesGrid
    velocity: GaussianGrid

    @property
    def n_neurons(self) -> int:
        return self.angle.n_neurons + self.velocity.n_neurons

    @property
    def family(self) -> Family:
        return Family.von_mises_gaussian()


TuningCurveSet = DiscreteTable | GaussianGrid | VonMisesGrid | Concatenation


def tuning_values(tuning: TuningCurveSet, x) -> np.ndarray:
    """Evaluate every tuning curve at the stimulus: (f_1(x), ..., f_d(x))."""
    if isinstance(tuning, DiscreteTable):
        i = int(x)
        if i != x or not (0 <= i < tuning.table.shape[0]):
            raise ValueError(f"state {x} outside the table")
        return tuning.table[i].copy()
    if isinstance(tuning, GaussianGrid):
        x = float(x)
        if not np.isfinite(x):
            raise ValueError("non-finite stimulus")
        d = x - tuning.preferred
        return np.exp(-d * d / (2.0 * tuning.variance))
    if isinstance(tuning, VonMisesGrid):
        q = float(x)
        if not np.isfinite(q):
            raise ValueError("non-finite angle")
        return np.exp(tuning.concentration * np.cos(q - tuning.preferred))
    q, qdot = x
    return np.concatenate(
        [tuning_values(tuning.angle, q), tuning_values(tuning.velocity, qdot)]
    )


def rates(tuning: TuningCurveSet, gain: float, x) -> np.ndarray:
    """Expected spike counts per time-step, gamma * f_i(x)."""
    if gain <= 0:
        raise ValueError("gain must be positive")
    return gain * tuning_values(tuning, x)


def sample_response(rate_vec: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Poisson spike counts at the given rates."""
    rate_vec = np.asarray(rate_vec, dtype=float)
    if np.any(rate_vec < 0):
        raise ValueError("rates must be nonnegative")
    return rng.poisson(rate_vec)


@dataclass(frozen=True)
class PopulationEncoding:
    """Log-linear form of a Poisson population: rate_i(x) =
    exp(s(x) . theta_matrix[:, i] + bias[i])."""

    theta_matrix: np.ndarray  # (statistic_dim, n_neurons)
    bias: np.ndarray  # (n_neurons,)
    gain: float
    family: Family

    @property
    def n_neurons(self) -> int:
        return self.theta_matrix.shape[1]

    def rate(self, x) -> np.ndarray:
        s = sufficient_statistic(self.family, x)
        return np.exp(s @ self.theta_matrix + self.bias)


def natural_encoding(tuning: TuningCurveSet, gain: float) -> PopulationEncoding:
    """Solve for the (Theta, bias) of the log-linear rate form."""
    if gain <= 0:
        raise ValueError("gain must be positive")
    log_gain = np.log(gain)
    if isinstance(tuning, DiscreteTable):
        # exact solve on the finite domain, with the reference state (the
        # last one) absorbed into the bias
        log_rates = np.log(gain * tuning.table)
        bias = log_rates[-1]
        theta = log_rates[:-1] - bias
        return PopulationEncoding(theta, bias, gain, tuning.family)
    if isinstance(tuning, GaussianGrid):
        x0, var = tuning.preferred, tuning.variance
        theta = np.vstack([x0 / var, np.full(tuning.n_neurons, -1.0 / (2.0 * var))])
        bias = log_gain - x0 * x0 / (2.0 * var)
        return PopulationEncoding(theta, bias, gain, tuning.family)
    if isinstance(tuning, VonMisesGrid):
        kappa, q0 = tuning.concentration, tuning.preferred
        theta = np.vstack([kappa * np.cos(q0), kappa * np.sin(q0)])
        bias = np.full(tuning.n_neurons, log_gain)
        return PopulationEncoding(theta, bias, gain, tuning.family)
    ang = natural_encoding(tuning.angle, gain)
    vel = natural_encoding(tuning.velocity, gain)
    theta = np.zeros((4, tuning.n_neurons))
    theta[:2, : ang.n_neurons] = ang.theta_matrix
    theta[2:, ang.n_neurons :] = vel.theta_matrix
    bias = np.concatenate([ang.bias, vel.bias])
    return PopulationEncoding(theta, bias, gain, tuning.family)


def response_posterior(
    enc: PopulationEncoding, prior: NaturalParams, n: np.ndarray
) -> NaturalParams:
    """Posterior natural parameters prior + Theta . n."""
    n = np.asarray(n)
    if prior.family != enc.family:
        raise ValueError("prior family does not match the encoding")
    if n.shape != (enc.n_neurons,):
        raise ValueError(f"response has shape {n.shape}, expected ({enc.n_neurons},)")
    if np.any(n < 0):
        raise ValueError("spike counts must be nonnegative")
    return NaturalParams(prior.family, prior.theta + enc.theta_matrix @ n)


def flat_prior(family: Family) -> NaturalParams:
    """The zero code: an improper flat prior."""
    return NaturalParams(family, np.zeros(family.dim))


def sum_constancy(tuning: TuningCurveSet, grid) -> tuple[float, float]:
    """Mean total tuning value over a stimulus grid, and the largest relative
    deviation from it. Near-zero deviation means the population prior is
    conjugate."""
    totals = np.array([tuning_values(tuning, x).sum() for x in grid])
    lam = float(totals.mean())
    return lam, float(np.max(np.abs(totals - lam)) / lam)


def colour_tuning(n_neurons: int = 10) -> DiscreteTable:
    """The three-state (r, g, b) table: geometric ramp for blue, the reversed
    ramp for red, and the uniform blue-average for green. The total rate is
    identical across all three states."""
    f_blue = np.exp(0.4 * np.arange(n_neurons) - 5.0)
    f_red = f_blue[::-1]
    f_green = np.full(n_neurons, f_blue.mean())
    return DiscreteTable(np.vstack([f_red, f_green, f_blue]))
