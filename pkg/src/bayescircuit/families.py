"""Exponential-family densities in natural and mean coordinates.

Supports the four families used by the circuit models: categorical (with
the last state pinned as the reference), 1-d Gaussian, von Mises, and the
von Mises x Gaussian product over (angle, angular velocity). Densities are
represented by their natural parameters; the coordinate transform to mean
parameters returns expected sufficient statistics. Von Mises expectations
and normalizers are computed by fixed-grid quadrature on the circle, so
they are deterministic and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

CATEGORICAL = "categorical"
GAUSSIAN = "gaussian"
VON_MISES = "von_mises"
VON_MISES_GAUSSIAN = "von_mises_gaussian"

# Fixed quadrature grid for circular expectations. Uniform spacing makes the
# trapezoid rule exact up to spectral accuracy for periodic integrands.
QUADRATURE_POINTS = 1024
_ANGLES = -np.pi + 2.0 * np.pi * np.arange(QUADRATURE_POINTS) / QUADRATURE_POINTS
_ANGLE_WEIGHT = 2.0 * np.pi / QUADRATURE_POINTS
_COS = np.cos(_ANGLES)
_SIN = np.sin(_ANGLES)

# Variance-type natural parameters are nudged below this bound when a proper
# density is required from a possibly improper code.
VARIANCE_PARAM_CEIL = -1e-3


class ImproperDensityError(ValueError):
    """Raised when an operation requires a normalizable density but the
    natural parameters do not define one."""


@dataclass(frozen=True)
class Family:
    """Descriptor of an exponential family: which kind, and (for the
    categorical family) how many states."""

    kind: str
    n_states: int = 0

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, GAUSSIAN, VON_MISES, VON_MISES_GAUSSIAN):
            raise ValueError(f"unknown family kind: {self.kind!r}")
        if self.kind == CATEGORICAL and self.n_states < 2:
            raise ValueError("categorical family needs at least 2 states")

    @property
    def dim(self) -> int:
        """Length of the sufficient statistic vector."""
        if self.kind == CATEGORICAL:
            return self.n_states - 1
        if self.kind == VON_MISES_GAUSSIAN:
            return 4
        return 2

    @staticmethod
    def categorical(n_states: int) -> "Family":
        return Family(CATEGORICAL, n_states)

    @staticmethod
    def gaussian() -> "Family":
        return Family(GAUSSIAN)

    @staticmethod
    def von_mises() -> "Family":
        return Family(VON_MISES)

    @staticmethod
    def von_mises_gaussian() -> "Family":
        return Family(VON_MISES_GAUSSIAN)


@dataclass(frozen=True)
class NaturalParams:
    """Natural parameters of an exponential-family density. The all-zero
    vector is a legal (improper, flat) code for the continuous families."""

    family: Family
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        if theta.shape != (self.family.dim,):
            raise ValueError(
                f"theta has shape {theta.shape}, expected ({self.family.dim},)"
            )


@dataclass(frozen=True)
class MeanParams:
    """Mean parameters: expected sufficient statistics E[s(X)]."""

    family: Family
    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "mu", mu)
        if mu.shape != (self.family.dim,):
            raise ValueError(f"mu has shape {mu.shape}, expected ({self.family.dim},)")


def _check_angle(q: float) -> float:
    q = float(q)
    if not np.isfinite(q) or not (-np.pi <= q < np.pi):
        raise ValueError(f"angle {q} outside [-pi, pi)")
    return q


def sufficient_statistic(family: Family, x) -> np.ndarray:
    """Sufficient statistic s(x) of the family, evaluated at a stimulus."""
    if family.kind == CATEGORICAL:
        i = int(x)
        if i != x or not (0 <= i < family.n_states):
            raise ValueError(f"categorical stimulus {x} outside [0, {family.n_states})")
        s = np.zeros(family.n_states - 1)
        if i < family.n_states - 1:
            s[i] = 1.0
        return s
    if family.kind == GAUSSIAN:
        x = float(x)
        if not np.isfinite(x):
            raise ValueError("non-finite stimulus")
        return np.array([x, x * x])
    if family.kind == VON_MISES:
        q = _check_angle(x)
        return np.array([np.cos(q), np.sin(q)])
    q, qdot = x
    q = _check_angle(q)
    qdot = float(qdot)
    if not np.isfinite(qdot):
        raise ValueError("non-finite velocity")
    return np.array([np.cos(q), np.sin(q), qdot, qdot * qdot])


def log_unnormalized_density(params: NaturalParams, x) -> float:
    """theta . s(x), the log density up to the normalizing constant
    (constant base measure)."""
    return float(params.theta @ sufficient_statistic(params.family, x))


def is_proper(params: NaturalParams) -> bool:
    """Whether the parameters define a normalizable density."""
    theta = params.theta
    if not np.all(np.isfinite(theta)):
        return False
    if params.family.kind == GAUSSIAN:
        return theta[1] < 0
    if params.family.kind == VON_MISES_GAUSSIAN:
        return theta[3] < 0
    return True


def ensure_proper(params: NaturalParams) -> NaturalParams:
    """Nudge variance-type parameters below zero so expectations are defined.

    Leaves proper parameters untouched; categorical and von Mises codes are
    always proper (a zero von Mises code is the uniform circle density).
    """
    if not np.all(np.isfinite(params.theta)):
        raise ValueError("non-finite natural parameters")
    if is_proper(params):
        return params
    theta = params.theta.copy()
    if params.family.kind == GAUSSIAN:
        theta[1] = VARIANCE_PARAM_CEIL
    elif params.family.kind == VON_MISES_GAUSSIAN:
        theta[3] = VARIANCE_PARAM_CEIL
    return NaturalParams(params.family, theta)


def _require_proper(params: NaturalParams):
    if not np.all(np.isfinite(params.theta)):
        raise ValueError("non-finite natural parameters")
    if not is_proper(params):
        raise ImproperDensityError(
            f"improper {params.family.kind} parameters: {params.theta}"
        )


def _categorical_probs(theta: np.ndarray) -> np.ndarray:
    logits = np.append(theta, 0.0)
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


def _circular_moments(theta_cos: float, theta_sin: float) -> tuple[float, float]:
    logw = theta_cos * _COS + theta_sin * _SIN
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return float(w @ _COS), float(w @ _SIN)


def to_mean(params: NaturalParams) -> MeanParams:
    """Coordinate transform from natural to mean parameters, tau(theta)."""
    _require_proper(params)
    fam = params.family
    theta = params.theta
    if fam.kind == CATEGORICAL:
        return MeanParams(fam, _categorical_probs(theta)[:-1])
    if fam.kind == GAUSSIAN:
        mean = -theta[0] / (2.0 * theta[1])
        second = mean * mean - 1.0 / (2.0 * theta[1])
        return MeanParams(fam, np.array([mean, second]))
    if fam.kind == VON_MISES:
        return MeanParams(fam, np.array(_circular_moments(theta[0], theta[1])))
    ec, es = _circular_moments(theta[0], theta[1])
    mean = -theta[2] / (2.0 * theta[3])
    second = mean * mean - 1.0 / (2.0 * theta[3])
    return MeanParams(fam, np.array([ec, es, mean, second]))


def to_natural(params: MeanParams) -> NaturalParams:
    """Inverse transform, implemented for the categorical and Gaussian
    families (used to verify round-trips)."""
    fam = params.family
    mu = params.mu
    if fam.kind == CATEGORICAL:
        p_ref = 1.0 - mu.sum()
        if p_ref <= 0 or np.any(mu <= 0):
            raise ValueError("mean probabilities must be strictly inside the simplex")
        return NaturalParams(fam, np.log(mu) - np.log(p_ref))
    if fam.kind == GAUSSIAN:
        var = mu[1] - mu[0] * mu[0]
        if var <= 0:
            raise ValueError("mean parameters violate variance positivity")
        return NaturalParams(fam, np.array([mu[0] / var, -1.0 / (2.0 * var)]))
    raise NotImplementedError(f"to_natural not available for {fam.kind}")


def log_partition(params: NaturalParams) -> float:
    """log integral of exp(theta . s(x)) over the stimulus space.

    Closed form for categorical and Gaussian; quadrature (approximate but
    deterministic) for the circular families.
    """
    _require_proper(params)
    fam = params.family
    theta = params.theta
    if fam.kind == CATEGORICAL:
        return float(logsumexp(np.append(theta, 0.0)))
    if fam.kind == GAUSSIAN:
        return _gaussian_log_partition(theta[0], theta[1])
    if fam.kind == VON_MISES:
        return _circular_log_partition(theta[0], theta[1])
    return _circular_log_partition(theta[0], theta[1]) + _gaussian_log_partition(
        theta[2], theta[3]
    )


def _gaussian_log_partition(t0: float, t1: float) -> float:
    return float(-t0 * t0 / (4.0 * t1) + 0.5 * np.log(np.pi / -t1))


def _circular_log_partition(tc: float, ts: float) -> float:
    return float(logsumexp(tc * _COS + ts * _SIN) + np.log(_ANGLE_WEIGHT))


def sample(params: NaturalParams, rng: np.random.Generator):
    """Draw one stimulus from the density (deterministic given rng state)."""
    _require_proper(params)
    fam = params.family
    theta = params.theta
    if fam.kind == CATEGORICAL:
        return int(rng.choice(fam.n_states, p=_categorical_probs(theta)))
    if fam.kind == GAUSSIAN:
        return float(_sample_gaussian(theta[0], theta[1], rng))
    if fam.kind == VON_MISES:
        return float(_sample_von_mises(theta[0], theta[1], rng))
    q = _sample_von_mises(theta[0], theta[1], rng)
    qdot = _sample_gaussian(theta[2], theta[3], rng)
    return (float(q), float(qdot))


def _sample_gaussian(t0: float, t1: float, rng: np.random.Generator) -> float:
    var = -1.0 / (2.0 * t1)
    return rng.normal(-t0 / (2.0 * t1), np.sqrt(var))


def _sample_von_mises(tc: float, ts: float, rng: np.random.Generator) -> float:
    kappa = float(np.hypot(tc, ts))
    mu = float(np.arctan2(ts, tc)) if kappa > 0 else 0.0
    q = rng.vonmises(mu, kappa)
    # numpy returns values in [-pi, pi]; fold the closed endpoint.
    if q >= np.pi:
        q -= 2.0 * np.pi
    return q
