"""Stimulus processes and joint stimulus/response simulation.

Three stimulus models: a 3-state Markov chain over colours, a discretized
mean-reverting linear SDE, and a stochastic pendulum over (angle, angular
velocity) with noise injected only into the velocity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .populations import PopulationEncoding

STATE_RED, STATE_GREEN, STATE_BLUE = 0, 1, 2


@dataclass(frozen=True)
class MarkovChainSpec:
    """Row-stochastic transition matrix; rows index the source state."""

    transition: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=float)
        object.__setattr__(self, "transition", t)
        if t.shape != (3, 3) or np.any(t < 0) or np.any(t > 1):
            raise ValueError("transition must be a 3x3 matrix of probabilities")
        if np.max(np.abs(t.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1")


def colour_chain() -> MarkovChainSpec:
    """Sticky red and blue, transitory green; red and blue mostly reach each
    other through green."""
    return MarkovChainSpec(
        np.array(
            [
                [0.80, 0.15, 0.05],
                [0.25, 0.50, 0.25],
                [0.05, 0.15, 0.80],
            ]
        )
    )


@dataclass(frozen=True)
class LinearSdeSpec:
    """dX = a X dt + b dW, Euler-discretized with time-step h:
    X' ~ Normal(X + h a X, h b^2)."""

    a: float = -1.0
    b: float = 1.0
    h: float = 0.02

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("time-step must be positive")
        if not (0.0 < 1.0 + self.h * self.a <= 1.0):
            raise ValueError("1 + h*a must lie in (0, 1] for the mean-reverting regime")


@dataclass(frozen=True)
class PendulumSpec:
    """Damped pendulum with random torque: the velocity receives Gaussian
    noise of variance h^2 * vel_noise per step, the position none."""

    gravity: float = 9.81
    friction: float = 0.1
    vel_noise: float = 1.0
    h: float = 0.02

    def __post_init__(self):
        if self.gravity <= 0 or self.vel_noise <= 0 or self.h <= 0:
            raise ValueError("gravity, vel_noise, and h must be positive")
        if self.friction < 0:
            raise ValueError("friction must be nonnegative")


def wrap_angle(q: float) -> float:
    """Map an angle to the canonical branch [-pi, pi)."""
    return float((q + np.pi) % (2.0 * np.pi) - np.pi)


def step_markov(spec: MarkovChainSpec, x: int, rng: np.random.Generator) -> int:
    return int(rng.choice(3, p=spec.transition[x]))


def step_linear(spec: LinearSdeSpec, x: float, rng: np.random.Generator) -> float:
    mean = x + spec.h * spec.a * x
    return float(rng.normal(mean, np.sqrt(spec.h) * abs(spec.b)))


def pendulum_drift(spec: PendulumSpec, q: float, qdot: float) -> tuple[float, float]:
    return qdot, -spec.gravity * np.sin(q) - spec.friction * qdot


def step_pendulum(
    spec: PendulumSpec, state: tuple[float, float], rng: np.random.Generator
) -> tuple[float, float]:
    q, qdot = state
    dq, dqdot = pendulum_drift(spec, q, qdot)
    noise = rng.normal(0.0, spec.h * np.sqrt(spec.vel_noise))
    return wrap_angle(q + spec.h * dq), qdot + spec.h * dqdot + noise


@dataclass
class Trajectory:
    stimuli: list
    responses: list[np.ndarray]

    def __post_init__(self):
        if len(self.stimuli) != len(self.responses):
            raise ValueError("stimuli and responses must have the same length")


def simulate(
    stepper,
    spec,
    enc: PopulationEncoding,
    x0,
    steps: int,
    rng: np.random.Generator,
) -> Trajectory:
    """Alternate one stimulus step and one Poisson response; the response at
    index k depends only on the stimulus at index k."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    stimuli = []
    responses = []
    x = x0
    for _ in range(steps):
        x = stepper(spec, x, rng)
        stimuli.append(x)
        responses.append(rng.poisson(enc.rate(x)))
    return Trajectory(stimuli, responses)
