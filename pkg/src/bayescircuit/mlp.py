"""The prediction network: a three-layer perceptron with logistic hidden
units and exponential output units, trained by one-step backpropagation and
Adam. The exponential output keeps predicted rates strictly positive."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# pre-activation bound on the output layer; exp(30) rates signal saturation
OUTPUT_CLAMP_HIGH = 30.0
OUTPUT_CLAMP_LOW = -300.0


@dataclass(frozen=True)
class MlpParams:
    w_h: np.ndarray  # (d_h, d_z)
    b_h: np.ndarray  # (d_h,)
    w_o: np.ndarray  # (d_y, d_h)
    b_o: np.ndarray  # (d_y,)

    def map(self, fn) -> "MlpParams":
        return MlpParams(fn(self.w_h), fn(self.b_h), fn(self.w_o), fn(self.b_o))

    def zip_map(self, other: "MlpParams", fn) -> "MlpParams":
        return MlpParams(
            fn(self.w_h, other.w_h),
            fn(self.b_h, other.b_h),
            fn(self.w_o, other.w_o),
            fn(self.b_o, other.b_o),
        )

    @property
    def finite(self) -> bool:
        return all(
            np.all(np.isfinite(a)) for a in (self.w_h, self.b_h, self.w_o, self.b_o)
        )


@dataclass(frozen=True)
class AdamState:
    m: MlpParams
    v: MlpParams
    t: int = 0


HIDDEN_INIT_GAIN = 8.0


def init(d_z: int, d_h: int, d_y: int, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights with a zero hidden bias; the output bias
    cancels the initial hidden drive so a fresh network maps the zero input
    to the all-ones rate vector, a near-flat prediction.

    The hidden layer is drawn at a gain above the unit-variance Glorot
    bound. The circuit's rate inputs vary over a range much narrower than
    unit variance, and at unit gain every sigmoid stays in its linear region
    across the whole input manifold, leaving the network an exponential-
    affine map that cannot express the belief-to-prediction recursions.
    The larger gain spreads the hidden thresholds across the input range so
    the initial random features are diverse and genuinely nonlinear."""
    if min(d_z, d_h, d_y) < 1:
        raise ValueError("layer sizes must be positive")

    def glorot(fan_out, fan_in, gain=1.0):
        bound = gain * np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    w_h = glorot(d_h, d_z, gain=HIDDEN_INIT_GAIN)
    w_o = glorot(d_y, d_h)
    b_o = -w_o @ np.full(d_h, 0.5)
    return MlpParams(w_h, np.zeros(d_h), w_o, b_o)


def init_adam(p: MlpParams) -> AdamState:
    zeros = p.map(np.zeros_like)
    return AdamState(zeros, zeros.map(np.copy), 0)


def forward(p: MlpParams, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predicted rates y = exp(W_o . sigmoid(W_h . z + b_h) + b_o) and the
    hidden activations (kept for tuning-curve estimation)."""
    z = np.asarray(z, dtype=float)
    hidden = 1.0 / (1.0 + np.exp(-(p.w_h @ z + p.b_h)))
    pre = np.clip(p.w_o @ hidden + p.b_o, OUTPUT_CLAMP_LOW, OUTPUT_CLAMP_HIGH)
    return np.exp(pre), hidden


def saturated(y: np.ndarray) -> bool:
    """Whether any output rate sits at the clamp."""
    return bool(np.any(y >= np.exp(OUTPUT_CLAMP_HIGH) * (1 - 1e-12)))


def backward(p: MlpParams, z: np.ndarray, delta_y: np.ndarray) -> MlpParams:
    """Gradient of delta_y . forward(p, z) with respect to the parameters,
    treating z as a constant (the one-step approximation)."""
    z = np.asarray(z, dtype=float)
    delta_y = np.asarray(delta_y, dtype=float)
    if delta_y.shape != (p.w_o.shape[0],):
        raise ValueError("delta_y length does not match the output layer")
    hidden = 1.0 / (1.0 + np.exp(-(p.w_h @ z + p.b_h)))
    pre = p.w_o @ hidden + p.b_o
    active = (pre > OUTPUT_CLAMP_LOW) & (pre < OUTPUT_CLAMP_HIGH)
    d_pre = delta_y * np.exp(np.clip(pre, OUTPUT_CLAMP_LOW, OUTPUT_CLAMP_HIGH)) * active
    d_hidden = p.w_o.T @ d_pre
    d_pre_h = d_hidden * hidden * (1.0 - hidden)
    return MlpParams(
        np.outer(d_pre_h, z), d_pre_h, np.outer(d_pre, hidden), d_pre
    )


def adam_update(
    p: MlpParams,
    s: AdamState,
    grad: MlpParams,
    alpha: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[MlpParams, AdamState]:
    """One Adam descent step along grad, with bias correction."""
    if alpha <= 0:
        raise ValueError("step size must be positive")
    t = s.t + 1
    m = s.m.zip_map(grad, lambda m, g: beta1 * m + (1 - beta1) * g)
    v = s.v.zip_map(grad, lambda v, g: beta2 * v + (1 - beta2) * g * g)
    c1 = 1 - beta1**t
    c2 = 1 - beta2**t
    direction = m.zip_map(v, lambda m, v: (m / c1) / (np.sqrt(v / c2) + eps))
    stepped = p.zip_map(direction, lambda p, d: p - alpha * d)
    return stepped, AdamState(m, v, t)


def learning_rate(epoch: int, alpha0: float = 5e-5, decay: float = 1.25) -> float:
    """Per-epoch Adam step size alpha0 * decay^-(epoch - 1), epochs 1-based."""
    return alpha0 * decay ** (-(epoch - 1))


def save_params(path, p: MlpParams):
    """Bit-exact checkpoint of the network parameters."""
    np.savez(path, w_h=p.w_h, b_h=p.b_h, w_o=p.w_o, b_o=p.b_o)


def load_params(path) -> MlpParams:
    with np.load(path) as data:
        return MlpParams(data["w_h"], data["b_h"], data["w_o"], data["b_o"])
