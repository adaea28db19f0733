"""Population-code wirings for the filtering circuit.

A wiring fixes the decoding matrices of the filtering and prediction
populations (Theta_Z, Theta_Y) together with the recoders A and B, chosen so
that Theta_N = Theta_Z . A and Theta_Y = Theta_Z . B. Under those two
constraints the posterior code is the linear combination z = A . n + B . y:
decoding z gives exactly Theta_N . n + Theta_Y . y, i.e. Bayes' rule happens
in rate space.

Two constructions are provided. The naive code reuses the observation
population's decoder (Theta_Z = Theta_N, A = I). The orthogonal code builds
Theta_Z from mutually orthogonal rows that are also orthogonal to the ones
vector, so adding a constant to every rate leaves the decoded beliefs
unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .families import Family, NaturalParams
from .populations import PopulationEncoding


@dataclass(frozen=True)
class CircuitWiring:
    theta_z: np.ndarray  # (statistic_dim, d_z)
    theta_y: np.ndarray  # (statistic_dim, d_y)
    a: np.ndarray  # (d_z, d_n)
    b: np.ndarray  # (d_z, d_y)
    family: Family

    @property
    def d_z(self) -> int:
        return self.theta_z.shape[1]


def build_naive(enc: PopulationEncoding) -> CircuitWiring:
    """Theta_Z = Theta_Y = Theta_N with identity recoders."""
    d = enc.n_neurons
    eye = np.eye(d)
    theta = enc.theta_matrix.copy()
    return CircuitWiring(theta, theta.copy(), eye, eye.copy(), enc.family)


def build_orthogonal(enc: PopulationEncoding) -> CircuitWiring:
    """Rows of Theta_Z from the discrete cosine basis (which excludes the
    constant vector), scaled to the row norms of Theta_N; A is the
    minimum-norm exact solution of Theta_Z . A = Theta_N."""
    d = enc.n_neurons
    s = enc.theta_matrix.shape[0]
    if d <= s + 1:
        raise ValueError("population too small for an orthogonal code")
    j = np.arange(d)
    basis = np.array([np.cos(np.pi * (m + 1) * (j + 0.5) / d) for m in range(s)])
    # Gram-Schmidt; the DCT rows are already orthogonal, this guards rounding
    for i in range(s):
        for k in range(i):
            basis[i] -= (basis[i] @ basis[k]) * basis[k]
        basis[i] /= np.linalg.norm(basis[i])
    row_scale = np.linalg.norm(enc.theta_matrix, axis=1)
    theta_z = basis * row_scale[:, None]
    gram = theta_z @ theta_z.T
    if np.linalg.matrix_rank(gram) < s:
        raise ValueError("orthogonal construction produced a rank-deficient decoder")
    a = theta_z.T @ np.linalg.solve(gram, enc.theta_matrix)
    return CircuitWiring(theta_z, theta_z.copy(), a, np.eye(d), enc.family)


def neural_bayes_update(w: CircuitWiring, n: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Posterior rates z = A . n + B . y."""
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    if n.shape != (w.a.shape[1],) or y.shape != (w.b.shape[1],):
        raise ValueError("rate vector shapes do not match the wiring")
    return w.a @ n + w.b @ y


def decode(theta: np.ndarray, r: np.ndarray, family: Family) -> NaturalParams:
    """Natural parameters Theta . r of the density encoded by rates r."""
    r = np.asarray(r, dtype=float)
    if r.shape != (theta.shape[1],):
        raise ValueError(f"rate vector has shape {r.shape}, expected ({theta.shape[1]},)")
    return NaturalParams(family, theta @ r)
