"""Quadratic tracking objectives with an H^1 control regularizer.

A discrete objective is

    J(z, l) = sum_terms w/2 |Mz z + Ml l - target|^2      (final node, or
                                                          right-endpoint
                                                          quadrature)
              + gamma/2 * sum_k |l_{k+1} - l_k|^2 / tau

which is the grid version of ``Psi_1 + Psi_2 + gamma/2 ||l'||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .homogenized import observation_maps

__all__ = ["TrackingTerm", "ObjectiveSpec", "regularizer_gradient"]


@dataclass(frozen=True, eq=False)
class TrackingTerm:
    weight: float
    Mz: np.ndarray
    Ml: np.ndarray
    target: np.ndarray
    running: bool = False

    def __post_init__(self):
        Mz = np.atleast_2d(np.asarray(self.Mz, dtype=float))
        Ml = np.atleast_2d(np.asarray(self.Ml, dtype=float))
        target = np.atleast_1d(np.asarray(self.target, dtype=float))
        if Mz.shape[0] != Ml.shape[0] or Mz.shape[0] != target.shape[-1]:
            raise ValueError("tracking maps and target have inconsistent row counts")
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ValueError("tracking weight must be finite and non-negative")
        object.__setattr__(self, "Mz", Mz)
        object.__setattr__(self, "Ml", Ml)
        object.__setattr__(self, "target", target)

    def _nodes(self, N):
        return np.arange(1, N + 1) if self.running else np.array([N])

    def _scale(self, tau):
        return self.weight * (tau if self.running else 1.0)

    def residuals(self, z, l):
        idx = self._nodes(z.grid.N)
        return z.values[idx] @ self.Mz.T + l.values[idx] @ self.Ml.T - self.target, idx


def regularizer_gradient(l, gamma):
    """Gradient of ``gamma/2 sum |l_{k+1} - l_k|^2 / tau`` w.r.t. the node values."""
    dl = np.diff(l.values, axis=0) / l.grid.tau
    g = np.zeros_like(l.values)
    g[1:] += gamma * dl
    g[:-1] -= gamma * dl
    return g


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    gamma: float
    terms: tuple = ()
    alpha: float = 0.0
    beta: float = 0.0
    u_d: np.ndarray | None = None
    sigma_d: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("control regularization weight gamma must be positive")
        object.__setattr__(self, "terms", tuple(self.terms))

    @classmethod
    def plasticity(cls, ops, data, alpha, beta, gamma, u_d=None, sigma_d=None):
        """End-time tracking of macro displacement and cell-averaged stress."""
        Uz, Ul, Sz, Sl = observation_maps(ops, data)
        u_d = np.zeros(Uz.shape[0]) if u_d is None else np.asarray(u_d, dtype=float)
        sigma_d = np.zeros(Sz.shape[0]) if sigma_d is None else np.asarray(sigma_d, dtype=float)
        terms = []
        if alpha:
            terms.append(TrackingTerm(alpha, Uz, Ul, u_d))
        if beta:
            terms.append(TrackingTerm(beta, Sz, Sl, sigma_d))
        return cls(gamma, tuple(terms), alpha, beta, u_d, sigma_d)

    @classmethod
    def state_tracking(cls, gamma, m, p, weight=0.0, target=None, running=False):
        """Track ``z`` itself, at the final node or along the whole path."""
        target = np.zeros(m) if target is None else np.asarray(target, dtype=float)
        terms = (TrackingTerm(weight, np.eye(m), np.zeros((m, p)), target, running),) if weight else ()
        return cls(gamma, terms)

    @property
    def depends_on_state(self):
        return any(t.weight and np.any(t.Mz) for t in self.terms)

    def tracking_value(self, z, l):
        total = 0.0
        for t in self.terms:
            res, _ = t.residuals(z, l)
            total += 0.5 * t._scale(z.grid.tau) * float(np.sum(res**2))
        return total

    def regularizer_value(self, l):
        return 0.5 * self.gamma * l.grid.tau * float(np.sum(l.derivative() ** 2))

    def value(self, z, l):
        return self.tracking_value(z, l) + self.regularizer_value(l)

    def grad_z(self, z, l):
        g = np.zeros_like(z.values)
        for t in self.terms:
            res, idx = t.residuals(z, l)
            g[idx] += t._scale(z.grid.tau) * res @ t.Mz
        return g

    def grad_l(self, z, l):
        g = regularizer_gradient(l, self.gamma)
        for t in self.terms:
            res, idx = t.residuals(z, l)
            g[idx] += t._scale(z.grid.tau) * res @ t.Ml
        return g

    def second_variation(self, eta, h):
        """``Psi''(z, l)(eta, h)^2 + Phi''(l) h^2`` (constant for quadratics)."""
        total = self.gamma * h.grid.tau * float(np.sum(h.derivative() ** 2))
        for t in self.terms:
            idx = t._nodes(h.grid.N)
            lin = eta.values[idx] @ t.Mz.T + h.values[idx] @ t.Ml.T
            total += t._scale(h.grid.tau) * float(np.sum(lin**2))
        return total
