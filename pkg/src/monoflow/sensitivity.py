"""Derivatives of the discrete control-to-state map.

The forward scheme is ``z_{k+1} = z_k + tau A_s(R l_{k+1} - Q z_{k+1})``.
Everything here differentiates that map exactly (discretize, then
differentiate), so adjoint gradients agree with finite differences to
rounding level.  With ``D_k = A_s'(y_k)`` and ``M_k = I + tau D_k Q``:

* tangent:       ``M_{k+1} eta_{k+1} = eta_k + tau D_{k+1} R h_{k+1}``
* second order:  ``M_{k+1} xi_{k+1} = xi_k + tau A_s''(y_{k+1})[w1, w2]``
* adjoint:       ``M_k^T phi_k = phi_{k+1} - dJ/dz_k``, ``M_N^T phi_N = -dJ/dz_N``

and the reduced gradient is ``dJ/dl_k - tau R^T D_k^T phi_k`` for ``k >= 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularStep
from .evolution import Trajectory, integrate_smoothed

__all__ = [
    "LinearizedState",
    "AdjointState",
    "Linearization",
    "solve_linearized",
    "solve_second_order",
    "solve_adjoint",
    "reduced_gradient",
    "value_and_gradient",
    "HessianForm",
    "hessian_quadratic_form",
]


@dataclass
class LinearizedState:
    eta: Trajectory
    h: Trajectory


@dataclass
class AdjointState:
    phi: Trajectory

    @property
    def terminal(self):
        return self.phi.values[-1]


class Linearization:
    """Jacobians ``A_s'(y_k)`` along a forward trajectory, computed once."""

    def __init__(self, pd, p, l, z):
        self.pd, self.p, self.l, self.z = pd, p, l, z
        self.grid = l.grid
        self.y = pd.drive(l, z)
        self.D = np.array([pd.rule.smoothed_jacobian(yk, p) for yk in self.y])
        eye = np.eye(pd.m)
        self.M = eye + self.grid.tau * self.D @ pd.Q.matrix

    def _solve(self, A, b, k):
        try:
            return np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise SingularStep(f"I + tau A_s'(y) Q is singular at step {k}", k) from exc

    def tangent(self, h):
        tau = self.grid.tau
        Rh = h.values @ self.pd.R.matrix.T
        eta = np.zeros((self.grid.N + 1, self.pd.m))
        for k in range(self.grid.N):
            rhs = eta[k] + tau * self.D[k + 1] @ Rh[k + 1]
            eta[k + 1] = self._solve(self.M[k + 1], rhs, k + 1)
        return Trajectory(self.grid, eta)

    def drive_variation(self, h, eta):
        """``w = R h - Q eta`` node-wise."""
        return self.pd.drive(h, eta)

    def second_order(self, w1, w2):
        tau = self.grid.tau
        rule, p = self.pd.rule, self.p
        xi = np.zeros((self.grid.N + 1, self.pd.m))
        for k in range(self.grid.N):
            src = rule.smoothed_hvp(self.y[k + 1], w1[k + 1], w2[k + 1], p)
            xi[k + 1] = self._solve(self.M[k + 1], xi[k] + tau * src, k + 1)
        return Trajectory(self.grid, xi)

    def adjoint(self, gz):
        """Backward recursion for ``phi`` given ``dJ/dz_k`` as ``(N+1, m)``."""
        N = self.grid.N
        phi = np.zeros((N + 1, self.pd.m))
        phi[N] = self._solve(self.M[N].T, -gz[N], N)
        for k in range(N - 1, -1, -1):
            phi[k] = self._solve(self.M[k].T, phi[k + 1] - gz[k], k)
        return Trajectory(self.grid, phi)

    def adjoint_residuals(self, phi, gz):
        N = self.grid.N
        v = phi.values
        res = [np.linalg.norm(self.M[N].T @ v[N] + gz[N])]
        for k in range(N - 1, -1, -1):
            res.append(np.linalg.norm(self.M[k].T @ v[k] - v[k + 1] + gz[k]))
        return np.array(res)

    def control_pairing(self, phi):
        """Representer of ``h -> -<phi, A_s'(y) R h>`` on nodes ``k >= 1``."""
        tau = self.grid.tau
        g = np.zeros_like(self.l.values)
        g[1:] = -tau * np.einsum("kij,ki->kj", self.D[1:], phi.values[1:]) @ self.pd.R.matrix
        return g


def _forward(pd, p, l, z):
    return integrate_smoothed(pd, p, l) if z is None else z


def solve_linearized(pd, p, l, z, h):
    lin = Linearization(pd, p, l, _forward(pd, p, l, z))
    return LinearizedState(lin.tangent(h), h)


def solve_second_order(pd, p, l, z, h1, h2, eta1=None, eta2=None):
    lin = Linearization(pd, p, l, _forward(pd, p, l, z))
    eta1 = lin.tangent(h1) if eta1 is None else eta1
    eta2 = lin.tangent(h2) if eta2 is None else eta2
    return lin.second_order(lin.drive_variation(h1, eta1), lin.drive_variation(h2, eta2))


def solve_adjoint(pd, p, l, z, objective):
    lin = Linearization(pd, p, l, _forward(pd, p, l, z))
    return AdjointState(lin.adjoint(objective.grad_z(lin.z, l)))


def value_and_gradient(pd, p, l, objective):
    """Objective value, Euclidean gradient (node 0 zeroed) and the state."""
    z = integrate_smoothed(pd, p, l)
    lin = Linearization(pd, p, l, z)
    g = objective.grad_l(z, l)
    if objective.depends_on_state:
        phi = lin.adjoint(objective.grad_z(z, l))
        g = g + lin.control_pairing(phi)
    g[0] = 0.0
    return objective.value(z, l), Trajectory(l.grid, g), z


def reduced_gradient(pd, p, l, objective):
    return value_and_gradient(pd, p, l, objective)[1]


class HessianForm:
    """``h -> F''(l) h^2`` with the state and adjoint computed once.

    ``F''(l) h^2 = Psi''(eta, h)^2 + Phi'' h^2 - (phi, A_s''(y)[w, w])`` with
    ``eta`` the tangent in direction ``h`` and ``w = R h - Q eta``.
    """

    def __init__(self, pd, p, l, objective):
        self.pd, self.p, self.l, self.objective = pd, p, l, objective
        self.z = integrate_smoothed(pd, p, l)
        self.lin = Linearization(pd, p, l, self.z)
        self.phi = None
        if objective.depends_on_state:
            self.phi = self.lin.adjoint(objective.grad_z(self.z, l)).values

    def __call__(self, h):
        eta = self.lin.tangent(h)
        value = self.objective.second_variation(eta, h)
        if self.phi is not None:
            w = self.lin.drive_variation(h, eta)
            tau = self.l.grid.tau
            rule, y = self.pd.rule, self.lin.y
            for k in range(1, self.l.grid.N + 1):
                value -= tau * float(self.phi[k] @ rule.smoothed_hvp(y[k], w[k], w[k], self.p))
        return value


def hessian_quadratic_form(pd, p, l, objective, h):
    return HessianForm(pd, p, l, objective)(h)
