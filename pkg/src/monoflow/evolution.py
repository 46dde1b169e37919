"""Forward solvers for ``z' in A(R l - Q z)``.

All schemes are implicit Euler on a uniform grid.  The smoothed and Yosida
integrators solve each step with a damped (semismooth) Newton method; the
reference integrator works on the transformed variable ``q = R l - Q z``
and solves one proximal subproblem per step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    IncompatibleInitialState,
    NewtonDiverged,
    SubproblemDiverged,
)
from .flow_rule import DOMAIN_TOL, Linear
from .linalg import LinearMap, SymPosDefMap, as_vec, min_eig_estimate

log = logging.getLogger(__name__)

__all__ = [
    "TimeGrid",
    "Trajectory",
    "ProblemData",
    "integrate_smoothed",
    "integrate_yosida",
    "integrate_reference",
    "cnorm",
    "l2norm",
    "h1seminorm",
    "h1norm",
    "l1_derivative_norm",
]

NEWTON_MAX_ITER = 50
NEWTON_RTOL = 1e-11
MAX_HALVINGS = 30


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("final time T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("step count N must be an integer >= 1")
        object.__setattr__(self, "N", int(self.N))

    @property
    def tau(self):
        return self.T / self.N

    @property
    def nodes(self):
        return np.linspace(0.0, self.T, self.N + 1)

    def refine(self, factor):
        return TimeGrid(self.T, self.N * int(factor))


@dataclass(eq=False)
class Trajectory:
    """Node values of a path on a :class:`TimeGrid`, shape ``(N + 1, dim)``.

    The piecewise-linear interpolant is the continuous representative.
    ``info`` carries solver diagnostics and is not part of the data.
    """

    grid: TimeGrid
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.N + 1:
            raise DimensionMismatch(f"trajectory has {v.shape[0]} nodes, grid has {self.grid.N + 1}")
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory contains non-finite values")
        self.values = v

    @classmethod
    def from_function(cls, grid, f):
        return cls(grid, np.array([np.atleast_1d(f(t)) for t in grid.nodes], dtype=float))

    @classmethod
    def constant(cls, grid, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (grid.N + 1, 1)))

    @classmethod
    def zeros(cls, grid, dim):
        return cls(grid, np.zeros((grid.N + 1, dim)))

    @property
    def space_dim(self):
        return self.values.shape[1]

    @property
    def times(self):
        return self.grid.nodes

    def derivative(self):
        """Forward difference quotients, shape ``(N, dim)``."""
        return np.diff(self.values, axis=0) / self.grid.tau

    def subsample(self, factor):
        factor = int(factor)
        if self.grid.N % factor:
            raise ValueError(f"cannot coarsen N={self.grid.N} by {factor}")
        return Trajectory(TimeGrid(self.grid.T, self.grid.N // factor), self.values[::factor])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        cols = [np.interp(t, self.times, self.values[:, j]) for j in range(self.space_dim)]
        return np.stack(cols, axis=-1)

    def copy(self):
        return Trajectory(self.grid, self.values.copy())

    def __add__(self, other):
        return Trajectory(self.grid, self.values + _values(other))

    def __sub__(self, other):
        return Trajectory(self.grid, self.values - _values(other))

    def __mul__(self, scalar):
        return Trajectory(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


def _values(x):
    return x.values if isinstance(x, Trajectory) else np.asarray(x, dtype=float)


def cnorm(tr):
    return float(np.max(np.linalg.norm(tr.values, axis=1)))


def l2norm(tr):
    sq = np.sum(tr.values**2, axis=1)
    return float(np.sqrt(0.5 * tr.grid.tau * np.sum(sq[1:] + sq[:-1])))


def h1seminorm(tr):
    return float(np.sqrt(tr.grid.tau * np.sum(tr.derivative() ** 2)))


def h1norm(tr):
    """Full discrete H^1 norm ``sqrt(l2^2 + |.|_{H^1}^2)``."""
    return float(np.hypot(l2norm(tr), h1seminorm(tr)))


def l1_derivative_norm(tr):
    return float(tr.grid.tau * np.sum(np.linalg.norm(tr.derivative(), axis=1)))


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Operators of ``z' in A(R l - Q z), z(0) = z0``.

    ``gamma_q`` defaults to the inverse-power-iteration estimate of the
    smallest eigenvalue of ``Q``.
    """

    Q: SymPosDefMap
    R: LinearMap
    z0: np.ndarray
    rule: object
    gamma_q: float | None = None

    def __post_init__(self):
        Q = self.Q if isinstance(self.Q, SymPosDefMap) else SymPosDefMap.from_matrix(self.Q)
        R = self.R if isinstance(self.R, LinearMap) else LinearMap(self.R)
        m = Q.dim
        if R.rows != m:
            raise DimensionMismatch(f"R maps into R^{R.rows}, Q acts on R^{m}")
        z0 = as_vec(self.z0, m, "z0")
        rule_dim = getattr(self.rule, "dim", None)
        if rule_dim is not None and rule_dim != m:
            raise DimensionMismatch(f"flow rule acts on R^{rule_dim}, state space is R^{m}")
        mu = min_eig_estimate(Q)
        gamma_q = mu if self.gamma_q is None else float(self.gamma_q)
        if not 0 < gamma_q <= mu * (1 + 1e-8):
            raise ValueError(f"gamma_q={gamma_q} must lie in (0, min eig Q = {mu}]")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "gamma_q", gamma_q)

    @property
    def m(self):
        return self.Q.dim

    @property
    def p(self):
        return self.R.cols

    def drive(self, l, z):
        """``R l - Q z`` evaluated node-wise on trajectories or vectors."""
        lv, zv = _values(l), _values(z)
        return lv @ self.R.matrix.T - zv @ self.Q.matrix.T

    def check_load(self, l):
        if l.space_dim != self.p:
            raise DimensionMismatch(f"load has dimension {l.space_dim}, R expects {self.p}")


def _implicit_euler(pd, l, field, jac, label):
    """Shared implicit-Euler driver for single-valued Lipschitz fields."""
    pd.check_load(l)
    grid = l.grid
    tau = grid.tau
    Q = pd.Q.matrix
    m = pd.m
    eye = np.eye(m)
    z = np.empty((grid.N + 1, m))
    z[0] = pd.z0
    Rl = l.values @ pd.R.matrix.T
    iters = []
    for k in range(grid.N):
        zk = z[k]
        c = Rl[k + 1]
        tol = NEWTON_RTOL * (1.0 + np.linalg.norm(zk))
        zn = zk.copy()
        res = zn - zk - tau * field(c - Q @ zn)
        rn = np.linalg.norm(res)
        for it in range(NEWTON_MAX_ITER + 1):
            if rn <= tol:
                break
            if it == NEWTON_MAX_ITER:
                raise NewtonDiverged(f"{label}: Newton did not converge at step {k}", k, rn)
            J = eye + tau * jac(c - Q @ zn) @ Q
            dz = np.linalg.solve(J, -res)
            step = 1.0
            for _ in range(MAX_HALVINGS):
                trial = zn + step * dz
                res_t = trial - zk - tau * field(c - Q @ trial)
                rn_t = np.linalg.norm(res_t)
                if rn_t <= (1.0 - 1e-4 * step) * rn or rn_t <= tol:
                    break
                step *= 0.5
            else:
                raise NewtonDiverged(f"{label}: damping exhausted at step {k}", k, rn)
            zn, res, rn = trial, res_t, rn_t
        iters.append(it)
        z[k + 1] = zn
    out = Trajectory(grid, z)
    out.info["newton_iterations"] = iters
    return out


def integrate_smoothed(pd, p, l):
    """Implicit Euler for ``z' = A_s(R l - Q z)`` with Newton on ``A_s'``."""
    rule = pd.rule
    return _implicit_euler(
        pd, l, lambda y: rule.smoothed(y, p), lambda y: rule.smoothed_jacobian(y, p), "smoothed"
    )


def integrate_yosida(pd, lam, l):
    """Implicit Euler for ``z' = A_lam(R l - Q z)`` with semismooth Newton."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    rule = pd.rule
    return _implicit_euler(
        pd, l, lambda y: rule.yosida(y, lam), lambda y: rule.yosida_jacobian(y, lam), "yosida"
    )


def _prox_step(pd, b, w0, step, kappa, Qinv, k):
    """Solve ``w + step * Q v = b, v in A(w)``.

    Equivalent fixed point: ``w = R_{step*kappa}(w - kappa Q^{-1}(w - b))``.
    Semismooth Newton first, projected fixed-point iteration as fallback.
    """
    rule = pd.rule
    m = pd.m
    mu = step * kappa
    tol = 1e-12 * (1.0 + np.linalg.norm(b))
    M = np.eye(m) - kappa * Qinv

    def residual(w):
        x = M @ w + kappa * (Qinv @ b)
        return w - rule.resolvent(x, mu), x

    w = w0.copy()
    G, x = residual(w)
    gn = np.linalg.norm(G)
    for _ in range(NEWTON_MAX_ITER):
        if gn <= tol:
            return w
        J = np.eye(m) - rule.resolvent_jacobian(x, mu) @ M
        try:
            dw = np.linalg.solve(J, -G)
        except np.linalg.LinAlgError:
            break
        s = 1.0
        for _ in range(MAX_HALVINGS):
            G_t, x_t = residual(w + s * dw)
            gn_t = np.linalg.norm(G_t)
            if gn_t <= (1.0 - 1e-4 * s) * gn or gn_t <= tol:
                break
            s *= 0.5
        else:
            break
        w, G, x, gn = w + s * dw, G_t, x_t, gn_t
    if gn <= tol:
        return w
    log.debug("reference step %d: Newton stalled at %.3e, falling back to fixed point", k, gn)
    for _ in range(20_000):
        w_new = rule.resolvent(M @ w + kappa * (Qinv @ b), mu)
        if np.linalg.norm(w_new - w) <= tol:
            return w_new
        w = w_new
    G, _ = residual(w)
    raise SubproblemDiverged(f"reference subproblem did not converge at step {k}", k, float(np.linalg.norm(G)))


def integrate_reference(pd, l):
    """Implicit Euler for the inclusion itself via ``q = R l - Q z``.

    Each step solves ``q_{k+1} + tau Q v = q_k + R(l_{k+1} - l_k)`` with
    ``v in A(q_{k+1})`` and recovers ``z_{k+1} = Q^{-1}(R l_{k+1} - q_{k+1})``.
    """
    pd.check_load(l)
    grid = l.grid
    tau = grid.tau
    Rl = l.values @ pd.R.matrix.T
    q = Rl[0] - pd.Q.apply(pd.z0)
    dist = pd.rule.domain_distance(q)
    if dist > DOMAIN_TOL:
        raise IncompatibleInitialState(
            f"R l(0) - Q z0 lies outside D(A) (distance {dist:.3e})", dist
        )
    z = np.empty((grid.N + 1, pd.m))
    z[0] = pd.z0
    Qm = pd.Q.matrix
    Qinv = pd.Q.inverse_matrix()
    kappa = pd.gamma_q
    linear = isinstance(pd.rule, Linear)
    for k in range(grid.N):
        b = q + Rl[k + 1] - Rl[k]
        if linear:
            q = np.linalg.solve(np.eye(pd.m) + tau * pd.rule.kappa * Qm, b)
        else:
            q = _prox_step(pd, b, q, tau, kappa, Qinv, k)
        z[k + 1] = pd.Q.solve(Rl[k + 1] - q)
    return Trajectory(grid, z)
