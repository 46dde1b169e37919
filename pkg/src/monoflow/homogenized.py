"""Algebraic homogenized plasticity.

The displacement DOFs ``w = (u, v)`` (macro part first) are mapped to strain
DOFs by the combined gradient ``E``; strains are grouped per material point
so the elasticity tensor ``C`` is block diagonal.  Eliminating ``w`` and the
stress from

    E^T Sigma = P l,        Sigma = C (E w - B z)

leaves ``z' in A(B^T Sigma - Bh z) = A(R l - Q z)`` with

    G = (E^T C E)^{-1},   T = B^T C E G E^T C B,
    Q = B^T C B + Bh - T,  R = B^T C E G P.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoercivityViolated, DimensionMismatch
from .linalg import LinearMap, SymPosDefMap, as_vec

__all__ = [
    "PlasticityData",
    "AssembledOperators",
    "assemble",
    "recover_state",
    "make_toy_instance",
    "sym_projector",
    "observation_maps",
]

PSD_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PlasticityData:
    E: LinearMap
    C: SymPosDefMap
    B: LinearMap
    Bh: SymPosDefMap
    P: LinearMap
    avg: LinearMap
    n_macro: int
    c_floor: float
    b_floor: float
    d: int = 3
    n_pts: int = 1
    seed: int | None = None

    def __post_init__(self):
        for name in ("E", "B", "P", "avg"):
            val = getattr(self, name)
            if not isinstance(val, LinearMap):
                object.__setattr__(self, name, LinearMap(val))
        for name in ("C", "Bh"):
            val = getattr(self, name)
            if not isinstance(val, SymPosDefMap):
                object.__setattr__(self, name, SymPosDefMap.from_matrix(val))
        s, n = self.E.rows, self.E.cols
        if self.C.dim != s:
            raise DimensionMismatch(f"C acts on R^{self.C.dim}, E maps into R^{s}")
        if self.B.rows != s:
            raise DimensionMismatch(f"B maps into R^{self.B.rows}, strain space is R^{s}")
        if self.Bh.dim != self.B.cols:
            raise DimensionMismatch(f"Bh acts on R^{self.Bh.dim}, B has {self.B.cols} columns")
        if self.P.rows != n:
            raise DimensionMismatch(f"P maps into R^{self.P.rows}, displacement space is R^{n}")
        if self.avg.cols != s:
            raise DimensionMismatch(f"avg expects R^{self.avg.cols}, stress space is R^{s}")
        if not 0 <= self.n_macro <= n:
            raise DimensionMismatch(f"n_macro={self.n_macro} outside [0, {n}]")

    @property
    def n(self):
        return self.E.cols

    @property
    def s(self):
        return self.E.rows

    @property
    def m(self):
        return self.B.cols

    @property
    def p(self):
        return self.P.cols


@dataclass(frozen=True, eq=False)
class AssembledOperators:
    Q: SymPosDefMap
    R: LinearMap
    G: SymPosDefMap  # E^T C E, factorized
    T: LinearMap


def assemble(data):
    """Build ``Q``, ``R`` and ``T`` and verify symmetry and coercivity."""
    E, C, B = data.E.matrix, data.C.matrix, data.B.matrix
    stiff = SymPosDefMap.from_matrix(E.T @ C @ E)
    X = E.T @ C @ B  # = -Div(C B .)
    T = X.T @ stiff.solve(X)
    R = X.T @ stiff.solve(data.P.matrix)
    BCB = B.T @ C @ B
    gap_min = float(np.min(np.linalg.eigvalsh(0.5 * (BCB - T + (BCB - T).T))))
    if gap_min < -PSD_TOL:
        raise CoercivityViolated(f"B^T C B - T is not positive semidefinite (min eig {gap_min:.3e})", gap_min)
    Qm = BCB + data.Bh.matrix - T
    Qm = 0.5 * (Qm + Qm.T)
    q_min = float(np.min(np.linalg.eigvalsh(Qm)))
    if q_min < data.b_floor - PSD_TOL:
        raise CoercivityViolated(f"Q is not coercive with constant {data.b_floor} (min eig {q_min:.3e})", q_min)
    return AssembledOperators(Q=SymPosDefMap.from_matrix(Qm), R=LinearMap(R), G=stiff, T=LinearMap(T))


def recover_state(ops, data, z, l):
    """Displacements and stress for internal variable ``z`` and load ``l``.

    Returns ``(u, v, Sigma)`` with ``w = G(E^T C B z + P l)`` split at
    ``n_macro`` and ``Sigma = C(E w - B z)``.
    """
    z = as_vec(z, data.m, "z")
    l = as_vec(l, data.p, "l")
    w = ops.G.solve(data.E.apply_transpose(data.C.apply(data.B.apply(z))) + data.P.apply(l))
    sigma = data.C.apply(data.E.apply(w) - data.B.apply(z))
    return w[: data.n_macro], w[data.n_macro :], sigma


def observation_maps(ops, data):
    """Affine maps ``(z, l) -> u`` and ``(z, l) -> avg Sigma`` as matrices.

    Returns ``(Uz, Ul, Sz, Sl)`` with ``u = Uz z + Ul l`` and
    ``avg(Sigma) = Sz z + Sl l``.
    """
    E, C, B, P = data.E.matrix, data.C.matrix, data.B.matrix, data.P.matrix
    Wz = ops.G.solve(E.T @ C @ B)
    Wl = ops.G.solve(P)
    Uz, Ul = Wz[: data.n_macro], Wl[: data.n_macro]
    Sz = data.avg.matrix @ C @ (E @ Wz - B)
    Sl = data.avg.matrix @ C @ E @ Wl
    return Uz, Ul, Sz, Sl


def sym_projector(d):
    """Orthogonal projector onto symmetric matrices in flattened ``d*d`` form."""
    perm = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            perm[i * d + j, j * d + i] = 1.0
    return 0.5 * (np.eye(d * d) + perm)


def _block_diag(blocks):
    size = sum(b.shape[0] for b in blocks)
    out = np.zeros((size, size))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i : i + k, i : i + k] = b
        i += k
    return out


def _unit_spd(rng, k):
    g = rng.standard_normal((k, k))
    a = g @ g.T
    return a / np.linalg.norm(a, 2)


def make_toy_instance(seed, d=3, n_pts=2, n=12, n_macro=None, m=None, kind="vonmises",
                      c_floor=1.0, b_floor=0.5):
    """Reproducible random plasticity instance.

    ``kind="vonmises"`` keeps every operator invariant on symmetric blocks
    and uses ``B = I`` (so ``m = s = n_pts * d**2``); the gradient ``E`` is
    then limited to ``n <= n_pts * d (d + 1) / 2`` DOFs.  ``kind="generic"``
    draws dense ``B`` of shape ``(s, m)`` with no symmetry structure.
    """
    if kind not in ("vonmises", "generic"):
        raise ValueError(f"unknown instance kind {kind!r}")
    if min(d, n_pts, n) < 1 or not (c_floor > 0 and b_floor > 0):
        raise ValueError("sizes must be positive and floors > 0")
    rng = np.random.default_rng(seed)
    dd = d * d
    s = n_pts * dd
    n_macro = n // 2 if n_macro is None else n_macro
    if kind == "vonmises":
        if m not in (None, s):
            raise ValueError(f"von Mises instances need m = s = {s}")
        m = s
        sym_dim = n_pts * d * (d + 1) // 2
        if n > sym_dim:
            raise ValueError(f"n={n} exceeds the symmetric strain dimension {sym_dim}")
        S1 = sym_projector(d)
        S = _block_diag([S1] * n_pts)
        C = _block_diag([S1 @ _unit_spd(rng, dd) @ S1 for _ in range(n_pts)]) + c_floor * np.eye(s)
        E = S @ rng.standard_normal((s, n))
        B = np.eye(s)
        Bh = S @ _unit_spd(rng, m) @ S + b_floor * np.eye(m)
    else:
        m = s // 2 if m is None else m
        if n > s:
            raise ValueError(f"n={n} exceeds the strain dimension {s}")
        C = _block_diag([_unit_spd(rng, dd) for _ in range(n_pts)]) + c_floor * np.eye(s)
        E = rng.standard_normal((s, n))
        B = rng.standard_normal((s, m)) / np.sqrt(s)
        Bh = _unit_spd(rng, m) + b_floor * np.eye(m)
    P = np.zeros((n, n_macro))
    P[:n_macro, :n_macro] = np.eye(n_macro)
    avg = np.hstack([np.eye(dd)] * n_pts) / n_pts
    return PlasticityData(
        E=LinearMap(E), C=SymPosDefMap.from_matrix(C), B=LinearMap(B),
        Bh=SymPosDefMap.from_matrix(Bh), P=LinearMap(P), avg=LinearMap(avg),
        n_macro=n_macro, c_floor=c_floor, b_floor=b_floor, d=d, n_pts=n_pts, seed=seed,
    )
