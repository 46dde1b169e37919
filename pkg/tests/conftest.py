import numpy as np
import pytest

from monoflow.evolution import ProblemData, TimeGrid, Trajectory
from monoflow.flow_rule import Linear, RegParams, VonMises
from monoflow.homogenized import assemble, make_toy_instance
from monoflow.objective import ObjectiveSpec


def sine_load(p, amp=4.0, seed=5):
    v = np.random.default_rng(seed).standard_normal(p)
    v /= np.linalg.norm(v)
    return lambda t: amp * np.sin(np.pi * t) * v


@pytest.fixture(scope="session")
def toy():
    """The shipped von Mises instance: 2 points in 3-d, 8 displacement DOFs."""
    data = make_toy_instance(1, n=8, n_macro=4)
    ops = assemble(data)
    pd = ProblemData(ops.Q, ops.R, np.zeros(data.m), VonMises(1.0, 3, 2))
    return data, ops, pd


@pytest.fixture(scope="session")
def toy_control(toy):
    data, ops, pd = toy
    grid = TimeGrid(1.0, 64)
    spec = ObjectiveSpec.plasticity(ops, data, 1.0, 1.0, 1e-2, u_d=np.ones(4), sigma_d=0.3 * np.ones(9))
    l = Trajectory.from_function(grid, sine_load(4))
    return pd, RegParams(0.1, 0.05), l, spec


def scalar_linear(q=2.0, r=1.0, kappa=1.0, z0=0.0):
    return ProblemData(np.array([[q]]), np.array([[r]]), np.array([z0]), Linear(kappa))


# criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {title}: {detail}")
