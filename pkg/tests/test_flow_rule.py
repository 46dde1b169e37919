import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings, strategies as st

from monoflow.errors import AsymmetricBlock, OutsideDomain
from monoflow.flow_rule import (
    Box,
    Linear,
    RegParams,
    VonMises,
    deviator,
    minimal_section,
    random_symmetric_blocks,
    resolvent,
    smoothed_eval,
    smoothed_hvp,
    smoothed_jvp,
    smoothed_max,
    smoothed_max_d1,
    smoothed_max_d2,
    yosida,
)

RULE = VonMises(1.0, 3, 1)


def deviatoric_block(norm, rng=None, d=3):
    rng = rng or np.random.default_rng(0)
    b = deviator(random_symmetric_blocks(rng, 1, d).reshape(1, d, d))[0]
    return (norm * b / np.linalg.norm(b)).reshape(-1)


def with_dev_norm(rng, norm, n_pts=1, d=3):
    """Random symmetric blocks whose deviators all have the given norm."""
    b = random_symmetric_blocks(rng, n_pts, d).reshape(n_pts, d, d)
    dev = deviator(b)
    tr = np.trace(b, axis1=1, axis2=2)[:, None, None] * np.eye(d) / d
    r = np.linalg.norm(dev, axis=(1, 2))[:, None, None]
    return (tr + norm * dev / r).reshape(-1)


# --- regularization parameters and max_eps --------------------------------------------------

def test_reg_params_validation():
    RegParams(1.0, 0.5)
    for lam, eps in [(0.0, 0.1), (-1.0, 0.1), (1.0, 0.0), (1.0, 0.51)]:
        with pytest.raises(ValueError):
            RegParams(lam, eps)


def test_smoothed_max_examples():
    assert smoothed_max(0.2, 0.1) == 0.2
    assert np.isclose(smoothed_max(0.0, 0.1), 0.01875, rtol=0, atol=1e-16)
    assert smoothed_max(-0.1, 0.1) == 0.0
    assert smoothed_max_d1(-0.1, 0.1) == 0.0
    assert smoothed_max_d2(-0.1, 0.1) == 0.0


def test_smoothed_max_is_c2_at_band_edges():
    eps = 0.1
    for r0 in (-eps, eps):
        for f in (smoothed_max, smoothed_max_d1, smoothed_max_d2):
            assert abs(f(r0 - 1e-12, eps) - f(r0 + 1e-12, eps)) < 1e-9


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01, 1e-40])
def test_smoothed_max_derivatives_match_differences(eps):
    r = np.linspace(-2 * eps, 2 * eps, 201)
    t = 1e-6 * eps
    fd1 = (smoothed_max(r + t, eps) - smoothed_max(r - t, eps)) / (2 * t)
    fd2 = (smoothed_max_d1(r + t, eps) - smoothed_max_d1(r - t, eps)) / (2 * t)
    inside = np.abs(np.abs(r) - eps) > 10 * t
    assert np.allclose(fd1[inside], smoothed_max_d1(r, eps)[inside], atol=1e-6)
    assert np.allclose(fd2[inside] * eps, smoothed_max_d2(r, eps)[inside] * eps, atol=1e-5)


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.floats(1e-6, 0.5))
def test_smoothed_max_properties(r, eps):
    m = smoothed_max(r, eps)
    assert abs(m - max(r, 0.0)) <= 3 * eps / 16 + 1e-14
    assert m >= 0
    assert 0 <= smoothed_max_d1(r, eps) <= 1
    assert smoothed_max_d2(r, eps) >= 0


# --- von Mises -----------------------------------------------------------------------------

def test_deviator_trace_free_and_kills_identity():
    rng = np.random.default_rng(0)
    for d in (2, 3):
        b = random_symmetric_blocks(rng, 4, d).reshape(4, d, d)
        assert np.all(np.abs(np.trace(deviator(b), axis1=1, axis2=2)) < 1e-15)
        assert np.all(deviator(2.5 * np.eye(d)) == 0)


def test_asymmetric_block_rejected():
    h = np.arange(9.0)
    with pytest.raises(AsymmetricBlock):
        RULE.yosida(h, 1.0)


def test_resolvent_fixes_members():
    h = with_dev_norm(np.random.default_rng(1), 0.5)
    assert np.array_equal(resolvent(RULE, h, 0.3), h)


def _qp_projection(h, sigma0, d=3):
    """Projection onto the deviatoric ball by a generic constrained solver."""
    cons = {"type": "ineq", "fun": lambda x: sigma0**2 - np.sum(deviator(x.reshape(d, d)) ** 2)}
    res = scipy.optimize.minimize(lambda x: 0.5 * np.sum((x - h) ** 2), np.zeros(d * d),
                                  jac=lambda x: x - h, constraints=[cons], method="SLSQP",
                                  options={"ftol": 1e-14, "maxiter": 500})
    return res.x


def test_resolvent_projects_onto_ball_qp_oracle():
    h = deviatoric_block(2.0)
    p = resolvent(RULE, h, 0.7)
    assert np.isclose(np.linalg.norm(p), 1.0)
    assert np.allclose(p, h / 2.0)
    h2 = with_dev_norm(np.random.default_rng(3), 3.0)
    assert np.allclose(resolvent(RULE, h2, 1.0), _qp_projection(h2, 1.0), atol=1e-6)


def test_yosida_examples():
    tau = deviatoric_block(2.0)
    assert np.allclose(yosida(RULE, tau, 0.5), tau)
    assert np.allclose(yosida(RULE, tau, 0.5), (tau - resolvent(RULE, tau, 0.5)) / 0.5)
    inside = with_dev_norm(np.random.default_rng(2), 0.9)
    assert np.all(yosida(RULE, inside, 0.1) == 0)


def test_minimal_section_von_mises():
    inside = with_dev_norm(np.random.default_rng(4), 0.99, n_pts=3)
    assert np.all(minimal_section(VonMises(1.0, 3, 3), inside) == 0)
    projected = resolvent(RULE, with_dev_norm(np.random.default_rng(5), 5.0), 1.0)
    assert np.all(minimal_section(RULE, projected) == 0)
    with pytest.raises(OutsideDomain) as exc:
        minimal_section(RULE, with_dev_norm(np.random.default_rng(6), 1.5))
    assert np.isclose(exc.value.distance, 0.5)


def test_smoothed_examples():
    p = RegParams(0.2, 0.1)
    assert np.all(smoothed_eval(RULE, np.zeros(9), p) == 0)
    far = with_dev_norm(np.random.default_rng(7), 4.0)
    assert np.array_equal(smoothed_eval(RULE, far, p), yosida(RULE, far, p.lam))
    deep = with_dev_norm(np.random.default_rng(8), 0.5)
    h = random_symmetric_blocks(np.random.default_rng(9), 1, 3)
    assert np.all(smoothed_jvp(RULE, deep, h, p) == 0)
    assert np.all(smoothed_hvp(RULE, deep, h, h, p) == 0)


def test_smoothed_gap_at_yield_surface():
    lam, eps = 0.3, 0.1
    rng = np.random.default_rng(10)
    for _ in range(50):
        tau = with_dev_norm(rng, 1.0)
        gap = np.linalg.norm(smoothed_eval(RULE, tau, RegParams(lam, eps)) - yosida(RULE, tau, lam))
        assert gap <= 3 / 16 * eps / lam * 1.0 + 1e-14


def test_smoothed_converges_to_yosida_linearly_in_eps():
    # sup gap * lam / eps fitted once on seed 0 (0.1874) and frozen here
    C = 0.19
    rng = np.random.default_rng(11)
    lam = 0.5
    for eps in (0.4, 0.1, 0.01, 0.001):
        for _ in range(100):
            tau = with_dev_norm(rng, rng.uniform(0.5, 2.0))
            gap = np.linalg.norm(smoothed_eval(RULE, tau, RegParams(lam, eps)) - yosida(RULE, tau, lam))
            assert gap <= C * eps / lam


def _random_point(rng, n_pts=2):
    return with_dev_norm(rng, rng.uniform(0.9, 1.3), n_pts)


@pytest.mark.parametrize("seed", range(5))
def test_jvp_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    rule = VonMises(1.0, 3, 2)
    p = RegParams(0.3, 0.2)
    tau, h = _random_point(rng), random_symmetric_blocks(rng, 2, 3)
    exact = smoothed_jvp(rule, tau, h, p)
    errs = []
    for t in (1e-3, 1e-4):
        fd = (smoothed_eval(rule, tau + t * h, p) - smoothed_eval(rule, tau - t * h, p)) / (2 * t)
        errs.append(np.linalg.norm(fd - exact))
    assert errs[1] <= 0.05 * errs[0] + 1e-9  # O(t^2): a tenfold step cut gains ~100
    assert np.allclose(rule.smoothed_jacobian(tau, p) @ h, exact)


@pytest.mark.parametrize("seed", range(5))
def test_hvp_matches_central_differences(seed):
    rng = np.random.default_rng(100 + seed)
    rule = VonMises(1.0, 3, 2)
    p = RegParams(0.3, 0.2)
    tau = _random_point(rng)
    h1, h2 = random_symmetric_blocks(rng, 2, 3), random_symmetric_blocks(rng, 2, 3)
    exact = smoothed_hvp(rule, tau, h1, h2, p)
    errs = []
    for t in (1e-3, 1e-4):
        fd = (smoothed_jvp(rule, tau + t * h2, h1, p) - smoothed_jvp(rule, tau - t * h2, h1, p)) / (2 * t)
        errs.append(np.linalg.norm(fd - exact))
    assert errs[1] <= 0.05 * errs[0] + 1e-8


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jvp_self_adjoint_and_hvp_symmetric(seed):
    rng = np.random.default_rng(seed)
    rule = VonMises(1.0, 3, 2)
    p = RegParams(0.3, 0.2)
    tau = _random_point(rng)
    h1, h2 = random_symmetric_blocks(rng, 2, 3), random_symmetric_blocks(rng, 2, 3)
    lhs = smoothed_jvp(rule, tau, h1, p) @ h2
    rhs = h1 @ smoothed_jvp(rule, tau, h2, p)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))
    assert np.array_equal(smoothed_hvp(rule, tau, h1, h2, p), smoothed_hvp(rule, tau, h2, h1, p))


# --- all rules: monotonicity, Lipschitz, resolvent algebra ----------------------------------

def _rules_and_samplers():
    return [
        (VonMises(1.0, 3, 2), lambda rng: random_symmetric_blocks(rng, 2, 3, 2.0)),
        (Box(-np.ones(4), np.array([1.0, 2.0, 0.5, 1.0])), lambda rng: 3 * rng.standard_normal(4)),
        (Linear(1.7), lambda rng: rng.standard_normal(3)),
    ]


@pytest.mark.parametrize("idx", range(3))
def test_yosida_monotone_and_lipschitz(idx):
    rule, sample = _rules_and_samplers()[idx]
    rng = np.random.default_rng(idx)
    for _ in range(1000):
        lam = rng.uniform(0.01, 2.0)
        h1, h2 = sample(rng), sample(rng)
        a1, a2 = rule.yosida(h1, lam), rule.yosida(h2, lam)
        assert (a1 - a2) @ (h1 - h2) >= -1e-12
        assert np.linalg.norm(a1 - a2) <= np.linalg.norm(h1 - h2) / lam * (1 + 1e-12)


def _resolvent_of_yosida(rule, h, lam, mu):
    """Solve w + mu A_lam(w) = h with a generic nonlinear solver."""
    sym = (lambda w: w) if not isinstance(rule, VonMises) else (
        lambda w: (0.5 * (w.reshape(-1, 3, 3) + w.reshape(-1, 3, 3).transpose(0, 2, 1))).reshape(-1))
    sol = scipy.optimize.root(lambda w: w + mu * rule.yosida(sym(w), lam) - h, h, method="hybr",
                              options={"xtol": 1e-15})
    return sol.x


@pytest.mark.parametrize("idx", [0, 2])
def test_yosida_of_yosida(idx):
    rule, sample = _rules_and_samplers()[idx]
    rng = np.random.default_rng(20 + idx)
    for _ in range(50):
        lam, mu = rng.uniform(0.05, 1.0, size=2)
        h = sample(rng)
        nested = (h - _resolvent_of_yosida(rule, h, lam, mu)) / mu
        assert np.allclose(nested, rule.yosida(h, lam + mu), rtol=0, atol=1e-10)


def test_resolvent_inequality_linear_and_von_mises():
    rng = np.random.default_rng(30)
    lin, vm = Linear(2.3), VonMises(1.0, 3, 1)
    for _ in range(1000):
        lam = rng.uniform(0.01, 2.0)
        mu = rng.uniform(0.0, 2 * lam) * 0.999
        h = rng.standard_normal(3)
        lhs = np.linalg.norm(lin.resolvent(h, lam) - lin.resolvent(h, lam + mu))
        rhs = np.sqrt(mu / (2 * lam - mu)) * np.linalg.norm(h - lin.resolvent(h, lam))
        assert lhs <= rhs * (1 + 1e-12) + 1e-15
        tau = random_symmetric_blocks(rng, 1, 3, 2.0)
        assert np.array_equal(vm.resolvent(tau, lam), vm.resolvent(tau, lam + mu))


def test_linear_rule_examples():
    lin = Linear(1.0)
    assert np.allclose(resolvent(lin, [2.0], 1.0), [1.0])
    assert np.allclose(yosida(lin, [2.0], 1.0), [1.0])
    assert np.allclose(minimal_section(Linear(2.0), [1.0]), [2.0])
    p = RegParams(0.1, 0.1)
    assert np.allclose(smoothed_eval(lin, [3.0], p), [3.0])


def test_box_rule():
    box = Box(-np.ones(2), np.ones(2))
    assert np.allclose(box.resolvent(np.array([3.0, -0.2]), 0.5), [1.0, -0.2])
    assert np.allclose(box.yosida(np.array([3.0, -2.0]), 0.5), [4.0, -2.0])
    assert np.all(box.minimal_section(np.array([0.3, 0.3])) == 0)
    with pytest.raises(OutsideDomain):
        box.minimal_section(np.array([1.5, 0.0]))
    with pytest.raises(ValueError):
        Box([1.0], [0.0])
    p = RegParams(0.5, 0.1)
    rng = np.random.default_rng(0)
    for _ in range(20):
        h, v = 1.5 * rng.standard_normal(2), rng.standard_normal(2)
        t = 1e-6
        fd = (box.smoothed(h + t * v, p) - box.smoothed(h - t * v, p)) / (2 * t)
        assert np.allclose(fd, box.smoothed_jvp(h, v, p), atol=1e-6)
        fd2 = (box.smoothed_jvp(h + t * v, v, p) - box.smoothed_jvp(h - t * v, v, p)) / (2 * t)
        assert np.allclose(fd2, box.smoothed_hvp(h, v, v, p), atol=1e-4)
