"""Objective, lifted optimality system, multiplier recovery, derivatives."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import (
    TOY_ALPHA,
    TOY_BETA,
    TOY_TARGETS,
    TOY_V,
    TOY_X,
    toy_document,
)
from odadjust import (
    StatePoint,
    build_structure,
    eval_C,
    eval_C_jacobian,
    eval_F,
    eval_F_grad,
    eval_L,
    eval_L_grad,
    parse_network,
    recover_multipliers,
    tangent_space,
)
from odadjust.errors import DimensionMismatch, ResidualTooLarge
from odadjust.kkt import grad_F_state
from odadjust.network import Commodity, CostFunction, Link, Network
from odadjust.oracles import fd_gradient


@pytest.fixture
def net():
    return parse_network(json.dumps(toy_document()))


@pytest.fixture
def S(net):
    return build_structure(net)


def _equilibrium_state():
    return StatePoint(d=TOY_TARGETS.copy(), X=TOY_X.copy(),
                      alpha=TOY_ALPHA.copy(), beta=TOY_BETA.copy())


def _random_state(rng, S):
    return StatePoint(
        d=rng.uniform(0.5, 3.0, size=S.n_commodities),
        X=rng.uniform(0.0, 2.0, size=S.n_commodities * S.n_links),
        alpha=rng.normal(size=S.n_commodities * S.n_nodes),
        beta=rng.uniform(0.0, 1.0, size=S.n_commodities * S.n_links),
    )


# -- state points ---------------------------------------------------------------

def test_state_point_pack_round_trip(S):
    rng = np.random.default_rng(0)
    s = _random_state(rng, S)
    again = StatePoint.from_vector(s.pack(), S)
    assert_array_equal(again.d, s.d)
    assert_array_equal(again.X, s.X)
    assert_array_equal(again.alpha, s.alpha)
    assert_array_equal(again.beta, s.beta)
    with pytest.raises(DimensionMismatch):
        StatePoint.from_vector(np.zeros(S.state_dim + 1), S)


def test_state_point_bound_violation(S):
    s = _equilibrium_state()
    assert s.max_bound_violation() == 0.0
    s.d[0] = -0.5
    assert s.max_bound_violation() == 0.5
    s.alpha[:] = -100.0            # alpha is unconstrained
    assert s.max_bound_violation() == 0.5


# -- objective -------------------------------------------------------------------

def test_eval_F_closed_form(net):
    # flows hitting the observations exactly leave only the demand penalty:
    # 0.5 * ((1.625-1.5)^2 + (1.625-1.75)^2) = 0.015625
    X = np.zeros(8)
    X[0] = net.obs_flows[0]
    X[5] = net.obs_flows[1]
    assert eval_F(net, np.array([1.625, 1.625]), X) == 0.015625
    assert eval_F(net, TOY_TARGETS, X) == 0.0
    # pure observation mismatch: flows one unit high on both observed links
    X2 = X.copy()
    X2[0] += 1.0
    X2[5] += 1.0
    assert_allclose(eval_F(net, TOY_TARGETS, X2), 0.5 * 2.0, rtol=1e-15)


def test_eval_F_grad_closed_form(net):
    X = np.zeros(8)
    X[0] = net.obs_flows[0]
    X[5] = net.obs_flows[1]
    g_d, g_X = eval_F_grad(net, np.array([1.0, 2.0]), X)
    assert_array_equal(g_d, [-0.5, 0.25])
    assert_array_equal(g_X, np.zeros(8))
    # observation error of +1 on link 1 gives 2*eta1 = 1.0, tiled per commodity
    X[0] += 1.0
    _, g_X = eval_F_grad(net, np.array([1.0, 2.0]), X)
    expect = np.zeros(8)
    expect[0] = expect[4] = 1.0
    assert_allclose(g_X, expect, rtol=1e-9)


def test_eval_F_grad_matches_finite_differences(net, S):
    rng = np.random.default_rng(11)
    for _ in range(5):
        s = _random_state(rng, S)
        g = grad_F_state(net, S, s)
        g_fd = fd_gradient(
            lambda vec: eval_F(net, vec[S.slices[0]], vec[S.slices[1]]),
            s.pack())
        assert_allclose(g, g_fd, atol=1e-7 * (1.0 + np.abs(g).max()))


# -- constraint residual ----------------------------------------------------------

def test_eval_C_vanishes_at_equilibrium(net, S):
    res = eval_C(net, S, _equilibrium_state())
    assert_allclose(res.stationarity, np.zeros(8), atol=1e-12)
    assert_allclose(res.conservation, np.zeros(6), atol=1e-12)
    assert_allclose(res.complementarity, np.zeros(8), atol=1e-12)
    packed = res.pack()
    assert packed.shape == (22,)


def test_eval_C_block_structure(net, S):
    s = _equilibrium_state()
    s.beta[0] = 2.0                       # held flow 1.5 on link 1
    res = eval_C(net, S, s)
    assert_allclose(res.complementarity[0], 3.0, rtol=1e-15)
    # stationarity of that same entry picks up the extra beta
    assert_allclose(res.stationarity[0], -2.0, atol=1e-12)
    s2 = _equilibrium_state()
    s2.d[0] += 1.0                        # conservation unbalanced at commodity 1
    res2 = eval_C(net, S, s2)
    assert_allclose(res2.conservation[0], -1.0, atol=1e-12)
    assert_allclose(res2.conservation[1], 1.0, atol=1e-12)


def test_eval_C_jacobian_matches_taylor(net, S):
    rng = np.random.default_rng(5)
    s = _random_state(rng, S)
    J = eval_C_jacobian(net, S, s)
    assert J.shape == (22, 24)
    c0 = eval_C(net, S, s).pack()
    w = rng.normal(size=S.state_dim)
    w /= np.linalg.norm(w)

    def residual(h):
        c1 = eval_C(net, S, StatePoint.from_vector(s.pack() + h * w, S)).pack()
        return np.linalg.norm(c1 - c0 - h * (J @ w))

    r1, r2 = residual(1e-3), residual(5e-4)
    assert r1 <= 1e-14 or 3.0 <= r1 / max(r2, 1e-300) <= 5.0


def test_eval_C_jacobian_on_cubic_costs():
    net = Network(
        [1, 2, 3],
        [Link(1, 1, 2, CostFunction((1.0, 0.5, 0.0, 0.2))),
         Link(2, 2, 3, CostFunction((0.5, 1.0))),
         Link(3, 1, 3, CostFunction((2.0, 0.0, 0.3)))],
        [Commodity(1, 3, 2.0)],
    )
    S = build_structure(net)
    rng = np.random.default_rng(13)
    s = StatePoint(d=np.array([2.0]), X=rng.uniform(0.5, 2.0, size=3),
                   alpha=rng.normal(size=3), beta=rng.uniform(0.0, 1.0, size=3))
    J = eval_C_jacobian(net, S, s)
    c0 = eval_C(net, S, s).pack()
    w = rng.normal(size=S.state_dim)
    w /= np.linalg.norm(w)

    def residual(h):
        c1 = eval_C(net, S, StatePoint.from_vector(s.pack() + h * w, S)).pack()
        return np.linalg.norm(c1 - c0 - h * (J @ w))

    assert 3.0 <= residual(1e-3) / residual(5e-4) <= 5.0


# -- Lagrangian -------------------------------------------------------------------

def test_eval_L_consistency(net, S):
    rng = np.random.default_rng(21)
    s = _random_state(rng, S)
    mu = rng.normal(size=S.n_constraints)
    expect = eval_F(net, s.d, s.X) + float(eval_C(net, S, s).pack() @ mu)
    assert_allclose(eval_L(net, S, s, mu), expect, rtol=1e-14)
    assert eval_L(net, S, s, np.zeros(22)) == eval_F(net, s.d, s.X)
    with pytest.raises(DimensionMismatch):
        eval_L(net, S, s, np.zeros(21))


def test_eval_L_grad_matches_finite_differences(net, S):
    rng = np.random.default_rng(23)
    for _ in range(5):
        s = _random_state(rng, S)
        mu = rng.normal(size=S.n_constraints)
        g = eval_L_grad(net, S, s, mu)
        g_fd = fd_gradient(
            lambda vec: eval_L(net, S, StatePoint.from_vector(vec, S), mu),
            s.pack())
        assert_allclose(g, g_fd, atol=1e-6 * (1.0 + np.abs(g).max()))


# -- multiplier recovery ------------------------------------------------------------

def test_recover_multipliers_at_equilibrium(net, S):
    t = net.link_times(TOY_V)
    alpha, beta = recover_multipliers(net, S, TOY_TARGETS, TOY_X, t)
    assert_allclose(alpha, TOY_ALPHA, atol=1e-12)
    assert_allclose(beta, TOY_BETA, atol=1e-12)
    assert np.all(beta >= 0.0)
    assert abs(beta @ TOY_X) <= 1e-12
    # the recovered state zeroes the whole optimality system
    s = StatePoint(d=TOY_TARGETS.copy(), X=TOY_X.copy(), alpha=alpha, beta=beta)
    assert np.abs(eval_C(net, S, s).pack()).max() <= 1e-12


def test_recover_multipliers_least_squares_variant(net, S):
    t = net.link_times(TOY_V)
    alpha, beta = recover_multipliers(net, S, TOY_TARGETS, TOY_X, t,
                                      method="lsq")
    stationarity = np.tile(t, 2) + S.M.T @ alpha - beta
    assert np.abs(stationarity).max() <= 1e-6
    assert np.all(beta >= -1e-12)


def test_recover_multipliers_rejects_non_equilibrium(net, S):
    # commodity 1 forced onto its long route, commodity 2 onto the congested
    # direct link: far from equilibrium, so complementarity cannot close
    X_bad = np.array([0.0, 1.5, 0.0, 1.5,
                      0.0, 1.75, 0.0, 0.0])
    t = net.link_times(np.array([0.0, 3.25, 0.0, 1.5]))
    with pytest.raises(ResidualTooLarge):
        recover_multipliers(net, S, TOY_TARGETS, X_bad, t)


def test_recover_multipliers_with_unreachable_node():
    net = Network(
        [1, 2, 3],
        [Link(1, 1, 2, CostFunction((0.0, 1.0))),
         Link(2, 3, 1, CostFunction((0.0, 1.0)))],
        [Commodity(1, 2, 1.0)],
    )
    S = build_structure(net)
    X = np.array([1.0, 0.0])
    t = net.link_times(X)
    alpha, beta = recover_multipliers(net, S, np.array([1.0]), X, t)
    assert np.all(np.isfinite(alpha))
    assert np.all(beta >= 0.0)
    assert abs(beta @ X) <= 1e-12


# -- tangent space -----------------------------------------------------------------

def test_tangent_space_layout(net, S):
    z = _equilibrium_state()
    space = tangent_space(net, S, z, box_radius=0.5)
    assert_array_equal(space.z, z.pack())
    assert space.J.shape == (22, 24)
    lower = space.lower
    assert_array_equal(lower[:10], np.zeros(10))          # d and X
    assert np.all(np.isneginf(lower[10:16]))              # alpha free
    assert_array_equal(lower[16:], np.zeros(8))           # beta
    assert space.box_radius == 0.5
    assert tangent_space(net, S, z).box_radius is None
