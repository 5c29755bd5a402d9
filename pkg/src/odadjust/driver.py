"""Inexact restoration driver for the bilevel demand adjustment problem.

Each outer iteration k:
  1. refresh the penalty cap theta_{k,-1} from the history plus a summable bump
  2. restoration: solve the assignment for the current demand block and recover
     multipliers, giving a feasible point z^k of the lifted system
  3. stop if z^k is close to s^k and the projected Lagrangian step vanishes
  4. optimization phase: find a candidate v in the linearized set near z^k that
     matches at least the decrease of the projected-gradient (Cauchy) point
  5. trial multipliers at v by bounded minimum-norm least squares
  6. pick the largest penalty weight theta keeping the predicted reduction of
     the two-term merit at half the feasibility gain
  7. accept when the actual reduction reaches a tenth of the prediction,
     otherwise shrink the trust box and retry from step 4

State vectors are ordered [d | X | alpha | beta]; multipliers follow the
residual order [stationarity | conservation | complementarity].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InfeasibleTheta, MaxIterations, NoCandidate
from .kkt import (StatePoint, eval_C, eval_F, eval_L, eval_L_grad,
                  grad_F_state, eval_C_jacobian, recover_multipliers,
                  tangent_space)
from .network import build_structure
from .projection import min_norm_solve, project
from .tap import solve_tap

STATUS_CONVERGED = "converged"
STATUS_MAX_OUTER = "max_outer"
STATUS_STALLED = "stalled"


@dataclass
class IRConfig:
    """Algorithm parameters; the defaults are the working set for small networks."""

    eta: float = 1.0            # step scale inside the projected-gradient map
    M_bound: float = 1e6        # clip bound for trial multipliers
    theta_init: float = 0.9     # theta_{-1}
    delta0: float = 1.0         # initial trust box radius
    delta_min: float = 0.1      # radius floor applied at the start of each outer step
    tau1: float = 1e-4          # radius-proportional sufficient-decrease margin
    tau2: float = 1e-4          # absolute sufficient-decrease margin
    eps1: float = 1e-5          # restoration displacement tolerance
    eps2: float = 1e-5          # projected-gradient tolerance
    omega0: float = 0.1         # penalty bump schedule omega_k = omega0 * ratio**k
    omega_ratio: float = 0.5
    shrink: float = 0.5         # trust box shrink factor on rejection
    tap_tol: float = 1e-8       # relative gap demanded from the restoration solve
    tap_max_iter: int = 50000
    max_outer: int = 200
    max_inner: int = 60         # rejected candidates tolerated per outer step
    inner_gtol: float = 1e-3    # projected-gradient stop inside find_candidate
    inner_point_cap: int = 100  # trial points allowed per optimization phase
    inner_iter_cap: int = 10    # projected-gradient iterations per phase

    def omega(self, k):
        return self.omega0 * self.omega_ratio ** k

    def __post_init__(self):
        if not 0.0 < self.theta_init < 1.0:
            raise ValueError("theta_init must lie in (0, 1)")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        for name in ("eta", "M_bound", "delta0", "delta_min", "tau1", "tau2",
                     "eps1", "eps2", "omega0", "omega_ratio", "tap_tol",
                     "inner_gtol"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        for name in ("tap_max_iter", "max_outer", "max_inner",
                     "inner_point_cap", "inner_iter_cap"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be at least 1" % name)


@dataclass
class IterationRecord:
    """One optimization-phase attempt (outer k, inner i) for logging."""

    k: int
    i: int
    normC_s: float
    normC_z: float
    L_s: float
    L_v: float
    theta: float
    delta: float
    pred: float
    ared: float
    accepted: bool
    F_value: float
    rtan_norm: float

    FIELDS = ("k", "i", "normC_s", "normC_z", "L_s", "L_v", "theta", "delta",
              "pred", "ared", "accepted", "F_value", "rtan_norm")


@dataclass
class DapResult:
    d_final: np.ndarray
    X_final: np.ndarray
    F_final: float
    status: str
    history: list = field(default_factory=list)
    mu_final: np.ndarray | None = None
    outer_iterations: int = 0


def initial_state(net, d0=None):
    """Canonical start: chosen demands, everything else zero."""
    d0 = net.target_demands.copy() if d0 is None else np.asarray(d0, dtype=float)
    c, a, n = net.n_commodities, net.n_links, net.n_nodes
    return StatePoint(d=d0, X=np.zeros(c * a),
                      alpha=np.zeros(c * n), beta=np.zeros(c * a))


def init_penalty(k, theta_history, omega_schedule):
    """theta_{k,-1} = min(1, min over history) + omega_k, capped at 1."""
    theta_min = min(1.0, min(theta_history))
    return min(1.0, theta_min + omega_schedule(k))


def restore(net, S, s, cfg):
    """Feasibility phase: equilibrium flows for s.d plus certifying multipliers."""
    sol = solve_tap(net, s.d, tol=cfg.tap_tol, max_iter=cfg.tap_max_iter)
    if not sol.converged:
        raise MaxIterations(
            "restoration assignment stalled at relative gap %.3e" % sol.rgap)
    t = net.link_times(sol.v)
    alpha, beta = recover_multipliers(net, S, s.d, sol.X, t)
    return StatePoint(d=s.d.copy(), X=sol.X, alpha=alpha, beta=beta)


def cauchy_direction(net, S, z, mu, cfg, space=None):
    """Projected-gradient step of the Lagrangian within the tangent set at z."""
    if space is None:
        space = tangent_space(net, S, z)
    zvec = z.pack()
    g = eval_L_grad(net, S, z, mu)
    return project(space, zvec - cfg.eta * g) - zvec


def check_stop(s_vec, z_vec, r_tan, eps1, eps2):
    """Joint restoration-displacement and projected-gradient test."""
    close = float(np.abs(z_vec - s_vec).max(initial=0.0)) < eps1
    flat = float(np.abs(r_tan).max(initial=0.0)) < eps2
    return close and flat


def trial_multipliers(net, S, v, mu_k, M_bound):
    """argmin_mu |grad F(v) + C'(v)^T mu|, minimum norm, clipped to the bound."""
    g = grad_F_state(net, S, v)
    Jt = eval_C_jacobian(net, S, v).T
    mu = min_norm_solve(Jt, -g)
    return np.clip(mu, -M_bound, M_bound)


def choose_theta(a, b, theta_prev):
    """Largest theta in [0, theta_prev] with Pred(theta) >= b/2.

    Pred(theta) = theta * a + (1 - theta) * b, where a is the Lagrangian part
    of the predicted reduction and b the feasibility part.  Raises
    InfeasibleTheta when no admissible theta exists (only possible for b < 0,
    which is roundoff noise since restoration does not increase |C|).
    """
    pred_prev = theta_prev * a + (1.0 - theta_prev) * b
    if pred_prev >= b / 2.0:
        return theta_prev, pred_prev
    # Pred(theta) = b + theta*(a-b); a >= b makes it nondecreasing, so falling
    # short at theta_prev means every smaller theta falls short too (b < 0);
    # a < b makes it decreasing and the crossing Pred(theta) = b/2 is the max
    if a >= b or b < 0.0:
        raise InfeasibleTheta("no penalty weight reaches the required reduction "
                              "(a=%.3e, b=%.3e)" % (a, b))
    theta = min(max(b / (2.0 * (b - a)), 0.0), theta_prev)
    return theta, theta * a + (1.0 - theta) * b


def accept_step(ared, pred):
    """Armijo-like acceptance of the merit decrease."""
    return ared >= 0.1 * pred


def find_candidate(net, S, z, mu, r_tan, delta, cfg, space):
    """Optimization phase: a point of the boxed tangent set that does at least
    as well as the broken Cauchy point in the Lagrangian.

    Runs projected gradient on F (its projected direction is a descent
    direction for the Lagrangian on the tangent set) and returns the first
    trial whose Lagrangian passes the decrease test; the Cauchy point itself is
    the fallback and always passes.
    """
    zvec = z.pack()
    rt2 = float(np.linalg.norm(r_tan))
    if rt2 <= 1e-14 * (1.0 + float(np.linalg.norm(zvec))):
        return z

    def L_of(vec):
        return eval_L(net, S, StatePoint.from_vector(vec, S), mu)

    t_break = min(1.0, delta / rt2)
    cauchy_vec = zvec + t_break * r_tan
    L_z = L_of(zvec)
    L_cauchy = L_of(cauchy_vec)
    bound = max(L_cauchy, L_z - cfg.tau1 * delta, L_z - cfg.tau2)

    points = 0
    cur = zvec
    L_cur = L_z
    for _ in range(cfg.inner_iter_cap):
        sp_cur = StatePoint.from_vector(cur, S)
        g_f = grad_F_state(net, S, sp_cur)
        r_v = project(space, cur - g_f) - cur
        if float(np.linalg.norm(r_v)) < cfg.inner_gtol:
            break
        g_l = eval_L_grad(net, S, sp_cur, mu)
        if float(r_v @ g_l) >= 0.0:
            break                      # descent property lost to roundoff
        step = 1.0
        moved = False
        while points < cfg.inner_point_cap and step >= 1e-12:
            trial = cur + step * r_v
            L_trial = L_of(trial)
            points += 1
            if L_trial <= bound:
                return StatePoint.from_vector(trial, S)
            if L_trial < L_cur:
                cur, L_cur = trial, L_trial
                moved = True
                break
            step *= 0.5
        if not moved or points >= cfg.inner_point_cap:
            break

    if L_cauchy <= bound:
        return StatePoint.from_vector(cauchy_vec, S)
    raise NoCandidate("no point passed the decrease test in the current box")


def solve_dap(net, cfg=None, s0=None, mu0=None, sink=None):
    """Adjust demands to observations subject to user equilibrium.

    Parameters
    ----------
    net : Network with observations and target demands
    cfg : IRConfig, defaults used when omitted
    s0 : StatePoint start, defaults to (target demands, 0, 0, 0)
    mu0 : initial multipliers, defaults to zero
    sink : optional callable fed every IterationRecord as it is produced

    Returns a DapResult whose d_final/X_final blocks come from the last
    restored point, so they satisfy the equilibrium system to restoration
    accuracy regardless of how the run ended.
    """
    cfg = cfg or IRConfig()
    S = build_structure(net)
    s = s0.copy() if s0 is not None else initial_state(net)
    if s.max_bound_violation() > 1e-10:
        raise ValueError("initial state violates the sign constraints")
    mu = (np.zeros(S.n_constraints) if mu0 is None
          else np.asarray(mu0, dtype=float).copy())

    theta_hist = [cfg.theta_init]
    delta_prev = cfg.delta0
    history = []
    status = STATUS_MAX_OUTER
    z = None
    outer_done = 0

    for k in range(cfg.max_outer):
        theta_cur = init_penalty(k, theta_hist, cfg.omega)
        z = restore(net, S, s, cfg)
        outer_done = k + 1

        svec = s.pack()
        zvec = z.pack()
        space_free = tangent_space(net, S, z)
        r_tan = cauchy_direction(net, S, z, mu, cfg, space=space_free)
        if check_stop(svec, zvec, r_tan, cfg.eps1, cfg.eps2):
            status = STATUS_CONVERGED
            break

        normC_s = float(np.linalg.norm(eval_C(net, S, s).pack()))
        normC_z = float(np.linalg.norm(eval_C(net, S, z).pack()))
        L_s = eval_L(net, S, s, mu)
        rt_norm = float(np.linalg.norm(r_tan))
        delta = max(cfg.delta_min, delta_prev)

        accepted = False
        for i in range(cfg.max_inner):
            if rt_norm <= 1e-14 * (1.0 + float(np.linalg.norm(zvec))):
                v, mu_trial = z, mu.copy()
            else:
                space_box = tangent_space(net, S, z, box_radius=delta)
                v = find_candidate(net, S, z, mu, r_tan, delta, cfg, space_box)
                mu_trial = trial_multipliers(net, S, v, mu, cfg.M_bound)

            L_v_k = eval_L(net, S, v, mu)
            a = L_s - L_v_k - float(eval_C(net, S, z).pack() @ (mu_trial - mu))
            b = normC_s - normC_z
            try:
                theta_cur, pred = choose_theta(a, b, theta_cur)
                ared = (theta_cur * (L_s - eval_L(net, S, v, mu_trial))
                        + (1.0 - theta_cur) * (normC_s
                                               - float(np.linalg.norm(
                                                   eval_C(net, S, v).pack()))))
                ok = accept_step(ared, pred)
            except InfeasibleTheta:
                pred = theta_cur * a + (1.0 - theta_cur) * b
                ared = math.nan
                ok = False

            rec = IterationRecord(k=k, i=i, normC_s=normC_s, normC_z=normC_z,
                                  L_s=L_s, L_v=L_v_k, theta=theta_cur,
                                  delta=delta, pred=pred, ared=ared,
                                  accepted=ok, F_value=eval_F(net, v.d, v.X),
                                  rtan_norm=rt_norm)
            history.append(rec)
            if sink is not None:
                sink(rec)

            if ok:
                s = v
                mu = mu_trial
                theta_hist.append(theta_cur)
                delta_prev = delta
                accepted = True
                break
            delta *= cfg.shrink
            if delta < 1e-12 * cfg.delta0:
                break

        if not accepted:
            status = STATUS_STALLED
            break

    d_final = z.d.copy() if z is not None else s.d.copy()
    X_final = z.X.copy() if z is not None else s.X.copy()
    return DapResult(d_final=d_final, X_final=X_final,
                     F_final=eval_F(net, d_final, X_final), status=status,
                     history=history, mu_final=mu.copy(),
                     outer_iterations=outer_done)
