"""The algorithm family, each exposed as a stepper: ``step(t)`` returns the
policy to play (or STOP for budgeted variants), ``observe(arm, v)`` ingests
the outcome.  Arm sampling itself lives with the caller so that steppers stay
deterministic given their observation sequence.

Variants:

* ``ucb_bwcr``  - optimistic step over the confidence region (LP or saddle).
* ``ucb_bwk``   - budgeted LP step with shrink factor eps; stops on overrun.
* ``dual_oco``  - linearized dual play driven by an OCO update.
* ``fw_primal`` - conditional-gradient play at the running-average gradient.
* ``fw_bwc``    - constraint-only conditional gradient (Blackwell-style).
* ``combined``  - simplex LP with one dual constraint; dual or primal updates
  for each of the two dual vectors.
* ``greedy_bwk`` - fractional-knapsack ratio rule with an entropic dual.

Tie-breaking everywhere is lowest index; "play anything" fallbacks are the
uniform distribution.  Both choices keep runs reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .confidence import ConfidenceState, EllipsoidState, Hypercube, default_crad, hypercube, vertex
from .core import IDLE, InstanceModel, PolicyDistribution, idle_policy, point_mass, uniform_policy
from .errors import ConfigError
from .geometry import Box, ConvexSet, smoothed_distance
from .objective import NegativeDistance, Objective, SmoothedObjective
from .solvers import (EllipsoidRegion, HypercubeRegion, LpProblem, entropic_step,
                      make_oco, ogd_step, solve_lp, solve_ucb_step)

VARIANTS = ("ucb_bwcr", "ucb_bwk", "dual_oco", "fw_primal", "fw_bwc", "combined", "greedy_bwk")


class _Stop:
    def __repr__(self):
        return "STOP"


STOP = _Stop()


@dataclass
class AlgorithmConfig:
    variant: str
    horizon: int
    objective: Optional[Objective] = None
    constraint_set: Optional[ConvexSet] = None
    budget: Optional[float] = None
    eps: Optional[float] = None
    gamma: Optional[float] = None
    delta: float = 0.05
    oco_kind: str = "ogd"
    theta_update: str = "dual"
    phi_update: str = "dual"
    sigma: Optional[float] = None
    allow_idle: bool = False
    lipschitz: Optional[float] = None
    solver: dict = field(default_factory=dict)
    use_known_means: bool = False

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        f, s = self.objective, self.constraint_set
        v = self.variant
        if v == "ucb_bwcr" and f is None and s is None:
            raise ConfigError("ucb_bwcr needs an objective, a constraint set, or both")
        if v in ("ucb_bwk", "greedy_bwk"):
            if self.budget is None or self.budget <= 0:
                raise ConfigError(f"{v} needs a positive budget")
            if f is not None or s is not None:
                raise ConfigError(f"{v} derives its objective and set from the budget")
        if v == "dual_oco" and (f is None) == (s is None):
            raise ConfigError("dual_oco needs exactly one of objective / constraint set")
        if v == "fw_primal":
            if f is None or s is not None:
                raise ConfigError("fw_primal needs an objective and no constraint set")
            if not math.isfinite(f.smoothness) and self.sigma is None:
                raise ConfigError("fw_primal needs a smooth objective or sigma")
        if v == "fw_bwc" and (s is None or f is not None):
            raise ConfigError("fw_bwc needs a constraint set and no objective")
        if v == "combined":
            if f is None or s is None:
                raise ConfigError("combined needs both an objective and a constraint set")
            for upd, name in ((self.theta_update, "theta_update"), (self.phi_update, "phi_update")):
                if upd not in ("dual", "primal", "primal_smoothed"):
                    raise ConfigError(f"{name} must be dual, primal, or primal_smoothed")
            if self.theta_update == "primal" and not math.isfinite(f.smoothness):
                raise ConfigError("primal theta update needs a smooth objective")
            if "smoothed" in (self.theta_update, self.phi_update) and self.sigma is None:
                raise ConfigError("primal_smoothed updates need sigma")
        if self.oco_kind not in ("ogd", "entropic"):
            raise ConfigError("oco_kind must be ogd or entropic")


def _resolved_gamma(config: AlgorithmConfig, d: int, m: int) -> float:
    if config.gamma is not None:
        return float(config.gamma)
    return default_crad(m, config.horizon, d, config.delta)


def _finite_lipschitz(config: AlgorithmConfig, f: Objective) -> float:
    radius = config.lipschitz if config.lipschitz is not None else f.lipschitz
    if not math.isfinite(radius):
        raise ConfigError("this variant needs a finite Lipschitz constant; "
                          "set lipschitz explicitly for non-Lipschitz objectives")
    return float(radius)


class _StepperBase:
    """Confidence bookkeeping and running-average tracking shared by variants."""

    def __init__(self, config: AlgorithmConfig, instance: InstanceModel):
        config.validate()
        self.config = config
        self.d, self.m = instance.d, instance.m
        self.gamma = _resolved_gamma(config, self.d, self.m)
        self.conf = ConfidenceState(self.d, self.m, self.gamma)
        self._known = instance.mean_matrix.copy() if config.use_known_means else None
        self.xbar: Optional[np.ndarray] = None
        self.steps_seen = 0
        self._pending_x: Optional[np.ndarray] = None
        # policies are immutable; cache the ones played repeatedly
        self._points = [point_mass(self.m, i) for i in range(self.m)]
        self._uniform = uniform_policy(self.m)

    def _hypercube(self) -> Hypercube:
        if self._known is not None:
            return Hypercube(lcb=self._known, ucb=self._known)
        return hypercube(self.conf)

    def _push_xbar(self, x: np.ndarray):
        self.steps_seen += 1
        if self.xbar is None:
            self.xbar = x.copy()
        else:
            self.xbar += (x - self.xbar) / self.steps_seen

    def step(self, t: int):
        raise NotImplementedError

    def observe(self, arm: int, observation: np.ndarray):
        if arm != IDLE:
            self.conf.update(arm, observation)
        if self._pending_x is not None:
            self._push_xbar(self._pending_x)
            self._pending_x = None
        self._after_observe(arm, observation)

    def _after_observe(self, arm: int, observation: np.ndarray):
        pass


class UcbBwcrStepper(_StepperBase):
    """Optimistic play over the confidence region: maximize the best
    region-consistent objective subject to the region touching the target."""

    def __init__(self, config, instance):
        super().__init__(config, instance)
        from .objective import LinearObjective
        self.f = config.objective if config.objective is not None \
            else LinearObjective(np.zeros(instance.d))
        self.s = config.constraint_set
        if config.eps and self.s is not None:
            self.s = self.s.shrink(config.eps)
        self._contextual = instance.contextual is not None
        if self._contextual:
            self.ell = EllipsoidState(self.d, instance.contextual.n)
            self._contexts = instance.contextual.contexts
        self._lip = config.lipschitz if config.lipschitz is not None else self.f.lipschitz
        self._warm = None
        self._workspace: dict = {}
        self.infeasible_steps = 0

    def _region(self):
        if self._contextual and self._known is None:
            return EllipsoidRegion(self.ell, self._contexts)
        return HypercubeRegion(self._hypercube())

    def step(self, t: int):
        region = self._region()
        res = solve_ucb_step(region, self.f, self.s, lipschitz=self._lip,
                             warm=self._warm, workspace=self._workspace,
                             **self.config.solver)
        self._warm = res
        if not res.feasible:
            self.infeasible_steps += 1
            lo, hi = region.intervals(np.full(self.m, 1.0 / self.m))
            self._pending_x = 0.5 * (lo + hi)
            return self._uniform
        self._pending_x = res.x
        return res.policy

    def _after_observe(self, arm, observation):
        if self._contextual and arm != IDLE:
            self.ell.update(self._contexts[:, arm, :], observation)


class UcbBwkStepper(_StepperBase):
    """Budgeted LP step: rewards from row 0 UCBs, consumptions from LCBs of
    rows 1..d-1, budget shrunk by eps; exits once any resource exceeds B."""

    def __init__(self, config, instance):
        super().__init__(config, instance)
        if self.d < 2:
            raise ConfigError("ucb_bwk needs observations with a reward row plus resources")
        self.budget = float(config.budget)
        self.n_res = self.d - 1
        if config.eps is None:
            self.eps = min(0.5, math.sqrt(self.m * self.gamma / self.budget))
        else:
            self.eps = float(config.eps)
        self.budget_spent = np.zeros(self.n_res)
        self.stopped = False
        self._basis = None

    def step(self, t: int):
        if self.stopped or np.any(self.budget_spent > self.budget):
            self.stopped = True
            return STOP
        hc = self._hypercube()
        problem = LpProblem(hc.ucb[0], hc.lcb[1:], self.budget / self.config.horizon, self.eps)
        res = solve_lp(problem, warm_basis=self._basis)
        if res.status != "optimal":
            # unreachable under the feasibility assumption; play safe
            if self.config.allow_idle:
                self._pending_x = np.zeros(self.d)
                return idle_policy(self.m)
            arm = int(np.argmin(hc.lcb[1:].sum(axis=0)))
            pol = point_mass(self.m, arm)
            self._pending_x = np.concatenate([[hc.ucb[0, arm]], hc.lcb[1:, arm]])
            return pol
        self._basis = res.basis
        p = res.policy.weights
        self._pending_x = np.concatenate([[hc.ucb[0] @ p], hc.lcb[1:] @ p])
        return res.policy

    def _after_observe(self, arm, observation):
        if arm != IDLE:
            self.budget_spent += observation[1:]


class DualOcoStepper(_StepperBase):
    """Linearized dual play: pick the arm minimizing theta . (corner column),
    then update theta by an OCO step on f*(theta) - theta . x_t."""

    def __init__(self, config, instance):
        super().__init__(config, instance)
        if config.objective is not None:
            self.f = config.objective
        else:
            self.f = NegativeDistance(config.constraint_set)
        self.radius = _finite_lipschitz(config, self.f)
        grad_bound = math.sqrt(self.d) if config.oco_kind == "ogd" else 1.0
        self.oco = make_oco(config.oco_kind, self.d, self.radius, grad_bound)
        self._x_t = None

    def step(self, t: int):
        hc = self._hypercube()
        corner = vertex(hc, self.oco.theta)
        vals = self.oco.theta @ corner
        arm = int(np.argmin(vals))
        self._pending_x = corner[:, arm].copy()
        self._x_t = self._pending_x
        return self._points[arm]

    def _after_observe(self, arm, observation):
        grad = self.f.conjugate_argmax(self.oco.theta) - self._x_t
        if self.oco.kind == "ogd":
            self.oco = ogd_step(self.oco, grad)
        else:
            self.oco = entropic_step(self.oco, grad)


class FwPrimalStepper(_StepperBase):
    """Conditional-gradient play: maximize (corner column) . grad f(xbar)."""

    def __init__(self, config, instance):
        super().__init__(config, instance)
        if config.sigma is not None and not math.isfinite(config.objective.smoothness):
            self.f: object = SmoothedObjective(config.objective, config.sigma)
            self._grad = self.f.gradient
        else:
            self.f = config.objective
            self._grad = self.f.supergradient
        self._x0: Optional[np.ndarray] = None

    def _base_point(self):
        if self.xbar is not None:
            return self.xbar
        if self._x0 is None:
            self._x0 = self._hypercube().ucb @ np.full(self.m, 1.0 / self.m)
        return self._x0

    def step(self, t: int):
        grad = self._grad(self._base_point())
        hc = self._hypercube()
        corner = vertex(hc, -grad)
        vals = grad @ corner
        arm = int(np.argmax(vals))
        self._pending_x = corner[:, arm].copy()
        return self._points[arm]


class FwBwcStepper(_StepperBase):
    """Constraint-only conditional gradient: steer the running average toward
    the target set along the direction to its projection."""

    def __init__(self, config, instance):
        super().__init__(config, instance)
        self.s = config.constraint_set
        self._x0: Optional[np.ndarray] = None

    def _base_point(self):
        if self.xbar is not None:
            return self.xbar
        if self._x0 is None:
            self._x0 = self._hypercube().ucb @ np.full(self.m, 1.0 / self.m)
        return self._x0

    def step(self, t: int):
        base = self._base_point()
        hc = self._hypercube()
        if self.s.contains(base):
            p = self._uniform
            mid = 0.5 * (hc.lcb + hc.ucb)
            self._pending_x = mid @ p.weights
            return p
        direction = base - self.s.project(base)
        corner = vertex(hc, direction)
        vals = direction @ corner
        arm = int(np.argmin(vals))
        self._pending_x = corner[:, arm].copy()
        return self._points[arm]


def _simplex_one_constraint(cost: np.ndarray, load: np.ndarray, cap: float,
                            allow_idle: bool) -> Optional[np.ndarray]:
    """Exact min of cost . p over the simplex (or sub-simplex when idling is
    allowed) subject to load . p <= cap, by enumerating polytope vertices:
    the zero point, feasible unit vectors, capped singletons, and two-arm
    mixtures that meet the constraint with equality.

    Scalar loops on purpose: arm counts here are small and this sits on the
    per-step hot path.
    """
    m = cost.shape[0]
    tol = 1e-12
    c = cost.tolist()
    a = load.tolist()
    best_val, best_kind = math.inf, None   # ("unit", i) | ("cap", i, mu) | ("mix", i, j, lam) | ("zero",)
    for i in range(m):
        if a[i] <= cap + tol and c[i] < best_val - tol:
            best_val, best_kind = c[i], ("unit", i)
    if allow_idle and cap >= -tol:
        if 0.0 < best_val - tol:
            best_val, best_kind = 0.0, ("zero",)
        for i in range(m):
            if a[i] > cap + tol and a[i] > 0.0:
                mu = cap / a[i]
                v = c[i] * mu
                if v < best_val - tol:
                    best_val, best_kind = v, ("cap", i, mu)
    for i in range(m):
        for j in range(i + 1, m):
            denom = a[i] - a[j]
            if abs(denom) < tol:
                continue
            lam = (cap - a[j]) / denom
            if -tol <= lam <= 1.0 + tol:
                lam = min(max(lam, 0.0), 1.0)
                v = lam * c[i] + (1.0 - lam) * c[j]
                if v < best_val - tol:
                    best_val, best_kind = v, ("mix", i, j, lam)
    if best_kind is None:
        return None
    p = np.zeros(m)
    if best_kind[0] == "unit":
        p[best_kind[1]] = 1.0
    elif best_kind[0] == "cap":
        p[best_kind[1]] = best_kind[2]
    elif best_kind[0] == "mix":
        _, i, j, lam_v = best_kind
        p[i], p[j] = lam_v, 1.0 - lam_v
    return p


class CombinedStepper(_StepperBase):
    """Simplex LP with one dual constraint: minimize
    (theta . corner(theta)) . p subject to (phi . corner(phi)) . p <= h_S(phi).
    Either dual vector can be driven by an OCO update or by the primal
    (gradient / projection-direction) rule."""

    def __init__(self, config, instance):
        super().__init__(config, instance)
        self.f = config.objective
        self.s = config.constraint_set
        self.theta = np.zeros(self.d)
        self.phi = np.zeros(self.d)
        if config.theta_update == "dual":
            radius = _finite_lipschitz(config, self.f)
            gb = math.sqrt(self.d) if config.oco_kind == "ogd" else 1.0
            self.oco_theta = make_oco(config.oco_kind, self.d, radius, gb)
        if config.phi_update == "dual":
            gb = math.sqrt(self.d) if config.oco_kind == "ogd" else 1.0
            self.oco_phi = make_oco(config.oco_kind, self.d, 1.0, gb)
        if config.theta_update == "primal_smoothed":
            self._f_smooth = SmoothedObjective(self.f, config.sigma)
        self.xbar_theta: Optional[np.ndarray] = None
        self.zbar_phi: Optional[np.ndarray] = None
        self._n_obs = 0

    def step(self, t: int):
        hc = self._hypercube()
        w_theta = vertex(hc, self.theta)
        w_phi = vertex(hc, self.phi)
        cost = self.theta @ w_theta
        load = self.phi @ w_phi
        cap = self.s.support(self.phi)
        p = _simplex_one_constraint(cost, load, cap, self.config.allow_idle)
        if p is None:
            pol = self._uniform
        else:
            pol = PolicyDistribution(p, allow_idle=self.config.allow_idle)
        self._x_theta = w_theta @ pol.weights
        self._z_phi = w_phi @ pol.weights
        self._pending_x = self._x_theta
        return pol

    def _after_observe(self, arm, observation):
        self._n_obs += 1
        n = self._n_obs
        self.xbar_theta = self._x_theta.copy() if self.xbar_theta is None \
            else self.xbar_theta + (self._x_theta - self.xbar_theta) / n
        self.zbar_phi = self._z_phi.copy() if self.zbar_phi is None \
            else self.zbar_phi + (self._z_phi - self.zbar_phi) / n

        upd = self.config.theta_update
        if upd == "dual":
            grad = self.f.conjugate_argmax(self.oco_theta.theta) - self._x_theta
            self.oco_theta = (ogd_step if self.oco_theta.kind == "ogd" else entropic_step)(
                self.oco_theta, grad)
            self.theta = self.oco_theta.theta
        elif upd == "primal":
            self.theta = -self.f.supergradient(self.xbar_theta)
        else:
            self.theta = -self._f_smooth.gradient(self.xbar_theta)

        upd = self.config.phi_update
        if upd == "dual":
            grad = self.s.support_point(self.oco_phi.theta) - self._z_phi
            self.oco_phi = (ogd_step if self.oco_phi.kind == "ogd" else entropic_step)(
                self.oco_phi, grad)
            self.phi = self.oco_phi.theta
        elif upd == "primal":
            self.phi = self.zbar_phi - self.s.project(self.zbar_phi)
        else:
            _, self.phi = smoothed_distance(self.zbar_phi, self.s, self.config.sigma)


class GreedyBwkStepper(_StepperBase):
    """Fractional-knapsack rule: play the arm maximizing
    UCB(reward) / (phi . LCB(consumption)) with the largest probability the
    budget row permits; nonpositive denominators are priced at p = 1 and the
    best of those competes with the greedy pick (winning ties).  phi follows
    an entropic OCO update against the budget box."""

    def __init__(self, config, instance):
        super().__init__(config, instance)
        if self.d < 2:
            raise ConfigError("greedy_bwk needs a reward row plus resources")
        self.budget = float(config.budget)
        self.n_res = self.d - 1
        ratio = min(self.budget / config.horizon, 1.0)
        self.s_budget = Box(np.zeros(self.n_res), np.full(self.n_res, ratio))
        self.oco_phi = make_oco("entropic", self.n_res, 1.0, 1.0)
        self.budget_spent = np.zeros(self.n_res)
        self.stopped = False
        self._z_t = np.zeros(self.n_res)

    def step(self, t: int):
        if self.stopped or np.any(self.budget_spent > self.budget):
            self.stopped = True
            return STOP
        hc = self._hypercube()
        ucb_r = hc.ucb[0]
        lcb_c = hc.lcb[1:]
        phi = self.oco_phi.theta
        cap = self.s_budget.support(phi)
        denom = phi @ lcb_c
        free = denom <= 0.0
        best_arm, best_val, best_prob = None, -math.inf, 0.0
        if np.any(~free) and cap >= 0.0:
            ratios = np.where(~free, ucb_r / np.where(free, 1.0, denom), -math.inf)
            arm = int(np.argmax(ratios))
            prob = min(1.0, cap / denom[arm])
            best_arm, best_val, best_prob = arm, ucb_r[arm] * prob, prob
        if np.any(free):
            idx = np.flatnonzero(free)
            arm = int(idx[np.argmax(ucb_r[idx])])
            if ucb_r[arm] >= best_val:
                best_arm, best_val, best_prob = arm, ucb_r[arm], 1.0
        if best_arm is None:
            self._z_t = np.zeros(self.n_res)
            self._pending_x = np.zeros(self.d)
            return idle_policy(self.m)
        w = np.zeros(self.m)
        w[best_arm] = best_prob
        pol = PolicyDistribution(w, allow_idle=True)
        self._z_t = lcb_c @ w
        self._pending_x = np.concatenate([[ucb_r @ w], self._z_t])
        return pol

    def _after_observe(self, arm, observation):
        if arm != IDLE:
            self.budget_spent += observation[1:]
        grad = self.s_budget.support_point(self.oco_phi.theta) - self._z_t
        self.oco_phi = entropic_step(self.oco_phi, grad)


_STEPPERS = {
    "ucb_bwcr": UcbBwcrStepper,
    "ucb_bwk": UcbBwkStepper,
    "dual_oco": DualOcoStepper,
    "fw_primal": FwPrimalStepper,
    "fw_bwc": FwBwcStepper,
    "combined": CombinedStepper,
    "greedy_bwk": GreedyBwkStepper,
}


def make_algorithm(config: AlgorithmConfig, instance: InstanceModel) -> _StepperBase:
    config.validate()
    if instance.contextual is not None and config.variant != "ucb_bwcr" and not config.use_known_means:
        raise ConfigError("contextual instances are supported by the ucb_bwcr variant only")
    return _STEPPERS[config.variant](config, instance)
