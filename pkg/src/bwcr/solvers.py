"""Per-step optimization machinery shared by the bandit algorithms.

Three pieces live here:

* :func:`solve_lp` - the budgeted simplex LP  max r.p  s.t.  C p <= beta 1,
  p in the simplex (the knapsack step), on top of the dense tableau solver.
* :func:`solve_ucb_step` - the optimistic step: maximize
  psi(p) = max over confidence region of f(V~ p)  subject to the region
  touching the target set.  The generic engine runs projected subgradient on
  p against the penalized objective psi(p) - lam * max(g(p), 0) with lam
  doubling from 1 to 2^10, where psi and g are themselves evaluated by inner
  projected gradient over the dual vector (the region enters only through
  the componentwise-minimizing corner).  When the objective is linear and
  the region is an interval hypercube the step is instead solved exactly as
  a small LP in (p, z_reward, z_feasibility).
* OGD and entropic-mirror OCO steps used by the dual algorithms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .confidence import EllipsoidState, Hypercube, vertex
from .core import PolicyDistribution
from .errors import ConfigError, UnsupportedError
from .geometry import Box, ConvexSet, Halfspaces, project_l2_ball, project_simplex
from .lp import solve_dense_lp
from .objective import LinearObjective, Objective, minimize_separable_ball


@dataclass(frozen=True)
class LpProblem:
    """max rewards . p  s.t.  consumption p <= (1-eps) * budget_ratio * 1, p in simplex."""

    rewards: np.ndarray
    consumption: np.ndarray
    budget_ratio: float
    eps: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.rewards, dtype=float)
        c = np.atleast_2d(np.asarray(self.consumption, dtype=float))
        if r.min() < -1e-12 or r.max() > 1.0 + 1e-12 or c.min() < -1e-12 or c.max() > 1.0 + 1e-12:
            raise ValueError("rewards and consumption entries must lie in [0, 1]")
        if self.budget_ratio <= 0.0:
            raise ValueError("budget_ratio must be positive")
        # eps = 1 is the degenerate zero-budget problem (only cost-free arms
        # playable); the budgeted algorithms rely on that limit case
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "consumption", c)


@dataclass
class LpStepResult:
    status: str                           # "optimal" | "infeasible"
    policy: Optional[PolicyDistribution] = None
    value: float = float("nan")
    basis: Optional[list] = None


def solve_lp(problem: LpProblem, warm_basis: Optional[list] = None) -> LpStepResult:
    m = problem.rewards.shape[0]
    beta = (1.0 - problem.eps) * problem.budget_ratio
    res = solve_dense_lp(
        problem.rewards,
        a_ub=problem.consumption,
        b_ub=np.full(problem.consumption.shape[0], beta),
        a_eq=np.ones((1, m)),
        b_eq=np.ones(1),
        basis=warm_basis,
    )
    if res.status != "optimal":
        return LpStepResult(status="infeasible")
    p = np.maximum(res.x, 0.0)
    p /= p.sum()
    return LpStepResult(status="optimal", policy=PolicyDistribution(p),
                        value=res.value, basis=res.basis)


# ---------------------------------------------------------------------------
# confidence regions


class HypercubeRegion:
    """Achievable-set oracle backed by per-entry interval bounds."""

    has_intervals = True

    def __init__(self, hc: Hypercube):
        self.hc = hc
        self.d, self.m = hc.lcb.shape

    def min_linear(self, theta: np.ndarray, p: np.ndarray):
        """min over region matrices of theta . (V~ p); returns
        (value, achieved product x = V~ p, per-arm values theta^T V~)."""
        w = vertex(self.hc, theta)
        cols = theta @ w
        return float(cols @ p), w @ p, cols

    def intervals(self, p: np.ndarray):
        return self.hc.lcb @ p, self.hc.ucb @ p


def degenerate_region(mean_matrix: np.ndarray) -> HypercubeRegion:
    """Zero-width region pinned to the true means (benchmark side)."""
    v = np.asarray(mean_matrix, dtype=float)
    return HypercubeRegion(Hypercube(lcb=v, ucb=v))


class EllipsoidRegion:
    """Achievable-set oracle for contextual instances: per component j the
    row of V~ is x_{j,i} . w~_j with w~_j ranging over a confidence ellipsoid.
    """

    has_intervals = True

    def __init__(self, es: EllipsoidState, contexts: np.ndarray):
        self.es = es
        self.contexts = contexts  # (d, m, n)
        self.d, self.m = contexts.shape[:2]

    def _moments(self, p: np.ndarray):
        c = np.einsum("jin,i->jn", self.contexts, p)       # (d, n)
        mid = np.einsum("jn,jn->j", c, self.es.center)
        quad = np.einsum("ja,jab,jb->j", c, self.es.gram_inv, c)
        half = np.sqrt(self.es.radius_sq * np.maximum(quad, 0.0))
        return c, mid, half, quad

    def min_linear(self, theta: np.ndarray, p: np.ndarray):
        c, mid, half, quad = self._moments(p)
        value = float(theta @ mid - np.abs(theta) @ half)
        x = mid - np.sign(theta) * half
        # worst-case weights per component, for the per-arm inner products
        scale = np.where(quad > 0.0, np.sqrt(self.es.radius_sq / np.maximum(quad, 1e-300)), 0.0)
        w_star = self.es.center - (np.sign(theta) * scale)[:, None] * np.einsum(
            "jab,jb->ja", self.es.gram_inv, c)
        cols = np.einsum("j,jin,jn->i", theta, self.contexts, w_star)
        return value, x, cols

    def intervals(self, p: np.ndarray):
        _, mid, half, _ = self._moments(p)
        return mid - half, mid + half


# ---------------------------------------------------------------------------
# the optimistic step (saddle-point form)


@dataclass
class SaddleResult:
    feasible: bool
    policy: Optional[PolicyDistribution]
    objective: float
    g_value: float
    x: Optional[np.ndarray]                 # region point achieving the objective
    theta_obj: Optional[np.ndarray] = None  # warm-start carriers
    theta_feas: Optional[np.ndarray] = None
    p_last: Optional[np.ndarray] = None
    basis: Optional[list] = None            # warm basis for the lp method


def _eval_psi(region, f: Objective, p, radius, theta0, iters, patience: int = 6):
    """Inner projected gradient for psi(p) = min_theta f*(theta) - min_region
    theta . (V~ p); returns (value, theta, x, per-arm column values)."""
    theta = np.zeros(region.d) if theta0 is None else theta0.copy()
    best = (math.inf, theta.copy(), None, None)
    scale = radius if math.isfinite(radius) and radius > 0 else 1.0
    stall = 0
    for k in range(iters):
        val_min, x, cols = region.min_linear(theta, p)
        val = f.conjugate(theta) - val_min
        if val < best[0] - 1e-12:
            best = (val, theta.copy(), x, cols)
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                break
        grad = f.conjugate_argmax(theta) - x
        theta = theta - (scale / (k + 1.0)) * grad
        if math.isfinite(radius):
            theta = project_l2_ball(theta, radius)
    if best[2] is None:
        _, best_x, best_cols = region.min_linear(best[1], p)
        best = (best[0], best[1], best_x, best_cols)
    return best


def _eval_psi_exact(region, f: Objective, p, radius):
    """Exact inner minimization when f is separable and the region yields
    per-component achievable intervals (1-d convex pieces under an l2 ball)."""
    lo, hi = region.intervals(p)
    fvec = lambda t: f.conjugate_components(t) - np.minimum(t * lo, t * hi)
    theta, val = minimize_separable_ball(fvec, region.d, radius)
    _, x, cols = region.min_linear(theta, p)
    return val, theta, x, cols


def _eval_g(region, s: ConvexSet, p, theta0, iters, patience: int = 6):
    """Inner projected gradient ascent for g(p) = max_{|theta|<=1}
    min_region theta.(V~ p) - h_S(theta); returns (value, theta, cols)."""
    theta = np.zeros(region.d) if theta0 is None else theta0.copy()
    best = (-math.inf, theta.copy(), None)
    stall = 0
    for k in range(iters):
        val_min, x, cols = region.min_linear(theta, p)
        val = val_min - s.support(theta)
        if val > best[0] + 1e-12:
            best = (val, theta.copy(), cols)
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                break
        grad = x - s.support_point(theta)
        theta = project_l2_ball(theta + (1.0 / (k + 1.0)) * grad, 1.0)
    if best[2] is None:
        best = (best[0], best[1], region.min_linear(best[1], p)[2])
    return best


def _feasibility_exact(region, s: ConvexSet, p, tol_feas: float):
    """Exact feasibility verdict for interval regions.

    The achievable set {V~ p} for fixed p is the box of per-component
    intervals, so "region touches S" is a box/box or box/polyhedron
    intersection test; the returned value is an exact distance for box
    targets and a per-row violation measure otherwise (0 when feasible).
    This equals the supremum the inner projected-gradient approaches.
    """
    lo, hi = region.intervals(p)
    if isinstance(s, Box):
        gap = np.maximum(s.lower - hi, 0.0) + np.maximum(lo - s.upper, 0.0)
        val = float(np.linalg.norm(gap))
        return val <= tol_feas, val
    if isinstance(s, Halfspaces):
        lo_c = np.maximum(lo, 0.0)
        hi_c = np.minimum(hi, s.upper)
        if np.any(lo_c > hi_c + 1e-12):
            return False, math.inf
        mins = np.where(s.normals >= 0.0, s.normals * lo_c, s.normals * hi_c).sum(axis=1)
        viol = mins - s.offsets
        row_norms = np.linalg.norm(s.normals, axis=1)
        measure = float(np.max(np.maximum(viol, 0.0) / np.maximum(row_norms, 1e-300)))
        if np.all(viol <= 1e-12):
            if s.k == 1:
                return measure <= tol_feas, measure
            res = solve_dense_lp(
                np.zeros(region.d),
                a_ub=np.vstack([s.normals, np.eye(region.d), -np.eye(region.d)]),
                b_ub=np.concatenate([s.offsets, hi_c, -lo_c]),
            )
            return res.status == "optimal", 0.0 if res.status == "optimal" else math.inf
        return False, measure
    return None, math.nan  # no exact test for this target kind


def _eval_g_strong(region, s: ConvexSet, p, theta0, iters):
    """High-budget dual feasibility evaluation with multiple restarts."""
    starts = [None, theta0]
    lo, hi = region.intervals(p)
    mid = 0.5 * (lo + hi)
    gap = mid - s.project(mid)
    nrm = np.linalg.norm(gap)
    if nrm > 0:
        starts.append(gap / nrm)
    best_val, best_theta = -math.inf, None
    for t0 in starts:
        val, theta, _ = _eval_g(region, s, p, t0, iters, patience=max(50, iters // 4))
        if val > best_val:
            best_val, best_theta = val, theta
    return best_val, best_theta


def _lp_step(region: HypercubeRegion, f: LinearObjective, s, warm_basis=None,
             workspace: Optional[dict] = None):
    """Exact optimistic step for linear f over an interval region.

    Maximizes c . z_r with z_r in the achievable box of p, subject to the
    achievable box touching S; the reward witness and the feasibility
    witness are independent, as in the original step problem.  For a box
    target, or a single halfspace, "box touches S" reduces to rows linear in
    p alone (per-coordinate interval overlap / the sign-matched corner), so
    the witness variables are eliminated; for several halfspaces an explicit
    witness point z_c is kept.

    ``workspace`` caches the constraint-matrix skeleton between calls (only
    the interval blocks change step to step).
    """
    d, m = region.d, region.m
    lmat, umat = region.hc.lcb, region.hc.ucb
    ws = workspace if workspace is not None else {}
    if "a_ub" not in ws:
        # witness elimination is exact for one halfspace when either the clip
        # box is trivial or the normal is sign-definite; else keep z_c explicit
        explicit = isinstance(s, Halfspaces) and not (
            s.k == 1 and (np.all(s.upper >= 1.0 - 1e-12) or np.all(s.normals[0] >= 0.0)))
        nvar = m + d + (d if explicit else 0)
        cost = np.zeros(nvar)
        cost[m:m + d] = f.c
        eye = np.eye(d)
        rows = 2 * d
        rhs = [np.zeros(2 * d)]
        if isinstance(s, Box):
            rows += 2 * d
            rhs.append(np.concatenate([s.upper, -s.lower]))
        elif isinstance(s, Halfspaces) and not explicit:
            clipped = np.flatnonzero(s.upper < 1.0)
            rows += 1 + clipped.size
            rhs.append(s.offsets[:1])
            if clipped.size:
                rhs.append(s.upper[clipped])
            ws["clipped"] = clipped
            ws["a_pos"] = np.maximum(s.normals[0], 0.0)
            ws["a_neg"] = np.minimum(s.normals[0], 0.0)
        elif explicit:
            rows += 2 * d + s.k + d
            rhs.extend([np.zeros(2 * d), np.concatenate([s.offsets, s.upper])])
        elif s is not None:
            raise UnsupportedError("lp step requires a box or halfspace target")
        a_ub = np.zeros((rows, nvar))
        a_ub[:d, m:m + d] = -eye
        a_ub[d:2 * d, m:m + d] = eye
        if isinstance(s, Halfspaces) and explicit:
            zoff = m + d
            a_ub[2 * d:3 * d, zoff:zoff + d] = -eye
            a_ub[3 * d:4 * d, zoff:zoff + d] = eye
            a_ub[4 * d:4 * d + s.k, zoff:zoff + d] = s.normals
            a_ub[4 * d + s.k:, zoff:zoff + d] = eye
        a_eq = np.zeros((1, nvar))
        a_eq[0, :m] = 1.0
        ws.update(a_ub=a_ub, b_ub=np.concatenate(rhs), cost=cost, a_eq=a_eq,
                  explicit=explicit, nvar=nvar)
    a_ub = ws["a_ub"]
    a_ub[:d, :m] = lmat
    a_ub[d:2 * d, :m] = -umat
    if isinstance(s, Box):
        a_ub[2 * d:3 * d, :m] = lmat
        a_ub[3 * d:4 * d, :m] = -umat
    elif isinstance(s, Halfspaces) and not ws["explicit"]:
        a_ub[2 * d, :m] = ws["a_pos"] @ lmat + ws["a_neg"] @ umat
        clipped = ws["clipped"]
        if clipped.size:
            a_ub[2 * d + 1:, :m] = lmat[clipped]
    elif isinstance(s, Halfspaces):
        a_ub[2 * d:3 * d, :m] = lmat
        a_ub[3 * d:4 * d, :m] = -umat
    res = solve_dense_lp(ws["cost"], a_ub=a_ub, b_ub=ws["b_ub"],
                         a_eq=ws["a_eq"], b_eq=np.ones(1), basis=warm_basis)
    if res.status != "optimal":
        return SaddleResult(feasible=False, policy=None, objective=math.nan,
                            g_value=math.inf, x=None)
    p = np.maximum(res.x[:m], 0.0)
    p /= p.sum()
    # report the unconstrained-witness objective psi(p) = max over the box
    lo, hi = region.intervals(p)
    z_r = np.where(f.c >= 0.0, hi, lo)
    return SaddleResult(feasible=True, policy=PolicyDistribution(p),
                        objective=float(f.c @ z_r), g_value=0.0, x=z_r,
                        p_last=p, basis=res.basis)


def solve_ucb_step(region, f: Objective, s: Optional[ConvexSet] = None, *,
                   lipschitz: Optional[float] = None, lam_max: float = 1024.0,
                   outer_iters: int = 200, inner_iters: int = 15,
                   final_iters: int = 1500, tol_feas: float = 1e-6,
                   warm: Optional[SaddleResult] = None, method: str = "auto",
                   step_scale: float = 0.5, workspace: Optional[dict] = None) -> SaddleResult:
    """Optimistic step: maximize psi(p) subject to g(p) <= tol_feas.

    Returns the best feasible iterate found (``feasible=False`` when none
    is); the caller decides what to play in that case.
    """
    radius = f.lipschitz if lipschitz is None else float(lipschitz)
    linear_ok = (isinstance(f, LinearObjective) and isinstance(region, HypercubeRegion)
                 and (s is None or isinstance(s, (Box, Halfspaces))))
    if method == "lp" or (method == "auto" and linear_ok):
        if not linear_ok:
            raise ConfigError("lp method requires linear objective over an interval region")
        warm_basis = getattr(warm, "basis", None) if warm is not None else None
        return _lp_step(region, f, s, warm_basis=warm_basis, workspace=workspace)

    if not math.isfinite(radius):
        raise ConfigError("saddle step needs a finite Lipschitz constant "
                          "(pass lipschitz= explicitly for this objective)")

    m = region.m
    p = warm.p_last.copy() if warm is not None and warm.p_last is not None else np.full(m, 1.0 / m)
    theta_psi = warm.theta_obj if warm is not None else None
    theta_g = warm.theta_feas if warm is not None else None
    candidates: list = []

    lam = 1.0
    while lam <= lam_max:
        for k in range(1, outer_iters + 1):
            psi_val, theta_psi, x_psi, cols_psi = _eval_psi(region, f, p, radius, theta_psi, inner_iters)
            if s is not None:
                g_val, theta_g, cols_g = _eval_g(region, s, p, theta_g, inner_iters)
            else:
                g_val, cols_g = 0.0, np.zeros(m)
            if g_val <= tol_feas:
                candidates.append((psi_val, p.copy()))
            grad = -cols_psi - (lam if g_val > 0.0 else 0.0) * cols_g
            nrm = np.linalg.norm(grad)
            if nrm > 1e-12:
                p = project_simplex(p + (step_scale / (math.sqrt(k) * nrm)) * grad)
        lam *= 2.0

    # walk the recorded near-feasible iterates in objective order; the first
    # one that survives exact feasibility verification is the answer (the
    # cheap inner estimate only lower-bounds g, so high-psi boundary
    # violators are expected to appear first and be rejected here)
    candidates.sort(key=lambda c: -c[0])
    checks = 0
    for _, cand in candidates:
        if s is not None:
            ok, g_val = _feasibility_exact(region, s, cand, tol_feas)
            if ok is None:
                if checks >= 50:
                    break
                checks += 1
                g_val, theta_g = _eval_g_strong(region, s, cand, theta_g, final_iters)
                ok = g_val <= tol_feas
            if not ok:
                continue
        else:
            g_val = 0.0
        if f.is_separable and region.has_intervals:
            psi_val, theta_b, x, _ = _eval_psi_exact(region, f, cand, radius)
        else:
            psi_val, theta_b, x, _ = _eval_psi(region, f, cand, radius, theta_psi, final_iters)
        return SaddleResult(feasible=True, policy=PolicyDistribution(cand),
                            objective=psi_val, g_value=g_val, x=x,
                            theta_obj=theta_b, theta_feas=theta_g, p_last=cand)
    return SaddleResult(feasible=False, policy=None, objective=math.nan,
                        g_value=math.inf, x=None, theta_obj=theta_psi,
                        theta_feas=theta_g, p_last=p)


# ---------------------------------------------------------------------------
# online convex optimization steps


@dataclass(frozen=True)
class OcoState:
    """Dual-vector state for the OCO reductions.

    ``radius`` is the dual-ball radius (the Lipschitz constant), ``grad_bound``
    the norm bound G used by the step-size schedule (Euclidean for OGD,
    sup-norm for the entropic update).
    """

    theta: np.ndarray
    radius: float
    grad_bound: float
    kind: str = "ogd"
    t: int = 0
    weights: Optional[np.ndarray] = None   # entropic: 2d signed-coordinate weights

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


def make_oco(kind: str, d: int, radius: float, grad_bound: float) -> OcoState:
    if kind == "ogd":
        return OcoState(theta=np.zeros(d), radius=radius, grad_bound=grad_bound, kind="ogd")
    if kind == "entropic":
        return OcoState(theta=np.zeros(d), radius=radius, grad_bound=grad_bound,
                        kind="entropic", weights=np.full(2 * d, 0.5 / d))
    raise ConfigError(f"unknown oco kind {kind!r}")


def ogd_step(state: OcoState, grad: np.ndarray) -> OcoState:
    """theta' = Proj_{|.|_2 <= radius}(theta - eta_t grad), eta_t = (L/G)/sqrt(t)."""
    if state.kind != "ogd":
        raise UnsupportedError("ogd_step called on a non-OGD state")
    t = state.t + 1
    eta = (state.radius / state.grad_bound) / math.sqrt(t)
    theta = project_l2_ball(state.theta - eta * np.asarray(grad, dtype=float), state.radius)
    return OcoState(theta=theta, radius=state.radius, grad_bound=state.grad_bound,
                    kind="ogd", t=t)


def entropic_step(state: OcoState, grad: np.ndarray) -> OcoState:
    """Exponentiated-gradient update over 2d signed coordinates; keeps theta
    on the l1 ball of the given radius (for the (linf, l1) norm pair)."""
    if state.kind != "entropic" or state.weights is None:
        raise UnsupportedError("entropic_step called on a non-entropic state")
    grad = np.asarray(grad, dtype=float)
    d = state.dim
    t = state.t + 1
    eta = math.sqrt(math.log(2 * d) / t) / (state.radius * state.grad_bound)
    scores = state.radius * np.concatenate([grad, -grad])
    w = state.weights * np.exp(-eta * scores)
    w = w / w.sum()
    theta = state.radius * (w[:d] - w[d:])
    return OcoState(theta=theta, radius=state.radius, grad_bound=state.grad_bound,
                    kind="entropic", t=t, weights=w)
