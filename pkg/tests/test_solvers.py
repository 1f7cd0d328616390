import itertools
import math

import numpy as np
import pytest

from bwcr.confidence import Hypercube
from bwcr.errors import ConfigError
from bwcr.geometry import Box
from bwcr.lp import solve_dense_lp
from bwcr.objective import LinearObjective, SeparableObjective
from bwcr.solvers import (EllipsoidRegion, HypercubeRegion, LpProblem, degenerate_region,
                          entropic_step, make_oco, ogd_step, solve_lp, solve_ucb_step)


def lp_vertex_oracle(r, c, beta):
    """Enumerate vertices of {p in simplex, C p <= beta}; None if empty."""
    m = r.size
    d = c.shape[0]
    cons = [("p", i) for i in range(m)] + [("c", j) for j in range(d)]
    best = None
    for sub in itertools.combinations(cons, m - 1):
        rows = [np.ones(m)]
        rhs = [1.0]
        for kind, idx in sub:
            if kind == "p":
                e = np.zeros(m)
                e[idx] = 1.0
                rows.append(e)
                rhs.append(0.0)
            else:
                rows.append(c[idx])
                rhs.append(beta)
        mat = np.array(rows)
        if mat.shape[0] != m:
            continue
        try:
            p = np.linalg.solve(mat, np.array(rhs))
        except np.linalg.LinAlgError:
            continue
        if p.min() < -1e-9 or np.any(c @ p > beta + 1e-9):
            continue
        val = float(r @ p)
        if best is None or val > best[0]:
            best = (val, p)
    return best


def test_lp_examples():
    res = solve_lp(LpProblem(np.array([1.0]), np.array([[0.4]]), 0.5))
    assert res.status == "optimal"
    assert np.allclose(res.policy.weights, [1.0])
    assert res.value == pytest.approx(1.0)

    res = solve_lp(LpProblem(np.array([1.0, 0.5]), np.array([[1.0, 0.0]]), 0.5))
    assert np.allclose(res.policy.weights, [0.5, 0.5], atol=1e-12)
    assert res.value == pytest.approx(0.75, abs=1e-12)

    res = solve_lp(LpProblem(np.array([1.0]), np.array([[0.9]]), 0.5))
    assert res.status == "infeasible"


def test_lp_against_vertex_enumeration():
    rng = np.random.default_rng(0)
    for trial in range(150):
        m = int(rng.integers(1, 5))
        d = int(rng.integers(1, 4))
        r = rng.random(m)
        c = rng.random((d, m))
        beta = float(rng.random() * 0.8 + 0.05)
        res = solve_lp(LpProblem(r, c, beta))
        oracle = lp_vertex_oracle(r, c, beta)
        if oracle is None:
            assert res.status == "infeasible"
        else:
            assert res.status == "optimal"
            assert res.value == pytest.approx(oracle[0], abs=1e-9)


def test_lp_duality_certificate():
    rng = np.random.default_rng(1)
    for _ in range(40):
        m, d = 4, 2
        r = rng.random(m)
        c = rng.random((d, m))
        beta = 0.6
        res = solve_dense_lp(r, a_ub=c, b_ub=np.full(d, beta),
                             a_eq=np.ones((1, m)), b_eq=np.ones(1), need_duals=True)
        if res.status != "optimal" or res.y_ub is None:
            continue
        # strong duality: value = y_ub . b + y_eq . 1, dual feasibility for a max LP
        dual_val = float(res.y_ub @ np.full(d, beta)) + float(res.y_eq @ np.ones(1))
        assert dual_val == pytest.approx(res.value, abs=1e-8)
        assert np.all(res.y_ub >= -1e-9)
        slack = res.y_ub @ c + res.y_eq @ np.ones((1, m)) - r
        assert np.all(slack >= -1e-8)


def test_lp_warm_basis_resolve():
    rng = np.random.default_rng(2)
    r = rng.random(4)
    c = rng.random((2, 4))
    first = solve_lp(LpProblem(r, c, 0.5))
    jitter = np.clip(c + rng.normal(0, 0.01, c.shape), 0, 1)
    warm = solve_lp(LpProblem(r, jitter, 0.5), warm_basis=first.basis)
    cold = solve_lp(LpProblem(r, jitter, 0.5))
    assert warm.value == pytest.approx(cold.value, abs=1e-9)


def test_lp_unbounded_detection():
    res = solve_dense_lp(np.array([1.0]), a_ub=np.array([[-1.0]]), b_ub=np.array([0.0]))
    assert res.status == "unbounded"


def test_ucb_step_classic_reduction():
    # degenerate region, linear objective, no constraint: point mass on the
    # best column
    v = np.array([[0.2, 0.9, 0.5]])
    res = solve_ucb_step(degenerate_region(v), LinearObjective(np.array([1.0])), None)
    assert res.feasible
    assert np.allclose(res.policy.weights, [0, 1, 0])
    assert res.objective == pytest.approx(0.9)


def test_ucb_step_infeasible_contract():
    v = np.array([[0.4, 0.6]])
    s = Box(np.array([0.9]), np.array([1.0]))   # unreachable
    res = solve_ucb_step(degenerate_region(v), LinearObjective(np.array([1.0])), s)
    assert not res.feasible
    assert res.policy is None


def test_ucb_step_saddle_vs_grid_small():
    rng = np.random.default_rng(3)
    step = 0.01
    grid = []
    n = round(1 / step)
    for i in range(n + 1):
        for j in range(n + 1 - i):
            grid.append((i * step, j * step, 1 - i * step - j * step))
    grid = np.array(grid)
    for trial in range(6):
        d, m = 2, 3
        v = rng.random((d, m))
        width = rng.random((d, m)) * 0.2
        hc = Hypercube(lcb=np.clip(v - width, 0, 1), ucb=np.clip(v + width, 0, 1))
        region = HypercubeRegion(hc)
        f = SeparableObjective([{"kind": "quad", "weight": 0.5, "center": float(rng.random())}
                                for _ in range(d)])
        p0 = rng.dirichlet(np.ones(m))
        z0 = 0.5 * (hc.lcb + hc.ucb) @ p0
        s = Box(np.clip(z0 - 0.1, 0, 1), np.clip(z0 + 0.1, 0, 1))
        res = solve_ucb_step(region, f, s, method="saddle")
        assert res.feasible
        lo = grid @ hc.lcb.T
        hi = grid @ hc.ucb.T
        vals = np.zeros(grid.shape[0])
        for j, t in enumerate(f.terms):
            y = np.clip(t["center"], lo[:, j], hi[:, j])
            vals += t["weight"] * (1 - (y - t["center"]) ** 2)
        gap = np.maximum(s.lower - hi, 0) + np.maximum(lo - s.upper, 0)
        feas = np.linalg.norm(gap, axis=1) <= 1e-9
        assert feas.any()
        assert abs(res.objective - vals[feas].max()) <= 1e-2


def test_ucb_step_monotone_in_widening():
    rng = np.random.default_rng(4)
    for trial in range(4):
        d, m = 2, 3
        v = rng.random((d, m)) * 0.6 + 0.2
        hc = Hypercube(lcb=np.clip(v - 0.05, 0, 1), ucb=np.clip(v + 0.05, 0, 1))
        wide = Hypercube(lcb=np.clip(v - 0.15, 0, 1), ucb=np.clip(v + 0.15, 0, 1))
        f = SeparableObjective([{"kind": "log1p", "weight": 1.0} for _ in range(d)])
        p0 = rng.dirichlet(np.ones(m))
        z0 = v @ p0
        s = Box(np.clip(z0 - 0.2, 0, 1), np.clip(z0 + 0.2, 0, 1))
        narrow_res = solve_ucb_step(HypercubeRegion(hc), f, s, method="saddle")
        wide_res = solve_ucb_step(HypercubeRegion(wide), f, s, method="saddle")
        assert narrow_res.feasible and wide_res.feasible
        assert wide_res.objective >= narrow_res.objective - 1e-6


def test_ucb_step_lp_matches_saddle_linear():
    rng = np.random.default_rng(5)
    for trial in range(5):
        d, m = 2, 3
        lcb = rng.random((d, m)) * 0.5
        ucb = np.clip(lcb + rng.random((d, m)) * 0.4, 0, 1)
        region = HypercubeRegion(Hypercube(lcb=lcb, ucb=ucb))
        f = LinearObjective(rng.uniform(-0.3, 1.0, d))
        p0 = rng.dirichlet(np.ones(m))
        z0 = 0.5 * (lcb + ucb) @ p0
        s = Box(np.clip(z0 - 0.12, 0, 1), np.clip(z0 + 0.12, 0, 1))
        r_lp = solve_ucb_step(region, f, s, method="lp")
        r_sad = solve_ucb_step(region, f, s, method="saddle")
        assert r_lp.feasible and r_sad.feasible
        assert abs(r_lp.objective - r_sad.objective) <= 1e-2


def test_ucb_step_ellipsoid_region():
    # ellipsoid region with tiny uncertainty behaves like the degenerate one
    from bwcr.confidence import EllipsoidState
    rng = np.random.default_rng(6)
    d, m, n = 2, 3, 2
    contexts = rng.random((d, m, n))
    contexts /= contexts.sum(axis=2, keepdims=True)
    w = rng.uniform(0.2, 0.8, (d, n))
    es = EllipsoidState(d, n, radius_sq=1e-8)
    es.center = w.copy()
    region = EllipsoidRegion(es, contexts)
    v = np.einsum("jin,jn->ji", contexts, w)
    f = LinearObjective(np.ones(d))
    res = solve_ucb_step(region, f, None, method="saddle")
    direct = solve_ucb_step(degenerate_region(v), f, None)
    assert abs(res.objective - direct.objective) <= 1e-3


def test_ogd_step_examples():
    st = make_oco("ogd", 2, radius=1.0, grad_bound=1.0)
    st0 = ogd_step(st, np.zeros(2))
    assert np.allclose(st0.theta, 0.0)
    st1 = ogd_step(st, np.array([2.0, 0.0]))
    assert np.allclose(st1.theta, [-1.0, 0.0])   # radial projection to the unit ball


def test_ogd_regret_small():
    rng = np.random.default_rng(7)
    d, horizon = 3, 4000
    g_bound = math.sqrt(d)
    for trial in range(5):
        st = make_oco("ogd", d, radius=1.0, grad_bound=g_bound)
        grads = rng.uniform(-1, 1, (horizon, d))
        loss = 0.0
        for g in grads:
            loss += float(st.theta @ g)
            st = ogd_step(st, g)
        best = -np.linalg.norm(grads.sum(axis=0))   # best fixed point in hindsight
        assert loss - best <= 1.5 * g_bound * math.sqrt(horizon)


def test_entropic_step_examples():
    st = make_oco("entropic", 2, radius=1.0, grad_bound=1.0)
    st0 = entropic_step(st, np.zeros(2))
    assert np.allclose(st0.theta, 0.0)
    st = make_oco("entropic", 1, radius=0.7, grad_bound=1.0)
    for _ in range(400):
        st = entropic_step(st, np.array([1.0]))
    assert st.theta[0] == pytest.approx(-0.7, abs=1e-2)
    # domain invariant under random sign gradients
    rng = np.random.default_rng(8)
    st = make_oco("entropic", 4, radius=1.3, grad_bound=1.0)
    for _ in range(200):
        st = entropic_step(st, rng.choice([-1.0, 1.0], 4))
        assert np.abs(st.theta).sum() <= 1.3 + 1e-9


def test_oco_kind_validation():
    with pytest.raises(ConfigError):
        make_oco("mirror", 2, 1.0, 1.0)
    st = make_oco("ogd", 2, 1.0, 1.0)
    with pytest.raises(Exception):
        entropic_step(st, np.zeros(2))


def test_lp_problem_validation():
    with pytest.raises(ValueError):
        LpProblem(np.array([1.2]), np.array([[0.5]]), 0.5)
    with pytest.raises(ValueError):
        LpProblem(np.array([0.5]), np.array([[0.5]]), 0.0)
    with pytest.raises(ValueError):
        LpProblem(np.array([0.5]), np.array([[0.5]]), 0.5, eps=1.5)
    LpProblem(np.array([0.5]), np.array([[0.0]]), 0.5, eps=1.0)  # zero-budget limit allowed


def test_ellipsoid_region_min_linear_brute_force():
    from bwcr.confidence import EllipsoidState
    rng = np.random.default_rng(21)
    d, m, n = 2, 3, 2
    contexts = rng.random((d, m, n))
    es = EllipsoidState(d, n)
    for _ in range(30):
        es.update(rng.random((d, n)), rng.random(d))
    region = EllipsoidRegion(es, contexts)
    for _ in range(10):
        theta = rng.standard_normal(d)
        p = rng.dirichlet(np.ones(m))
        val, x, cols = region.min_linear(theta, p)
        assert val == pytest.approx(float(theta @ x), abs=1e-9)
        assert val == pytest.approx(float(cols @ p), abs=1e-9)
        # sampled matrices from the per-component ellipsoids never beat it
        best = math.inf
        for _ in range(4000):
            u = rng.standard_normal((d, n))
            u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-12)
            r_frac = rng.random((d, 1)) ** (1.0 / n)
            w = np.stack([es.center[j] + math.sqrt(es.radius_sq) * r_frac[j]
                          * np.linalg.cholesky(es.gram_inv[j]) @ u[j] for j in range(d)])
            vmat = np.einsum("jin,jn->ji", contexts, w)
            best = min(best, float(theta @ (vmat @ p)))
        assert val <= best + 1e-9
        assert best <= val + 0.05   # the sampled minimum approaches the bound
