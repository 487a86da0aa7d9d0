import itertools

import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from plategfem.assembly import assemble_load, assemble_stiffness, energy_value
from plategfem.errors import DataError
from plategfem.experiments import get_example
from plategfem.gfem_space import GfemSpace, SmoothFunction, interpolate
from plategfem.obstacle_solver import (
    BACKENDS,
    BoxConstraints,
    PdasOptions,
    build_constraints,
    check_kkt,
    pdas,
    solve_fixed,
    write_iteration_log,
)


def problem(example, level, space="q2"):
    ex = get_example(example)
    sp = GfemSpace.build(ex.domain, level, space=space)
    K = assemble_stiffness(sp)
    F = assemble_load(sp, ex.f)
    return ex, sp, K, F, build_constraints(sp, ex.psi, None, ex.g)


def exhaustive(K, F, box):
    """Minimum over all faces of the box: hold a subset of DOFs at a bound, solve densely."""
    K = K.toarray() if sps.issparse(K) else np.asarray(K)
    n = F.size
    fixed = np.zeros(n, dtype=bool)
    fixed[box.fixed_ids] = True
    cons = box.constrained_ids
    choices = []
    for i in cons:
        opts = [None]
        if np.isfinite(box.lower[i]):
            opts.append(box.lower[i])
        if np.isfinite(box.upper[i]):
            opts.append(box.upper[i])
        choices.append(opts)
    best, best_e = None, np.inf
    for pick in itertools.product(*choices):
        u = np.zeros(n)
        u[box.fixed_ids] = box.fixed_values
        held = fixed.copy()
        for i, v in zip(cons, pick):
            if v is not None:
                u[i] = v
                held[i] = True
        fr = ~held
        u[fr] = np.linalg.solve(K[np.ix_(fr, fr)], F[fr] - K[np.ix_(fr, held)] @ u[held])
        if np.all(u[cons] >= box.lower[cons] - 1e-12) and np.all(u[cons] <= box.upper[cons] + 1e-12):
            e = 0.5 * u @ K @ u - F @ u
            if e < best_e:
                best, best_e = u, e
    return best


# ---------------------------------------------------------------- solve_fixed


def test_solve_fixed_zero_and_all_fixed():
    K = sps.identity(4, format="csr") * 2.0
    assert np.all(solve_fixed(K, np.zeros(4), {}) == 0.0)
    u = solve_fixed(K, np.ones(4), {0: 1.0, 1: 2.0, 2: 3.0, 3: 4.0})
    assert np.array_equal(u, [1.0, 2.0, 3.0, 4.0])


@pytest.mark.parametrize("backend", BACKENDS)
def test_solve_fixed_matches_dense(backend, rng):
    B = rng.normal(size=(5, 5))
    K = B @ B.T + 5 * np.eye(5)
    F = rng.normal(size=5)
    u = solve_fixed(sps.csr_matrix(K), F, ([1, 3], [0.5, -2.0]), backend=backend)
    fr = [0, 2, 4]
    ref = np.zeros(5)
    ref[[1, 3]] = [0.5, -2.0]
    ref[fr] = np.linalg.solve(K[np.ix_(fr, fr)], F[fr] - K[np.ix_(fr, [1, 3])] @ [0.5, -2.0])
    assert np.max(np.abs(u - ref)) <= 1e-12 * max(1, np.abs(ref).max())


# ----------------------------------------------------------- build_constraints


def test_build_constraints_bounds_and_boundary():
    ex = get_example(2)
    sp = GfemSpace.build(ex.domain, 2)
    box = build_constraints(sp, ex.psi)
    ids = sp.dofs.constrained
    assert np.allclose(box.lower[ids], ex.psi(sp.dofs.node[ids]), rtol=0, atol=1e-15)
    assert ex.psi(np.array([[0.0, 0.0]]))[0] == 1.0
    assert np.all(np.isinf(np.delete(box.lower, ids)))
    assert np.all(np.isinf(box.upper))
    assert np.all(box.fixed_values == 0.0)
    assert set(box.fixed_ids) == set(np.flatnonzero(sp.dofs.is_boundary))


def test_build_constraints_without_obstacle():
    sp = GfemSpace.build(get_example(1).domain, 1)
    box = build_constraints(sp)
    assert box.constrained_ids.size == 0


def test_crossing_obstacles_are_rejected():
    ex = get_example(2)
    sp = GfemSpace.build(ex.domain, 2)
    with pytest.raises(DataError, match="node"):
        build_constraints(sp, ex.psi, ex.psi - SmoothFunction.polynomial(np.array([[0.01]])))


def test_fixed_dofs_cannot_carry_bounds():
    with pytest.raises(DataError):
        BoxConstraints(np.zeros(3), np.full(3, np.inf), [0], [0.0])


def test_bad_complementarity_parameter():
    with pytest.raises(ValueError):
        PdasOptions(c=0.0)


# ------------------------------------------------------------------------ PDAS


@pytest.mark.parametrize("example,level", [(1, 1), (2, 1), (3, 1), (4, 1)])
def test_pdas_matches_exhaustive_search(example, level):
    _, sp, K, F, box = problem(example, level)
    if box.constrained_ids.size > 12:
        pytest.skip("too many faces")
    res = pdas(K, F, box)
    ref = exhaustive(K, F, box)
    assert res.converged
    assert np.max(np.abs(res.u - ref)) <= 1e-10 * max(1, np.abs(ref).max())
    assert check_kkt(K, F, box, res).passed


@st.composite
def random_box_problem(draw):
    n = draw(st.integers(2, 6))
    seed = draw(st.integers(0, 2**31 - 1))
    r = np.random.default_rng(seed)
    B = r.normal(size=(n, n))
    K = B @ B.T + 0.5 * np.eye(n)
    F = r.normal(size=n) * 3
    lo = r.normal(size=n)
    up = lo + r.uniform(0.1, 2.0, size=n)
    lo[r.random(n) < 0.3] = -np.inf
    up[r.random(n) < 0.3] = np.inf
    return K, F, BoxConstraints(lo, up, [], [])


@given(random_box_problem())
@settings(max_examples=60, deadline=None)
def test_pdas_random_two_sided_boxes(data):
    K, F, box = data
    res = pdas(sps.csr_matrix(K), F, box)
    ref = exhaustive(K, F, box)
    assert res.converged
    assert np.max(np.abs(res.u - ref)) <= 1e-9 * max(1, np.abs(ref).max())
    assert np.all(res.lam[res.lower_active] >= -1e-9 * max(1, np.abs(F).max()))
    assert np.all(res.lam[res.upper_active] <= 1e-9 * max(1, np.abs(F).max()))


def test_two_sided_against_qp_route():
    from cvxopt import matrix, solvers

    ex, sp, K, F, box = problem(2, 3)
    box.upper[box.constrained_ids] = box.lower[box.constrained_ids] + 0.05
    res = pdas(K, F, box)
    assert res.converged and res.upper_active.any() and res.lower_active.any()
    free = np.setdiff1d(np.arange(sp.ndof), box.fixed_ids)
    Kd = K.toarray()[np.ix_(free, free)]
    cons = np.searchsorted(free, box.constrained_ids)
    G = np.zeros((2 * cons.size, free.size))
    G[np.arange(cons.size), cons] = -1.0
    G[cons.size + np.arange(cons.size), cons] = 1.0
    h = np.concatenate([-box.lower[box.constrained_ids], box.upper[box.constrained_ids]])
    solvers.options.update(show_progress=False, abstol=1e-12, reltol=1e-12, feastol=1e-12)
    sol = solvers.qp(matrix(Kd), matrix(-F[free]), matrix(G), matrix(h))
    assert np.max(np.abs(np.array(sol["x"]).ravel() - res.u[free])) <= 1e-6


def test_no_bounds_equals_solve_fixed():
    ex, sp, K, F, box = problem(1, 2)
    free_box = BoxConstraints.free(sp.ndof, box.fixed)
    res = pdas(K, F, free_box)
    assert res.iterations == 1 and res.converged
    assert np.max(np.abs(res.u - solve_fixed(K, F, box.fixed))) <= 1e-12


def test_far_obstacle_is_never_active():
    ex, sp, K, F, box = problem(1, 2)
    box.lower[box.constrained_ids] = -100.0
    res = pdas(K, F, box)
    assert res.converged and not res.lower_active.any() and res.iterations == 1


@pytest.fixture(scope="module")
def ex1_level4():
    ex, sp, K, F, box = problem(1, 4)
    return ex, sp, K, F, box, pdas(K, F, box)


def test_kkt_check(ex1_level4):
    ex, sp, K, F, box, res = ex1_level4
    assert res.converged
    assert check_kkt(K, F, box, res, tol=1e-8).passed
    assert check_kkt(K, F, box, res.u, tol=1e-8).passed
    bad = res.u.copy()
    i = np.setdiff1d(np.flatnonzero(~res.lower_active), box.fixed_ids)[7]
    bad[i] += 1e-3
    rep = check_kkt(K, F, box, bad, tol=1e-8)
    assert not rep.passed and rep.stationarity > 1e-8 * rep.scale


def test_variational_inequality_sampling(ex1_level4, rng):
    ex, sp, K, F, box, res = ex1_level4
    u = res.u
    r = K @ u - F
    scale = max(1.0, np.abs(F).max(), (abs(K) @ np.abs(u)).max())
    cons = box.constrained_ids
    free = np.setdiff1d(np.arange(sp.ndof), box.fixed_ids)
    G0 = energy_value(K, F, u)
    for _ in range(100):
        v = u.copy()
        v[free] += rng.normal(size=free.size) * 10.0 ** rng.uniform(-4, 0)
        v[cons] = np.maximum(v[cons], box.lower[cons])
        assert r @ (v - u) >= -1e-8 * scale * max(1.0, np.abs(v - u).max())
        assert energy_value(K, F, v) >= G0 - 1e-12 * abs(G0)


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_discrete_minimum_below_interpolant(level):
    ex, sp, K, F, box = problem(1, level)
    res = pdas(K, F, box)
    pu = interpolate(sp, ex.exact)
    assert np.all(pu[box.constrained_ids] >= box.lower[box.constrained_ids] - 1e-14)
    assert energy_value(K, F, res.u) <= energy_value(K, F, pu) + 1e-13


def test_warm_start_converges_at_once(ex1_level4):
    ex, sp, K, F, box, res = ex1_level4
    again = pdas(K, F, box, initial=(res.lower_active, res.upper_active))
    assert again.iterations == 1 and again.converged
    assert np.max(np.abs(again.u - res.u)) <= 1e-12


def test_deterministic(ex1_level4):
    ex, sp, K, F, box, res = ex1_level4
    again = pdas(K, F, box)
    assert again.history == res.history
    assert np.array_equal(again.u, res.u)


def test_backends_agree():
    ex, sp, K, F, box = problem(2, 3)
    a = pdas(K, F, box, PdasOptions(backend="cholmod"))
    b = pdas(K, F, box, PdasOptions(backend="superlu"))
    assert a.iterations == b.iterations
    assert np.array_equal(a.lower_active, b.lower_active)
    assert np.max(np.abs(a.u - b.u)) <= 1e-10


def test_cycling_falls_back_to_projected_newton():
    ex, sp, K, F, box = problem(1, 2, "q3")
    res = pdas(K, F, box)
    assert res.method == "pdas+projected-newton"
    assert res.converged and check_kkt(K, F, box, res).passed
    no_fb = pdas(K, F, box, PdasOptions(fallback=False))
    assert not no_fb.converged
    assert np.max(np.abs(exhaustive_lower_check(K, F, box, res))) <= 1e-9


def exhaustive_lower_check(K, F, box, res):
    # the fallback solution is the face solve of its own active set
    held = res.lower_active.copy()
    held[box.fixed_ids] = True
    u = res.u.copy()
    return u - solve_fixed(K, F, (np.flatnonzero(held), u[held]))


def test_iteration_log(tmp_path, ex1_level4):
    import csv

    res = ex1_level4[-1]
    path = write_iteration_log(res, tmp_path / "log.csv")
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == res.iterations
    assert [int(r["iteration"]) for r in rows] == list(range(1, res.iterations + 1))
    assert int(rows[-1]["lower_active"]) == int(res.lower_active.sum())
