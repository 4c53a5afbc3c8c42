import numpy as np
import pytest
from scipy.optimize import linprog

from normglb.lpcore import (
    Infeasible,
    LinearProgram,
    Optimal,
    Unbounded,
    certificate_gap,
    from_rows,
    solve,
    solve_feasibility,
)


def random_lp(rng, max_vars=8, max_rows=8):
    nv, nr = int(rng.integers(1, max_vars + 1)), int(rng.integers(1, max_rows + 1))
    A = rng.integers(-3, 4, (nr, nv)).astype(float)
    b = rng.integers(-2, 6, nr).astype(float)
    c = rng.integers(-3, 4, nv).astype(float)
    senses = tuple(rng.choice(["<=", ">=", "=="], nr))
    upper = np.where(rng.random(nv) < 0.5, rng.integers(1, 5, nv), np.inf)
    return LinearProgram(c, A, senses, b, None, upper)


def scipy_status(lp):
    le = [i for i, s in enumerate(lp.senses) if s == "<="]
    ge = [i for i, s in enumerate(lp.senses) if s == ">="]
    eq = [i for i, s in enumerate(lp.senses) if s == "=="]
    A_ub = np.vstack([lp.A[le], -lp.A[ge]]) if le or ge else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if le or ge else None
    res = linprog(lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=lp.A[eq] if eq else None, b_eq=lp.b[eq] if eq else None,
                  bounds=[(lo, None if np.isinf(u) else u) for lo, u in zip(lp.lower, lp.upper)], method="highs")
    return {0: "optimal", 2: "infeasible", 3: "unbounded"}[res.status], res.fun


def interior_count(lp, x):
    return int(np.sum((x > lp.lower + 1e-9) & (x < lp.upper - 1e-9)))


def test_examples():
    r = solve(from_rows([1.0], [([1.0], ">=", 3.0)]))
    assert isinstance(r, Optimal) and r.x[0] == pytest.approx(3.0)
    lp = from_rows([0.0], [([1.0], "<=", -1.0)])
    r = solve(lp)
    assert isinstance(r, Infeasible)
    lhs, rhs = certificate_gap(lp, r)
    assert lhs >= -1e-7 and rhs < -1e-9
    assert isinstance(solve(from_rows([-1.0], [])), Unbounded)


def test_feasibility_examples():
    r = solve_feasibility(from_rows([0.0], [([1.0], ">=", 1.0), ([1.0], "<=", 2.0)]))
    assert isinstance(r, Optimal) and 1 - 1e-9 <= r.x[0] <= 2 + 1e-9 and r.objective == 0
    lp = from_rows([0.0], [([1.0], ">=", 2.0), ([1.0], "<=", 1.0)])
    r = solve_feasibility(lp)
    assert isinstance(r, Infeasible)
    lhs, rhs = certificate_gap(lp, r)
    assert lhs >= -1e-7 and rhs < -1e-9
    r = solve_feasibility(from_rows([0.0, 0.0], []))
    assert isinstance(r, Optimal) and np.all(r.x == 0)


def test_bad_construction():
    with pytest.raises(ValueError):
        LinearProgram([1.0], [[1.0]], ("<=", "<="), [1.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0], [[np.inf]], ("<=",), [1.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0], [[1.0]], ("<=",), [1.0], [2.0], [1.0])


def test_against_scipy(rng):
    for _ in range(150):
        lp = random_lp(rng)
        ours = solve(lp)
        status, fun = scipy_status(lp)
        assert ours.status == status
        if status == "optimal":
            assert ours.objective == pytest.approx(fun, abs=1e-6)


def test_duality_basicness_and_certificates(rng):
    for _ in range(150):
        lp = random_lp(rng)
        r = solve(lp)
        if isinstance(r, Optimal):
            assert lp.row_violation(r.x) <= 1e-7
            fin = np.isfinite(lp.upper)
            reduced = lp.c - lp.A.T @ r.duals - r.bound_duals
            assert (reduced >= -1e-7).all()
            dual = r.duals @ lp.b + r.bound_duals[fin] @ lp.upper[fin]
            assert dual == pytest.approx(r.objective, abs=1e-6)
            assert interior_count(lp, r.x) <= lp.nrow
        elif isinstance(r, Infeasible):
            lhs, rhs = certificate_gap(lp, r)
            assert lhs >= -1e-7 and rhs < -1e-9


def test_degenerate_lp_terminates():
    # classic cycling example for Dantzig pricing
    c = np.array([-0.75, 150.0, -1 / 50, 6.0])
    A = np.array([[0.25, -60.0, -1 / 25, 9.0], [0.5, -90.0, -1 / 50, 3.0], [0.0, 0.0, 1.0, 0.0]])
    r = solve(LinearProgram(c, A, ("<=",) * 3, [0.0, 0.0, 1.0]))
    assert isinstance(r, Optimal)
    assert r.objective == pytest.approx(-0.05, abs=1e-9)
