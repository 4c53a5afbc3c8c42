import numpy as np
import pytest

from normglb.exact import solve_glb_exact
from normglb.guesses import build_pos_iterative
from normglb.instance import Instance, gen_random
from normglb.lpcore import Optimal, solve
from normglb.maxtopk import (
    MaxTopKGuess,
    NotMaxTopK,
    RoundingCheckError,
    _check_copy_order,
    _fill_copies,
    build_mtop_lp,
    enumerate_guesses,
    guess_from_assignment,
    reduce_k,
    shmoys_tardos_round,
    solve_maxtopk,
)
from normglb.norms import L1, LINF, TopK


def test_reduce_k():
    pos = build_pos_iterative(10, 0.5)
    assert reduce_k(7, pos) == 5
    assert reduce_k(1, pos) == 1
    for k in pos:
        assert reduce_k(k, pos) == k


def test_wrong_shape_rejected():
    with pytest.raises(NotMaxTopK, match="not GLB-MaxTopK"):
        solve_maxtopk(Instance(np.ones((1, 2)), (L1,), LINF))
    with pytest.raises(NotMaxTopK):
        solve_maxtopk(Instance(np.ones((1, 2)), (TopK(1),), L1))


def test_single_cell():
    inst = Instance(np.array([[3.0]]), (TopK(1),), LINF)
    gs = list(enumerate_guesses(inst, 0.2))
    assert {g.o1 for g in gs} == {3.0}
    res = solve_maxtopk(inst)
    assert res.assignment.sigma == (0,)
    assert res.objective == 3.0


def test_guess_stream_shape():
    inst = Instance(np.array([[1.0, 2.0, np.inf], [2.0, 4.0, 5.0]]), (TopK(2), TopK(1)), LINF)
    gs = list(enumerate_guesses(inst, 0.5))
    assert sorted({g.o1 for g in gs}) == [1.0, 2.0, 4.0, 5.0]
    for g in gs:
        assert all(a >= b for a, b in zip(g.exps, g.exps[1:]))


def test_single_machine_lp_value():
    inst = Instance(np.array([[1.0, 2.0, 4.0]]), (TopK(2),), LINF)
    pos = build_pos_iterative(3, 0.5)
    g = MaxTopKGuess(0.5, pos, (reduce_k(2, pos),), 4.0, (4, 2, 0))
    built = build_mtop_lp(inst, g)
    res = solve(built.lp)
    rho2 = g.rho_at(2)
    assert isinstance(res, Optimal)
    assert res.objective == pytest.approx(np.maximum(inst.p[0] - rho2, 0).sum())


def test_high_threshold_gives_zero():
    inst = Instance(np.array([[1.0, 2.0], [2.0, 1.0]]), (TopK(1), TopK(2)), LINF)
    pos = build_pos_iterative(2, 0.2)
    g = MaxTopKGuess(0.2, pos, (1, 2), 2.0, (4, 4))
    res = solve(build_mtop_lp(inst, g).lp)
    assert res.objective == pytest.approx(0.0, abs=1e-12)


def test_size_cut_strands_job():
    inst = Instance(np.array([[1.0, 9.0]]), (TopK(1),), LINF)
    pos = build_pos_iterative(2, 0.2)
    assert build_mtop_lp(inst, MaxTopKGuess(0.2, pos, (1,), 1.0, (0, 0))) is None


def test_integral_point_read_off():
    inst = Instance(np.array([[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]]), (TopK(2), TopK(2)), LINF)
    x = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    assert shmoys_tardos_round(x, inst).sigma == (0, 0, 1)


def test_fractional_rounding_assigns_everyone():
    inst = Instance(np.array([[4.0, 3.0, 2.0, 1.0], [1.0, 2.0, 3.0, 4.0]]), (TopK(2), TopK(2)), LINF)
    x = np.full((2, 4), 0.5)
    a = shmoys_tardos_round(x, inst)
    assert len(a.sigma) == 4
    assert all(x[a.sigma[j], j] > 0 for j in range(4))


def test_copy_order_check_fires():
    inst = Instance(np.array([[5.0, 1.0, 4.0]]), (TopK(1),), LINF)
    pieces = _fill_copies(np.array([[0.5, 1.0, 0.5]]), inst)
    slots = sorted({(i, c) for i, c, _, _ in pieces})
    assert slots == [(0, 0), (0, 1)]
    _check_copy_order(pieces, slots, {0: [2], 1: [1]}, inst)
    # size 5 on the second copy exceeds the first copy's average 4.5
    with pytest.raises(RoundingCheckError):
        _check_copy_order(pieces, slots, {0: [2], 1: [0]}, inst)


def _topk_instances(count, seed):
    rng = np.random.default_rng(seed)
    for s in range(count):
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        yield gen_random(m, n, seed=1000 + s, norm_profile="topk-linf", forbidden_prob=0.2)


def test_ratio_and_lp_bound():
    for inst in _topk_instances(15, 0):
        sigma, opt = solve_glb_exact(inst)
        res = solve_maxtopk(inst, eps=0.2)
        assert res.objective <= (3 + 7 * 0.2) * opt + 1e-9
        g = guess_from_assignment(inst, sigma, 0.2)
        built = build_mtop_lp(inst, g)
        lp_res = solve(built.lp)
        assert isinstance(lp_res, Optimal)
        assert lp_res.objective <= opt + 1e-7


def test_single_machine_exact():
    inst = Instance(np.array([[2.0, 5.0, 1.0, 3.0]]), (TopK(2),), LINF)
    res = solve_maxtopk(inst)
    assert res.objective == pytest.approx(8.0)


def test_lp_budget():
    inst = next(iter(_topk_instances(1, 3)))
    res = solve_maxtopk(inst, max_lps=1)
    assert res.diagnostics["lps_solved"] <= 1
