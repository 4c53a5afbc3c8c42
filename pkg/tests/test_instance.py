import itertools
import json

import numpy as np
import pytest

from normglb.exact import solve_glb_exact
from normglb.instance import (
    Assignment,
    Instance,
    InstanceError,
    NORM_PROFILES,
    assignment_from_dict,
    assignment_to_dict,
    gen_from_set_cover,
    gen_random,
    load_instance,
    loads,
    machine_load,
    normalize,
    objective,
    save_instance,
)
from normglb.norms import L1, LINF, TopK


def two_by_two(outer=LINF):
    return Instance(np.array([[1.0, 2.0], [2.0, 1.0]]), (L1, L1), outer)


def test_machine_load_examples():
    inst = two_by_two()
    a = Assignment((0, 1))
    assert machine_load(inst, a, 0) == 1
    assert machine_load(inst, Assignment((1, 1)), 0) == 0
    top = Instance(np.array([[1.0, 2.0], [2.0, 1.0]]), (TopK(1), L1), LINF)
    assert machine_load(top, Assignment((0, 0)), 0) == 2


def test_objective_examples():
    a = Assignment((0, 1))
    assert objective(two_by_two(LINF), a) == 1
    assert objective(two_by_two(L1), a) == 2
    assert objective(two_by_two(), Assignment((0, 0))) > 0


def test_forbidden_assignment_rejected():
    inst = Instance(np.array([[1.0, np.inf], [2.0, 1.0]]), (L1, L1), LINF)
    with pytest.raises(InstanceError):
        loads(inst, Assignment((0, 0)))
    with pytest.raises(InstanceError):
        loads(inst, Assignment((0,)))


def test_instance_validation():
    with pytest.raises(InstanceError):
        Instance(np.array([[1.0, -1.0]]), (L1,), LINF)
    with pytest.raises(InstanceError):
        Instance(np.array([[1.0, np.nan]]), (L1,), LINF)
    with pytest.raises(InstanceError, match="uncoverable job"):
        Instance(np.array([[1.0, np.inf], [1.0, np.inf]]), (L1, L1), LINF)
    with pytest.raises(InstanceError):
        Instance(np.array([[1.0, 0.0]]), (L1,), LINF)
    with pytest.raises(InstanceError):
        Instance(np.array([[1.0, 1.0]]), (L1, L1), LINF)


def test_gen_random_determinism_and_profiles():
    a = gen_random(2, 2, seed=7)
    b = gen_random(2, 2, seed=7)
    assert a == b
    assert a.allowed.all()
    assert all(nm == L1 for nm in a.inner_norms) and a.outer_norm == LINF
    for prof in NORM_PROFILES:
        inst = gen_random(3, 4, 1, forbidden_prob=0.4, norm_profile=prof)
        assert inst.allowed.any(axis=0).all()
    with pytest.raises(InstanceError):
        gen_random(2, 2, 0, norm_profile="nope")


def min_cover(sets, n):
    for size in range(1, len(sets) + 1):
        for combo in itertools.combinations(sets, size):
            if set().union(*map(set, combo)) >= set(range(n)):
                return size
    raise AssertionError("no cover")


def test_set_cover_examples():
    _, val = solve_glb_exact(gen_from_set_cover([[0, 1], [1, 2], [2]], 3))
    assert val == 2
    _, val = solve_glb_exact(gen_from_set_cover([list(range(4))], 4))
    assert val == 1
    _, val = solve_glb_exact(gen_from_set_cover([[0], [1]], 2))
    assert val == 2
    with pytest.raises(InstanceError):
        gen_from_set_cover([[0]], 2)


def test_set_cover_equivalence_random(rng):
    for _ in range(15):
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        sets = [list(np.flatnonzero(rng.random(n) < 0.5)) for _ in range(m)]
        for j in range(n):
            if not any(j in s for s in sets):
                sets[int(rng.integers(m))].append(j)
        _, val = solve_glb_exact(gen_from_set_cover(sets, n))
        assert val == min_cover(sets, n)


def test_normalize_examples():
    inst = Instance(np.array([[4.0, 1.0]]), (L1,), LINF)
    sc = normalize(inst, 0, 0)
    assert sc.scale == 1 / 8
    assert sc.inst.p[0, 0] == 0.5
    assert sc.inst.psi(0, [0]) == 0.5
    assert normalize(sc.inst, 0, 0).scale == 1
    a = Assignment((0, 0))
    assert objective(sc.inst, a) == pytest.approx(sc.scale * objective(inst, a))


def test_normalize_preserves_optimum(rng):
    for s in range(5):
        inst = gen_random(3, 3, s, norm_profile="mixed")
        sc = normalize(inst, 0, 0)
        assert solve_glb_exact(inst)[0] == solve_glb_exact(sc.inst)[0]


def test_objective_machine_permutation(rng):
    inst = gen_random(3, 4, 3, norm_profile="mixed")
    a = Assignment((0, 1, 2, 1))
    perm = [2, 0, 1]
    inv = np.argsort(perm)
    permuted = Instance(inst.p[perm], tuple(inst.inner_norms[i] for i in perm), inst.outer_norm)
    b = Assignment(tuple(int(inv[i]) for i in a.sigma))
    assert objective(permuted, b) == pytest.approx(objective(inst, a), rel=1e-12)


def test_file_round_trip(tmp_path):
    inst = gen_random(3, 4, 5, forbidden_prob=0.3, norm_profile="mixed")
    path = tmp_path / "i.json"
    save_instance(inst, path)
    assert load_instance(path) == inst
    d = json.loads(path.read_text())
    d["p"][0][0] = -1
    path.write_text(json.dumps(d))
    with pytest.raises(InstanceError):
        load_instance(path)
    d["p"][0] = [None] * 4
    d["p"][1] = [None] * 4
    d["p"][2] = [None] * 4
    path.write_text(json.dumps(d))
    with pytest.raises(InstanceError, match="uncoverable job"):
        load_instance(path)
    path.write_text("{not json")
    with pytest.raises(InstanceError):
        load_instance(path)


def test_assignment_io_is_one_based():
    a = Assignment((0, 2, 1))
    assert assignment_to_dict(a) == {"sigma": [1, 3, 2]}
    assert assignment_from_dict(assignment_to_dict(a)) == a
