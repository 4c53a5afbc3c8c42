import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from normglb.instance import random_norm
from normglb.norms import (
    L1,
    LINF,
    LpNorm,
    MaxOf,
    Ordered,
    Scaled,
    TopK,
    eval_norm,
    majorization_ratio,
    norm_from_dict,
    restrict,
    sorted_desc,
    top_k,
    top_k_threshold,
)

FAMILY = [L1, LINF, LpNorm(2.0), LpNorm(1.5), TopK(1), TopK(3), Ordered((3.0, 2.0, 0.5)),
          Scaled(2.0, TopK(2)), MaxOf((Scaled(2.0, TopK(1)), TopK(3)))]

vectors = arrays(np.float64, st.integers(1, 12), elements=st.floats(0, 10, allow_nan=False))


def test_eval_examples():
    assert eval_norm(L1, [1, 2, 3]) == 6
    assert eval_norm(MaxOf((Scaled(2, TopK(1)), TopK(3))), [1, 1, 1]) == 3
    assert eval_norm(TopK(2), [3, 1, 2]) == 5


def test_eval_rejects_bad_input():
    with pytest.raises(ValueError):
        eval_norm(L1, [1, -1])
    with pytest.raises(ValueError):
        eval_norm(L1, [1, math.nan])
    with pytest.raises(ValueError):
        eval_norm(L1, [math.inf])


def test_top_k_examples():
    assert top_k([3, 1, 2], 2) == 5
    assert top_k([0, 0, 0], 2) == 0
    assert top_k([5], 3) == 5


def test_top_k_threshold_examples():
    assert top_k_threshold([3, 1, 2], 2, 2) == 5
    assert top_k_threshold([3, 1, 2], 2, 0) == 6
    assert top_k_threshold([3, 1, 2], 2, 10) == 20


def test_restrict_examples():
    assert restrict([3, 1, 2], [0, 2]).tolist() == [3, 0, 2]
    assert restrict([3, 1, 2], []).tolist() == [0, 0, 0]
    assert restrict([3, 1, 2], [0, 1, 2]).tolist() == [3, 1, 2]
    with pytest.raises(IndexError):
        restrict([3, 1, 2], [3])


def test_majorization_examples():
    assert majorization_ratio([1, 2], [1, 2]) == 1
    assert majorization_ratio([2, 0], [1, 1]) == 2
    assert majorization_ratio([0, 0], [1, 1]) == 0
    assert majorization_ratio([1, 0], [0, 0]) == math.inf


def test_sorted_desc_is_stable():
    assert sorted_desc([1, 3, 3, 2]).tolist() == [3, 3, 2, 1]


def test_spec_validation():
    with pytest.raises(ValueError):
        TopK(0)
    with pytest.raises(ValueError):
        Ordered((1.0, 2.0))
    with pytest.raises(ValueError):
        Ordered((0.0,))
    with pytest.raises(ValueError):
        LpNorm(0.5)
    with pytest.raises(ValueError):
        Scaled(0.0, L1)
    with pytest.raises(ValueError):
        MaxOf(())


@pytest.mark.parametrize("spec", FAMILY)
def test_dict_round_trip(spec):
    assert norm_from_dict(spec.to_dict()) == spec


def test_norm_from_dict_errors():
    with pytest.raises(ValueError):
        norm_from_dict({"kind": "bogus"})
    with pytest.raises(ValueError):
        norm_from_dict({"kind": "topk"})


def test_batch_evaluation_matches_rows(rng):
    U = rng.uniform(0, 5, (7, 6))
    for spec in FAMILY:
        batch = spec.evaluate(U)
        assert np.allclose(batch, [spec.evaluate(u) for u in U], rtol=1e-12)


@given(vectors, st.integers(1, 15))
def test_threshold_identity_at_kth_entry(u, k):
    kk = min(k, u.size)
    t = sorted_desc(u)[kk - 1]
    assert top_k_threshold(u, kk, t) == pytest.approx(top_k(u, kk), rel=1e-12, abs=1e-12)


@given(vectors, st.integers(1, 15))
def test_threshold_is_upper_bound(u, k):
    grid = np.concatenate([u, np.linspace(0, 10, 50)])
    vals = [top_k_threshold(u, k, t) for t in grid]
    assert min(vals) >= top_k(u, k) - 1e-9
    assert min(vals) == pytest.approx(top_k(u, k), abs=1e-9)


@pytest.mark.parametrize("spec", FAMILY)
@given(u=vectors, data=st.data())
def test_norm_axioms(spec, u, data):
    f = spec.evaluate
    assert f(np.zeros_like(u)) == 0
    perm = np.array(data.draw(st.permutations(range(u.size))))
    assert f(u[perm]) == pytest.approx(f(u), rel=1e-12, abs=1e-12)
    bump = data.draw(arrays(np.float64, u.size, elements=st.floats(0, 3)))
    assert f(u + bump) >= f(u) - 1e-9
    v = data.draw(arrays(np.float64, u.size, elements=st.floats(0, 10)))
    assert f(u + v) <= f(u) + f(v) + 1e-9
    assert f(2.5 * u) == pytest.approx(2.5 * f(u), rel=1e-9, abs=1e-12)


def test_majorization_bound_random(rng):
    for _ in range(300):
        d = int(rng.integers(1, 15))
        u, v = rng.uniform(0, 10, d), rng.uniform(0, 10, d)
        spec = random_norm(rng, d)
        a = majorization_ratio(u, v)
        assert eval_norm(spec, u) <= a * eval_norm(spec, v) * (1 + 1e-9)
