import numpy as np
import pytest

from otmap.ot_core import w2_squared
from otmap.synthetic import (
    ProductMeasure,
    coordinate_map,
    make_linear_problem,
    make_separable_problem,
    problem_from_dict,
    sample_pair,
)

PROBLEMS = {
    "linear-2d": lambda: make_linear_problem(2, np.array([[2.0, 0.4], [0.4, 1.0]]), np.array([0.3, -0.1])),
    "linear-3d-truncnorm": lambda: make_linear_problem(
        3, np.diag([1.5, 1.0, 0.7]), support=ProductMeasure((-1,) * 3, (1,) * 3, "truncnorm", (0,) * 3, (0.5,) * 3)
    ),
    "separable-3d": lambda: make_separable_problem(
        3, [coordinate_map("cubic"), coordinate_map("tanh", amp=0.5), coordinate_map("affine", scale=2.0, shift=1.0)]
    ),
}


def test_identity_linear_problem():
    p = make_linear_problem(3)
    assert p.true_w2sq == 0.0
    assert p.is_identity()


def test_linear_1d_true_w2():
    assert make_linear_problem(1, [[2.0]]).true_w2sq == pytest.approx(1 / 3, abs=1e-14)


def test_linear_2d_true_w2():
    assert make_linear_problem(2, np.diag([2.0, 1.0])).true_w2sq == pytest.approx(1 / 3, abs=1e-14)


def test_linear_rejects_non_spd():
    with pytest.raises(ValueError):
        make_linear_problem(2, np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        make_linear_problem(2, np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_separable_identity_and_cubic():
    assert make_separable_problem(2, [coordinate_map("identity")] * 2).true_w2sq == pytest.approx(0.0, abs=1e-15)
    assert make_separable_problem(1, [coordinate_map("cubic")]).true_w2sq == pytest.approx(1 / 63, abs=1e-12)


def test_separable_rejects_decreasing():
    with pytest.raises(ValueError):
        make_separable_problem(1, [coordinate_map("affine", scale=-1.0)])


def test_coordinate_inverse_roundtrip():
    g = coordinate_map("cubic")
    x = np.linspace(0, 1, 1000)
    np.testing.assert_allclose(g.inverse(g(x)), x, atol=1e-10)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_gradient_of_potential_is_map(name, rng):
    p = PROBLEMS[name]()
    x = p.sample_mu(rng, 1000)
    h = 1e-5
    grad = np.column_stack([
        (p.potential(x + h * e) - p.potential(x - h * e)) / (2 * h) for e in np.eye(p.dim)
    ])
    t = p.transport(x)
    assert np.max(np.abs(grad - t) / np.maximum(1.0, np.abs(t))) < 1e-5


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_fenchel_equality_and_inverse(name, rng):
    p = PROBLEMS[name]()
    x = p.sample_mu(rng, 1000)
    t = p.transport(x)
    np.testing.assert_allclose(p.potential(x) + p.conjugate(t), np.sum(x * t, axis=1), atol=1e-8)
    np.testing.assert_allclose(p.conjugate_grad(t), x, atol=1e-8)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_lipschitz_certificate(name, rng):
    p = PROBLEMS[name]()
    a, b = p.sample_mu(rng, 10_000), p.sample_mu(rng, 10_000)
    lhs = np.linalg.norm(p.transport(a) - p.transport(b), axis=1)
    assert np.all(lhs <= p.L * np.linalg.norm(a - b, axis=1) + 1e-12)


def test_sample_pair_reproducible_and_independent():
    p = PROBLEMS["linear-2d"]()
    a1, b1 = sample_pair(p, 30, 40, 7)
    a2, b2 = sample_pair(p, 30, 40, 7)
    np.testing.assert_array_equal(a1.points, a2.points)
    np.testing.assert_array_equal(b1.points, b2.points)
    assert b1.size == 40
    # Y is not T0 of the X sample
    assert not np.allclose(p.transport(a1.points[:30]), b1.points[:30])


def test_sample_pair_target_mean():
    p = PROBLEMS["separable-3d"]()
    _, y = sample_pair(p, 1, 4000, 3)
    x = p.sample_mu(np.random.default_rng(99), 200_000)
    t = p.transport(x)
    mean, sd = t.mean(axis=0), t.std(axis=0)
    assert np.all(np.abs(y.points.mean(axis=0) - mean) < 4 * sd / np.sqrt(4000))


def test_identity_problem_w2_shrinks():
    p = make_linear_problem(2)
    med = [np.median([w2_squared(*sample_pair(p, n, n, (n, r))) for r in range(10)]) for n in (32, 128, 512)]
    assert med[0] > med[1] > med[2]


def test_problem_roundtrip_through_dict():
    for make in PROBLEMS.values():
        p = make()
        q = problem_from_dict(p.to_dict())
        x = p.sample_mu(np.random.default_rng(0), 50)
        np.testing.assert_allclose(q.transport(x), p.transport(x))
        assert q.true_w2sq == pytest.approx(p.true_w2sq)
