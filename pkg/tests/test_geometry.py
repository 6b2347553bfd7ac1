import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neurocert import constraints as cs
from neurocert.geometry import (
    Complement,
    Cylinder,
    Difference,
    Rectangle,
    RegionError,
    SamplingError,
    Sphere,
    Torus,
    Union,
    parse_region,
    sample_boundary,
    sample_interior,
)

UNIT = Rectangle([-1, -1], [1, 1])

REGIONS = {
    "rect": Rectangle([-3, -2], [2.5, 1]),
    "sphere": Sphere([-0.5, 0.5], 0.4),
    "torus": Torus([0, 0], 1, 0.01),
    "union": Union([Sphere([-1, -1], 0.5), Sphere([1, 1], 0.5)]),
    "difference": Difference(Rectangle([-2, -2], [2, 2]), Sphere([0, 0], 1)),
    "complement": Complement(Sphere([0, 0], 0.5), UNIT),
    "nested": Difference(Union([UNIT, Sphere([1, 1], 0.5)]), Rectangle([-0.2, -0.2], [0.2, 0.2])),
}


def test_contains_examples():
    assert Sphere([0, 0], 1).contains(np.array([0.5, 0.0]))
    assert not Torus([0, 0], 0.01, 1).contains(np.array([0.005, 0.0]))
    assert UNIT.contains(np.array([1.0, 1.0]))


def test_torus_argument_order_is_normalised():
    a = Torus([0, 0], 1, 0.01)
    b = Torus([0, 0], 0.01, 1)
    P = np.array([[0.005, 0], [0.5, 0], [1.2, 0]])
    assert np.array_equal(a.contains(P), b.contains(P))
    assert list(a.contains(P)) == [False, True, False]


def test_contains_checks_dimension():
    with pytest.raises(ValueError):
        UNIT.contains(np.zeros(3))


def test_rectangle_bounds_must_be_ordered():
    with pytest.raises(RegionError):
        Rectangle([1, 0], [0, 1])


@pytest.mark.parametrize("name", sorted(REGIONS))
def test_constraints_agree_with_membership(name, rng):
    r = REGIONS[name]
    lb, ub = r.bounding_box()
    P = rng.uniform(lb - 0.5, ub + 0.5, size=(1000, r.dim))
    assert np.array_equal(cs.holds(r.to_constraints(), P), r.contains(P))


def test_sphere_constraint_text():
    assert str(Sphere([0, 0], 0.4).to_constraints()) == "x0^2 + x1^2 - 0.16000000000000003 <= 0"


def test_rectangle_has_four_atoms():
    assert len(cs.atoms(Rectangle([-3, -2], [2.5, 1]).to_constraints())) == 4


def test_difference_negation_reaches_atoms():
    pred = Difference(UNIT, Sphere([0, 0], 0.5)).to_constraints()
    ops = [a.op for a in cs.atoms(pred)]
    assert ops.count(">") == 1 and ops.count("<=") == 4


@pytest.mark.parametrize("name", sorted(REGIONS))
def test_interior_samples_are_members(name, rng):
    r = REGIONS[name]
    batch = sample_interior(r, 500, rng)
    assert batch.points.shape == (500, 2)
    assert np.all(r.contains(batch.points))


def test_interior_samples_in_square(rng):
    P = sample_interior(Rectangle([0, 0], [1, 1]), 100, rng).points
    assert len(P) == 100 and np.all((P >= 0) & (P <= 1))


def test_union_components_both_hit(rng):
    # volume-proportional split: p = 0.09 / (0.09 + 0.36) for the small ball
    small, big = Sphere([-1, -1], 0.3), Sphere([1, 1], 0.6)
    P = sample_interior(Union([small, big]), 1000, rng).points
    k = int(small.contains(P).sum())
    p = 0.3**2 / (0.3**2 + 0.6**2)
    sd = np.sqrt(1000 * p * (1 - p))
    assert abs(k - 1000 * p) < 5 * sd
    assert 0 < k < 1000


def test_zero_radius_sphere_cannot_be_sampled(rng):
    with pytest.raises(SamplingError):
        sample_interior(Sphere([0, 0], 0.0), 10, rng)


def test_sampling_is_seeded():
    a = sample_interior(REGIONS["torus"], 50, np.random.default_rng(7)).points
    b = sample_interior(REGIONS["torus"], 50, np.random.default_rng(7)).points
    assert np.array_equal(a, b)


def test_sphere_boundary_band(rng):
    P = sample_boundary(Sphere([0, 0], 1), 1000, 0.01, rng).points
    assert np.all(np.abs(np.linalg.norm(P, axis=1) - 1) <= 0.01)


def test_torus_boundary_band_touches_both_circles(rng):
    P = sample_boundary(Torus([0, 0], 0.2, 1), 1000, 0.01, rng).points
    r = np.linalg.norm(P, axis=1)
    near_in = np.abs(r - 0.2) <= 0.01
    near_out = np.abs(r - 1) <= 0.01
    assert np.all(near_in | near_out) and near_in.any() and near_out.any()


@pytest.mark.parametrize("dim", [2, 3])
def test_rectangle_boundary_band_and_face_coverage(dim, rng):
    lb, ub = -np.ones(dim), np.array([1.0, 2.0, 3.0][:dim])
    r = Rectangle(lb, ub)
    n, band = 10_000, 0.01
    P = sample_boundary(r, n, band, rng).points
    assert len(P) == n
    assert np.all(r.boundary_distance(P) <= band)
    floor = n / (2 * dim * 4)
    for i in range(dim):
        for face in (lb[i], ub[i]):
            assert np.sum(np.abs(P[:, i] - face) <= band) >= floor


def test_cylinder_boundary_band(rng):
    dom = Rectangle([-2, -2, -1], [2, 2, 1])
    c = Cylinder([0.5, 0.5], 0.3, (0, 1), dom)
    P = sample_boundary(c, 500, 0.01, rng).points
    assert np.all(np.abs(np.linalg.norm(P[:, :2] - 0.5, axis=1) - 0.3) <= 0.01)
    assert np.all((P[:, 2] >= -1) & (P[:, 2] <= 1))


def test_composite_boundary_is_supported(rng):
    P = sample_boundary(REGIONS["difference"], 300, 0.02, rng).points
    d = np.minimum(Rectangle([-2, -2], [2, 2]).boundary_distance(P), Sphere([0, 0], 1).boundary_distance(P))
    assert np.all(d <= 0.02)


def test_boundary_band_must_be_positive(rng):
    with pytest.raises(ValueError):
        sample_boundary(UNIT, 10, 0.0, rng)


# ----------------------------------------------------------------------------
# parsing


def test_parse_shorthand():
    assert isinstance(parse_region("Rectangle([-3, -2], [2.5, 1])"), Rectangle)
    t = parse_region("Torus([0, 0], 1, 0.01)")
    assert isinstance(t, Torus)
    u = parse_region("Sphere([-1,-1],0.3) | Sphere([1,1],0.3)")
    assert isinstance(u, Union)
    d = parse_region("Rectangle([-1,-1],[1,1]) \\ Sphere([0,0],0.5)")
    assert isinstance(d, Difference)


def test_parse_complement_needs_domain():
    with pytest.raises(RegionError):
        parse_region("Complement(Sphere([0,0],0.5))")
    c = parse_region("Complement(Sphere([0,0],0.5))", UNIT)
    assert c.contains(np.array([0.9, 0.9])) and not c.contains(np.array([0.0, 0.0]))


@pytest.mark.parametrize("bad", ["Rectangle([0,0])", "Ball([0,0],1)", "Sphere([0,0],1) |", "Sphere([0,0],-1)"])
def test_parse_rejects_malformed(bad):
    with pytest.raises((RegionError, ValueError)):
        parse_region(bad)


@settings(max_examples=50)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.floats(0.1, 1.0), st.integers(0, 1000))
def test_sphere_samples_and_constraints_property(c, radius, seed):
    s = Sphere(c, radius)
    g = np.random.default_rng(seed)
    P = sample_interior(s, 50, g).points
    assert np.all(s.contains(P))
    Q = g.uniform(np.array(c) - 2 * radius, np.array(c) + 2 * radius, size=(200, 2))
    assert np.array_equal(cs.holds(s.to_constraints(), Q), s.contains(Q))
