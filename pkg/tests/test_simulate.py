import csv

import numpy as np
import pytest

from neurocert import expr as ex
from neurocert.certificate import Kind, Problem
from neurocert.geometry import Rectangle, Sphere, Torus
from neurocert.simulate import (
    check_property,
    contour_grid,
    integrate,
    integrate_batch,
    write_contour_csv,
    write_trajectory_csv,
)


def test_decay_matches_closed_form():
    tr = integrate(ex.VectorField.parse(["-x0"]), [1.0], dt=1e-3, T=1.0)
    assert len(tr.states) == 1001 and not tr.blew_up
    assert tr.states[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-12)


@pytest.mark.parametrize("field, x0, exact", [
    (["-x0"], [1.0], lambda t: [np.exp(-t)]),
    (["x1", "-x0"], [1.0, 0.0], lambda t: [np.cos(t), -np.sin(t)]),
    (["-x0^2"], [1.0], lambda t: [1 / (1 + t)]),
])
def test_rk4_fourth_order(field, x0, exact):
    f = ex.VectorField.parse(field)
    errs = []
    for dt in (0.1, 0.05):
        tr = integrate(f, x0, dt=dt, T=2.0)
        errs.append(np.max(np.abs(tr.states[-1] - exact(2.0))))
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.2)


def test_blow_up_is_reported():
    tr = integrate(ex.VectorField.parse(["x0^2"]), [1.0], dt=1e-3, T=5.0)
    assert tr.blew_up
    assert tr.times[-1] <= 1.01  # solution 1/(1-t) escapes at t=1
    assert np.all(np.isfinite(tr.states))


def test_batch_matches_single():
    f = ex.VectorField.parse(["x1", "-x0 - 0.5*x1"])
    X0 = np.array([[1.0, 0.0], [0.0, -1.0]])
    XT, blew = integrate_batch(f, X0, 1e-2, 1.0)
    assert not blew.any()
    for i in range(2):
        assert np.allclose(integrate(f, X0[i], 1e-2, 1.0).states[-1], XT[i], atol=1e-14)


def test_open_loop_rejected():
    with pytest.raises(ValueError):
        integrate(ex.VectorField.parse(["u0"], 1), [0.0])
    with pytest.raises(ValueError):
        integrate(ex.VectorField.parse(["-x0"]), [0.0], dt=0.0)


def _stable():
    return ex.VectorField.parse(["-x0", "-x1"])


def test_clean_roa_check(rng):
    p = Problem(Kind.ROA, _stable(), {"domain": Rectangle([-1, -1], [1, 1]), "init": Sphere([0.5, 0], 0.2)})
    v = check_property(p, p.dynamics, n_init=50, dt=1e-2, T=20.0, rng=rng,
                       certificates={"V": ex.parse("x0^2 + x1^2", 2)})
    assert v.clean and v.n_arrive_successes == 50 and v.n_lyapunov_increases == 0


def test_unstable_flow_fails_arrival(rng):
    f = ex.VectorField.parse(["x0", "x1"])
    p = Problem(Kind.ROA, f, {"domain": Rectangle([-1, -1], [1, 1]), "init": Sphere([0.5, 0], 0.2)})
    v = check_property(p, f, n_init=20, dt=1e-2, T=2.0, rng=rng)
    assert not v.clean and v.n_arrive_successes == 0 and "arrive" in v.witnesses


def test_safety_violation_counted(rng):
    # drift to the right straight into the unsafe ball
    f = ex.VectorField.parse(["1 + 0*x0", "0*x1"])
    p = Problem(Kind.SAFETY, f, {"domain": Rectangle([-2, -2], [2, 2]), "init": Sphere([-1, 0], 0.1),
                                 "unsafe": Sphere([0.5, 0], 0.3)})
    v = check_property(p, f, n_init=30, dt=1e-2, T=3.0, rng=rng)
    assert v.n_avoid_violations == 30 and not v.clean
    assert p.regions["init"].contains(v.witnesses["avoid"])


def test_rwa_leaving_safe_set(rng):
    f = ex.VectorField.parse(["1 + 0*x0", "0*x1"])
    p = Problem(Kind.RWA, f, {"domain": Rectangle([-2, -2], [2, 2]), "init": Sphere([-1, 0], 0.1),
                              "safe": Rectangle([-1.5, -1.5], [0.5, 1.5]), "goal": Sphere([1.5, 1.5], 0.1)})
    v = check_property(p, f, n_init=10, dt=1e-2, T=3.0, rng=rng)
    assert v.n_avoid_violations == 10 and v.n_arrive_successes == 0


def test_rar_remain_violation(rng):
    # passes through the goal, then leaves the final set
    f = ex.VectorField.parse(["1 + 0*x0", "0*x1"])
    p = Problem(Kind.RAR, f, {"domain": Rectangle([-3, -2], [3, 2]), "init": Sphere([-1, 0], 0.1),
                              "safe": Rectangle([-2.9, -1.9], [2.9, 1.9]), "goal": Sphere([0, 0], 0.3),
                              "final": Sphere([0, 0], 0.6), "unsafe": Sphere([-2, 1.5], 0.2)})
    v = check_property(p, f, n_init=10, dt=1e-2, T=2.0, rng=rng)
    assert v.n_arrive_successes == 10 and v.n_remain_violations == 10 and not v.clean


def test_stability_start_set_is_sublevel(rng):
    p = Problem(Kind.STABILITY, _stable(), {"domain": Torus([0, 0], 1, 0.01)})
    V = ex.parse("x0^2 + x1^2", 2)
    v = check_property(p, p.dynamics, n_init=40, dt=1e-2, T=10.0, rng=rng, certificates={"V": V})
    assert v.clean and v.n_trajectories == 40


def test_trajectory_csv(tmp_path):
    tr = integrate(_stable(), [1.0, 0.5], dt=0.1, T=0.3)
    path = tmp_path / "t.csv"
    write_trajectory_csv(tr, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "x0", "x1"] and len(rows) == 5
    assert float(rows[1][1]) == 1.0


def test_contour_grid_and_csv(tmp_path):
    xa, xb, vals = contour_grid(ex.parse("x0 + 2*x1", 2), [-1, -1], [1, 1], n=11)
    assert len(vals) == 121 and np.allclose(vals, xa + 2 * xb)
    path = tmp_path / "c.csv"
    write_contour_csv(ex.parse("x0*x2", 3), [-1, -1, 0], [1, 1, 2], path, axes=(0, 1), n=5)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x0", "x1", "value"] and len(rows) == 26
    # the third coordinate is held at the box centre (1.0)
    assert all(float(r[2]) == pytest.approx(float(r[0])) for r in rows[1:])
