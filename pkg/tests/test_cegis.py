import csv
import math

import numpy as np
import pytest

from neurocert import expr as ex
from neurocert.benchmarks import REGISTRY
from neurocert.cegis import (
    SUITE_COLUMNS,
    CegisConfig,
    SuiteRow,
    run_suite,
    summarize,
    synthesize,
    verify_candidates,
    write_suite_csv,
)
from neurocert.certificate import Kind, Problem
from neurocert.geometry import Rectangle, Torus
from neurocert.verifier import Valid, VerifierConfig


@pytest.fixture(scope="module")
def bench1():
    p, cfg = REGISTRY[1].build(seed=0)
    return p, synthesize(p, cfg)


def test_benchmark1_succeeds(bench1):
    p, res = bench1
    assert res.success and res.outcome == "success" and res.reason == "valid"
    assert 1 <= res.loops <= 25
    assert res.t_total >= res.t_learn + res.t_verify - 1e-6
    assert set(res.certificates) == {"V"} and res.controller is None
    assert all(isinstance(v, Valid) for _, v in res.last_verdicts)


def test_certificate_reverifies(bench1, rng):
    p, res = bench1
    for _ in range(2):
        ver = verify_candidates(p, res.certificates, res.closed_loop(p), VerifierConfig(delta=p.delta), rng)
        assert ver.ok


def test_certificate_is_rounded(bench1):
    _, res = bench1
    consts = [n.value for n in ex.postorder([res.certificates["V"]]) if isinstance(n, ex.Const)]
    assert consts and all(abs(c * 1000 - round(c * 1000)) < 1e-9 for c in consts)


def test_synthesis_is_deterministic(bench1):
    p, res = bench1
    again = synthesize(p, REGISTRY[1].config(seed=0))
    assert again.loops == res.loops
    assert ex.pretty(again.certificates["V"]) == ex.pretty(res.certificates["V"])


def test_unstable_system_fails_within_budget():
    f = ex.VectorField.parse(["x0", "x1"])
    p = Problem(Kind.STABILITY, f, {"domain": Torus([0, 0], 1, 0.1)})
    res = synthesize(p, CegisConfig(max_loops=1))
    assert not res.success and res.loops == 1 and res.reason == "out of loops"
    assert res.outcome == "failure"


def test_loop_budget_validated():
    with pytest.raises(ValueError):
        CegisConfig(max_loops=0).loops_for(REGISTRY[1].problem())
    assert CegisConfig().loops_for(REGISTRY[1].problem()) == 25
    assert CegisConfig().loops_for(REGISTRY[25].problem()) == 100


def test_controlled_benchmark_returns_controller():
    p, cfg = REGISTRY[3].build(seed=0)
    res = synthesize(p, cfg)
    assert res.success
    assert len(res.controller) == 2
    assert all(ex.eval_expr(c, [0.0, 0.0]) == 0.0 for c in res.controller)
    assert res.closed_loop(p).dim_input == 0


def _row(b, seed, outcome, t):
    return SuiteRow(b, "stability", 2, 0, seed, outcome, 3, t / 2, t / 2, t)


def test_summarize():
    rows = [_row("1", 0, "success", 1.0), _row("1", 1, "success", 3.0), _row("1", 2, "failure", 9.0),
            _row("2", 0, "failure", 1.0)]
    s = summarize(rows)
    assert s["1"]["S"] == pytest.approx(200 / 3)
    assert (s["1"]["min"], s["1"]["mean"], s["1"]["max"]) == (1.0, 2.0, 3.0)
    assert s["2"]["S"] == 0.0 and math.isnan(s["2"]["mean"])


def test_suite_csv(tmp_path):
    rows = run_suite([REGISTRY[1]], [0, 1])
    assert [r.seed for r in rows] == [0, 1] and all(r.benchmark == "1" for r in rows)
    path = tmp_path / "s.csv"
    write_suite_csv(rows, path)
    got = list(csv.DictReader(open(path)))
    assert list(got[0]) == SUITE_COLUMNS and len(got) == 2
    assert got[0]["N_s"] == "2" and got[0]["N_u"] == "0"


def test_empty_seed_list_gives_empty_table():
    assert run_suite([REGISTRY[1]], []) == []
    assert summarize([]) == {}


def test_setup_failure_is_reported():
    # the initial set does not lie inside the domain
    p = REGISTRY[15].problem()
    p.regions["init"] = Rectangle([1.2, 1.2], [1.4, 1.4])
    res = synthesize(p, CegisConfig(max_loops=1))
    assert not res.success and res.reason.startswith("setup failed")
    assert np.isfinite(res.t_total)
