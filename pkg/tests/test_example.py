import json
import math

import numpy as np
import pytest
import sympy as sp

from lcgeom.example import (
    GAMMA0,
    GAMMA1,
    X_STAR,
    Y_STAR,
    check_chain,
    check_intersection,
    check_miss,
    check_paths,
    chain_p,
    miss_distance,
    path_through,
    verify_example,
)
from lcgeom.lc_core import LCStructure
from helpers import chain_p as chain_p_ref


def test_default_report_passes(example):
    report = verify_example(example)
    assert report.passed and report.failed_ids == []
    values = {c.id: c.value for c in report.checks}
    assert values[1] <= 1e-10 and values[2] <= 1e-10 and values[3] <= 1e-10
    assert values[4] > 1e-3
    lines = report.summary().splitlines()
    assert len(lines) == 4 and all(l.startswith("[PASS]") for l in lines)
    data = json.loads(report.to_json())
    assert data["passed"] and len(data["checks"]) == 4


def test_perturbed_structure_fails_paths_and_chain():
    S = LCStructure.scalar("0.51*(p1 + exp(-2*x1)*p1^3)")
    assert not check_paths(S).passed
    assert not check_chain(S).passed
    report = verify_example(S)
    assert 1 in report.failed_ids and 2 in report.failed_ids
    assert "[FAIL]" in report.summary()


def test_intersection_point_against_sympy():
    x = sp.Symbol("x")
    g0 = sp.exp(x) - 1
    g1 = 2 * sp.E * sp.sqrt(1 - sp.exp(x - 1))
    root = sp.nsolve(g0 - g1, x, (0.8, 0.99), solver="bisect", prec=30)
    assert float(root) == pytest.approx(X_STAR, abs=1e-14)
    assert float(g0.subs(x, root)) == pytest.approx(Y_STAR, abs=1e-14)
    res = check_intersection()
    assert res.passed and res.value <= 1e-10


def test_path_sources_parse_and_cross():
    from lcgeom import expr as E

    a, b = E.parse(GAMMA0, ["x1"]), E.parse(GAMMA1, ["x1"])
    assert a.eval({"x1": X_STAR}) == pytest.approx(b.eval({"x1": X_STAR}), abs=1e-12)


def test_chain_closed_form_values():
    assert chain_p(0.0) == pytest.approx(1.0, abs=1e-15)
    for x in (0.1, 0.5, 0.9):
        assert chain_p(x) == pytest.approx(chain_p_ref(x), rel=1e-14)


def test_path_through_solves_path_equation(example):
    h = 1e-4
    for x0, p0 in [(0.5, chain_p(0.5)), (0.2, -0.7), (0.0, 2.0)]:
        C1, C2 = path_through(x0, p0)
        # pick the branch y = C2 + s (2/C1) sqrt(C1 e^x + 1) through (x0, 0)
        s = min((1, -1), key=lambda k: abs(C2 + k * (2.0 / C1) * math.sqrt(C1 * math.exp(x0) + 1.0)))
        y = lambda x: C2 + s * (2.0 / C1) * math.sqrt(C1 * math.exp(x) + 1.0)
        assert abs(y(x0)) <= 1e-12
        assert (y(x0 + h) - y(x0 - h)) / (2 * h) == pytest.approx(p0, rel=1e-6)
        for x in (x0 - 0.05, x0 + 0.05):
            ydd = (y(x + h) - 2 * y(x) + y(x - h)) / h**2
            slope = (y(x + h) - y(x - h)) / (2 * h)
            assert ydd == pytest.approx(example.f_values([x, y(x), slope])[0, 0], rel=1e-5, abs=1e-5)


def test_miss_distance_positive_control():
    # the path of (0, 1) is gamma_0, which passes through the intersection point
    assert miss_distance(0.0, 1.0) <= 1e-8
    assert miss_distance(0.5, chain_p(0.5)) > 1e-3


def test_miss_check_details():
    res = check_miss()
    assert res.passed
    assert res.detail["sweep_min"] > 1e-3
    assert len(res.detail["sweep"]) == 17
    assert np.isfinite(res.value)
