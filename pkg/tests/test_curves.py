import json

import numpy as np
import pytest

from lcgeom import expr as E
from lcgeom import kernels
from lcgeom.curves import (
    ContactDirection,
    ContactNonNull,
    IntegratorConfig,
    KropinaSystem,
    NotNullGeneric,
    NotTransverse,
    chain,
    christoffel,
    fefferman_metric,
    integrate_geodesic,
    k_flow,
    kropina_geodesic_dim3,
    kropina_two_point,
    kropina_value,
    null_chain,
    null_lift,
    project_to_paths,
)
from lcgeom.fefferman import MetricField, NotIntegrable
from lcgeom.lc_core import LCStructure, coframe, flat_structure, potential_structure
from helpers import chain_p, chain_p_dot, random_structure_n1

CFG = IntegratorConfig(samples=201)
POT = potential_structure(2, E.parse("x1^2*x2/2 + x2^3/6 - x1^4/12", ["x1", "x2"]))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(samples=1)


def test_christoffel_constant_metric_vanishes():
    g = MetricField(["a", "b"], [[E.const(2), E.ONE], [E.ONE, E.const(-3)]])
    assert np.all(christoffel(g, [0.3, 0.1]) == 0)
    with pytest.raises(ValueError):
        christoffel(g, [0, 0], mode="spline")


def test_christoffel_flat_fefferman_by_hand():
    g = fefferman_metric(flat_structure(1))
    q = [0.3, -0.2, 0.7, 0.1]
    Gam = christoffel(g, q)
    lowered = np.einsum("lk,kij->lij", g(q), Gam)
    # coords (x, u, p, s); the only varying entry is g_xs = -2p
    hand = np.zeros((4, 4, 4))
    x, u, p, s = range(4)
    hand[x, p, s] = hand[x, s, p] = -1.0
    hand[s, p, x] = hand[s, x, p] = -1.0
    hand[p, x, s] = hand[p, s, x] = 1.0
    np.testing.assert_allclose(lowered, hand, atol=1e-14)


@pytest.mark.parametrize("S", [LCStructure.scalar("0.5*(p1 + exp(-2*x1)*p1^3)"), POT], ids=["example", "potential"])
def test_christoffel_symbolic_vs_fd(S, rng):
    g = fefferman_metric(S)
    worst = 0.0
    for q in rng.uniform(-0.8, 0.8, (100, g.dim)):
        a, b = christoffel(g, q), christoffel(g, q, mode="fd", h=1e-5)
        worst = max(worst, np.max(np.abs(a - b)))
        np.testing.assert_allclose(a, np.transpose(a, (0, 2, 1)), atol=1e-14)
    assert worst <= 1e-6


def test_geodesic_constant_metric_is_straight():
    g = MetricField(["a", "b"], [[E.ONE, E.ZERO], [E.ZERO, E.const(-1)]])
    tr = integrate_geodesic(g, [1.0, 2.0], [0.5, -0.25], (0, 4), CFG)
    np.testing.assert_allclose(tr.points, [1.0, 2.0] + np.outer(tr.t, [0.5, -0.25]), atol=1e-12)


def test_flat_fefferman_geodesic_along_u():
    g = fefferman_metric(flat_structure(1))
    tr = integrate_geodesic(g, [0, 0, 0, 0], [0, 1, 0, 0], (0, 2), CFG)
    np.testing.assert_allclose(tr.points[:, 1], tr.t, atol=1e-12)
    np.testing.assert_allclose(tr.points[:, [0, 2, 3]], 0, atol=1e-12)
    assert tr.stats["max_abs_energy"] == 0.0
    assert np.all(np.diff(tr.t) > 0)


def test_energy_conserved_on_generic_geodesic(example, rng):
    g = fefferman_metric(example)
    v0 = rng.normal(size=4)
    tr = integrate_geodesic(g, [0.1, 0.0, 0.2, 0.0], v0, (0, 0.5), CFG)
    assert tr.stats["energy_drift"] <= 1e-8 * max(1.0, abs(tr.meta["energy"][0]))


def test_null_lift_examples(example):
    point, vel, kind = null_lift(flat_structure(1), [0, 0, 0], [0, 1, 0], s0=0.4)
    assert kind == "transverse" and vel[-1] == 0.0 and point[-1] == 0.4
    _, vel, kind = null_lift(flat_structure(2), [0] * 5, [1, 0, 0, 0, 1], k=0.7)
    assert kind == "null_generic" and vel[-1] == 0.7
    with pytest.raises(ContactNonNull):
        null_lift(flat_structure(1), [0, 0, 0], [1, 0, 1])
    with pytest.raises(ValueError):
        null_lift(flat_structure(1), [0, 0, 0], [0, 0, 0])
    g = fefferman_metric(example)
    point, vel, _ = null_lift(example, [0.2, 0.3, -0.4], [1.0, 0.5, 2.0])
    assert abs(vel @ g(point) @ vel) <= 1e-14


def test_flat_chain_is_straight():
    tr = chain(flat_structure(1), [0, 0, 0], [0, 1, 0], (0, 3), CFG)
    np.testing.assert_allclose(tr.points, np.column_stack([0 * tr.t, tr.t, 0 * tr.t]), atol=1e-12)
    assert tr.kind == "chain" and tr.coords == ("x1", "u", "p1")


def test_example_chain_matches_closed_form(example):
    tr = chain(example, [0, 0, 1], [1, 0, chain_p_dot(0.0)], (0, 3), IntegratorConfig(samples=401))
    x = tr.points[:, 0]
    sel = (x >= 0.1) & (x <= 0.9)
    assert sel.sum() > 100 and x.max() > 0.9
    ref = np.array([chain_p(v) for v in x[sel]])
    assert np.max(np.abs(tr.points[sel, 2] - ref)) <= 1e-6
    assert np.max(np.abs(tr.points[sel, 1])) <= 1e-6


def test_chain_independent_of_s0(example):
    runs = [chain(example, [0.1, 0.2, 0.3], [1.0, 0.9, -0.4], (0, 1), CFG, s0=s0) for s0 in (0.0, 1.0, 3.0)]
    for r in runs[1:]:
        assert np.max(np.abs(r.points - runs[0].points)) <= 1e-9


def test_chain_rejects_contact_and_nonintegrable():
    with pytest.raises(NotTransverse):
        chain(flat_structure(1), [0, 0, 0], [1, 0, 0], (0, 1))
    S = LCStructure.from_strings(2, [["u", "0"], ["0", "0"]])
    with pytest.raises(NotIntegrable):
        chain(S, [0] * 5, [0, 0, 1, 0, 0], (0, 1))


def test_chain_k_pairing_stays_away_from_zero(example, rng):
    for _ in range(5):
        q = rng.uniform(-0.3, 0.3, 3)
        v = np.array([1.0, q[2] + rng.choice([-1, 1]) * rng.uniform(0.5, 1.0), rng.uniform(-1, 1)])
        tr = chain(example, q, v, (0, 0.5), CFG)
        kp = tr.meta["k_pairing"]
        assert np.min(np.abs(kp)) > 1e-6
        # g(K, c') is a first integral because K is Killing
        assert np.max(np.abs(kp - kp[0])) <= 1e-9


@pytest.mark.parametrize("S", [flat_structure(2), POT], ids=["flat", "potential"])
def test_null_chains_perpendicular_to_k(S, rng):
    for k in (0.0, 0.5, -1.0):
        q = rng.uniform(-0.3, 0.3, 5)
        c = coframe(S, q)
        # coframe values (sigma, theta, pi) = (0, e_1, e_2): contact, null and generic
        v = np.linalg.solve(c.matrix(), [0, 1, 0, 0, 1])
        tr = null_chain(S, q, v, k, (0, 0.6), CFG)
        lift = tr.meta["lift"]
        assert np.max(np.abs(tr.meta["k_pairing"])) <= 1e-8
        assert lift.stats["max_abs_energy"] <= 1e-8


def test_null_chain_family_diverges_quadratically():
    S = flat_structure(2)
    ts = np.array([0.0, 0.05, 0.1, 0.2, 0.4])
    a = null_chain(S, [0] * 5, [1, 0, 0, 0, 1], 0.0, ts, CFG)
    b = null_chain(S, [0] * 5, [1, 0, 0, 0, 1], 1.0, ts, CFG)
    np.testing.assert_allclose(a.velocities[0], b.velocities[0])
    sep = np.linalg.norm(a.points - b.points, axis=1)
    assert sep[-1] > 1e-3
    ratios = sep[2:] / sep[1:-1]
    np.testing.assert_allclose(ratios, 4.0, rtol=0.1)


def test_null_chain_rejects_transverse():
    with pytest.raises(NotNullGeneric):
        null_chain(flat_structure(2), [0] * 5, [0, 0, 1, 0, 0], 0.0, (0, 1))


def test_degenerate_null_chain_is_flagged():
    tr = null_chain(flat_structure(2), [0] * 5, [1, 0, 0, 0, 0], 0.3, (0, 0.5), CFG)
    assert tr.meta["direction_kind"] == "in_E"
    assert "note" in tr.meta


def test_k_flow_projection_is_fixed(example):
    tr = k_flow(example, [0.2, -0.1, 0.4], 0.0, (0, 5), CFG)
    assert tr.stats["projection_drift"] <= 1e-10
    np.testing.assert_allclose(tr.points[:, -1], tr.t, atol=1e-10)
    assert tr.stats["max_abs_energy"] <= 1e-8


def test_kropina_value_and_section_change(example, rng):
    with pytest.raises(ContactDirection):
        kropina_value(example, [0, 0, 1], [1, 1, 0])
    f = E.parse("sin(x1)*u + p1^2/3", example.names)
    grads = [E.diff(f, n) for n in example.names]
    worst = 0.0
    for _ in range(1000):
        q = rng.uniform(-1, 1, 3)
        v = rng.normal(size=3)
        if abs(coframe(example, q).sigma @ v) < 1e-3:
            continue
        env = dict(zip(example.names, q))
        df = sum(g.eval(env) * c for g, c in zip(grads, v))
        F0, F1 = kropina_value(example, q, v), kropina_value(example, q, v, section=f)
        worst = max(worst, abs(F1 - F0 - 2 * df) / max(1.0, abs(F0)))
    assert worst <= 1e-10


def test_kropina_flat_value():
    # flat: g(V,V) = 2 dx dp + 4 sigma ds, g(K,V) = 2 sigma
    assert kropina_value(flat_structure(1), [0, 0, 0], [1, 1, 2]) == pytest.approx(2.0)


STRUCTS_N1 = [
    "0.5*(p1 + exp(-2*x1)*p1^3)",
    "x1*u*p1^2 - sin(u) + p1^3/3",
    "p1^2",
    "u + x1*p1",
    "p1^3 + u*x1",
]
ICS = [([0, 0, 0.5], [1, 1.0, 0.3]), ([0.1, 0.2, -0.3], [1, 0.5, 0.2]), ([0, 0.1, 0], [1, -0.7, 0.4])]


@pytest.mark.parametrize("src", STRUCTS_N1)
def test_chains_are_kropina_geodesics(src):
    S = LCStructure.scalar(src)
    system = KropinaSystem(S)
    for q, v in ICS:
        tr = chain(S, q, v, (0, 1), CFG)
        x = tr.points[:, 0]
        kg = system.integrate(x, [q[1], q[2], v[1], v[2]], CFG)
        assert np.max(np.abs(kg.points[:, 1:] - tr.points[:, 1:])) <= 1e-6


def test_kropina_residuals_vanish_on_solution(example):
    tr = kropina_geodesic_dim3(example, (0, 0.5), [0.1, 0.2, 0.8, -0.3], CFG)
    system = KropinaSystem(example)
    for k in range(0, len(tr), 20):
        x, y, p = tr.points[k]
        _, yd, pd = tr.velocities[k]
        _, ydd, pdd = tr.accelerations[k]
        rp, ry = system.residuals(x, y, yd, ydd, p, pd, pdd)
        assert abs(rp) <= 1e-12 and abs(ry) <= 1e-10


def test_kropina_two_point_recovers_example_chain(example):
    start, end = (0.0, chain_p(0.1)), (0.0, chain_p(0.9))
    tr = kropina_two_point(example, (0.1, 0.9), start, end, guess=(0.3, 1.0))
    xs = tr.points[:, 0]
    np.testing.assert_allclose(tr.points[:, 1], 0.0, atol=1e-8)
    np.testing.assert_allclose(tr.points[:, 2], [chain_p(x) for x in xs], atol=1e-8)
    assert tr.velocities[0, 1] == pytest.approx(0.0, abs=1e-8)


def test_kropina_requires_n1():
    with pytest.raises(ValueError):
        KropinaSystem(flat_structure(2))


def test_projection_to_paths(example, rng):
    tr = chain(example, [0, 0, 1], [1, 0, chain_p_dot(0.0)], (0, 2), CFG)
    assert project_to_paths(example, tr).max_residual <= 1e-6
    cubic = random_structure_n1(rng)
    tr = chain(cubic, [0.1, 0.0, 0.2], [1.0, 0.8, 0.3], (0, 0.5), CFG)
    assert project_to_paths(cubic, tr).max_residual <= 1e-6
    quartic = LCStructure.scalar("p1^4")
    worst = max(
        project_to_paths(quartic, chain(quartic, [0, 0, p], [1, p + 1, 0.5], (0, 0.3), CFG)).max_residual
        for p in (0.0, 0.5, 1.0)
    )
    assert worst > 1e-3


def test_projection_to_paths_n2():
    tr = chain(POT, [0.1, -0.1, 0.0, 0.2, 0.1], [1.0, 0.3, 1.0, 0.5, -0.2], (0, 0.5), CFG)
    assert project_to_paths(POT, tr).max_residual <= 1e-6
    nc = null_chain(POT, [0] * 5, [1, 0, 0, 0, 1], 0.4, (0, 0.5), CFG)
    assert project_to_paths(POT, nc).max_residual <= 1e-6


def test_trajectory_serialisation(example):
    tr = chain(example, [0, 0, 1], [1, 0.5, 0], (0, 0.2), IntegratorConfig(samples=5))
    lines = tr.to_csv().strip().splitlines()
    assert lines[0] == "t,x1,u,p1,v_x1,v_u,v_p1" and len(lines) == 6
    data = json.loads(tr.to_json())
    assert data["kind"] == "chain" and len(data["points"]) == 5
    np.testing.assert_array_equal(tr.column("u"), tr.points[:, 1])


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled core not built")
def test_chain_backends_agree(example):
    a = chain(example, [0, 0, 1], [1, 0.5, 0], (0, 0.5), CFG, backend="python")
    b = chain(example, [0, 0, 1], [1, 0.5, 0], (0, 0.5), CFG, backend="cython")
    assert np.array_equal(a.points, b.points)
