import json

import numpy as np
import pytest
import sympy as sp

from lcgeom import expr as E
from lcgeom.files import bundled, load_christoffel
from lcgeom.lc_core import LCStructure, example_structure, flat_structure
from lcgeom.projective import (
    ChristoffelError,
    ChristoffelField,
    NotProjective,
    christoffels_from_fij,
    christoffels_from_ode_coeffs,
    fij_from_christoffels,
    geodesic_residual,
    is_projective,
    ode_coeffs_dim2,
    projective_change,
    structure_from_ode_coeffs,
    trace_free_representative,
)
from helpers import random_gamma, random_polynomial, to_sympy


def sympy_fij(gamma):
    """f_ij from the cubic formula, assembled independently with sympy."""
    m = gamma.m
    n = m - 1
    syms = sp.symbols(list(gamma.names) + [f"p{i + 1}" for i in range(n)])
    env = dict(zip([str(s) for s in syms], syms))
    p = syms[m:]
    G = lambda c, a, b: to_sympy(gamma[c, a, b], dict(env))
    N = n
    f = sp.zeros(n, n)
    for i in range(n):
        for j in range(n):
            t = -G(N, i, j) - p[j] * G(N, N, i) - p[i] * G(N, N, j) - p[i] * p[j] * G(N, N, N)
            for k in range(n):
                t += p[k] * G(k, i, j) + p[i] * p[k] * G(k, N, j) + p[j] * p[k] * G(k, N, i)
                t += p[i] * p[j] * p[k] * G(k, N, N)
            f[i, j] = sp.expand(t)
    return syms, f


@pytest.mark.parametrize("m", [2, 3, 4])
def test_round_trip_random_polynomial(m, rng):
    for _ in range(20 if m < 4 else 5):
        gamma = random_gamma(rng, m)
        assert gamma.is_trace_free()
        S = fij_from_christoffels(gamma)
        assert christoffels_from_fij(S).equals(gamma)


@pytest.mark.parametrize("m", [2, 3])
def test_fij_matches_sympy_formula(m, rng):
    gamma = random_gamma(rng, m)
    S = fij_from_christoffels(gamma)
    syms, ref = sympy_fij(gamma)
    env = {str(s): s for s in syms}
    for i in range(m - 1):
        for j in range(m - 1):
            assert sp.expand(to_sympy(S.f[i][j], dict(env)) - ref[i, j]) == 0


def test_zero_gamma_gives_flat():
    S = fij_from_christoffels(ChristoffelField(3))
    assert all(e == E.ZERO for row in S.f for e in row)
    assert christoffels_from_fij(flat_structure(2)).equals(ChristoffelField(3))


def test_hand_derived_inverse_1362():
    gamma = christoffels_from_fij(LCStructure.scalar("1 + 3*p1 + 6*p1^2 + 2*p1^3"))
    # indices are 0-based: (c, a, b) for Gamma^{c+1}_{a+1,b+1}
    expected = {(0, 0, 0): 1, (0, 0, 1): 2, (1, 0, 0): -1, (0, 1, 1): 2, (1, 0, 1): -1, (1, 1, 1): -2}
    assert gamma.equals(ChristoffelField(2, {k: E.const(v) for k, v in expected.items()}))
    A = ode_coeffs_dim2(gamma)
    assert [a for a in A] == [E.const(v) for v in (1, 3, 6, 2)]
    assert christoffels_from_ode_coeffs(A).equals(gamma)


def test_ode_coefficients_forward_inverse(rng):
    assert all(a == E.ZERO for a in ode_coeffs_dim2(ChristoffelField(2)))
    for _ in range(10):
        A = [random_polynomial(rng, ["x1", "u"]) for _ in range(4)]
        back = ode_coeffs_dim2(christoffels_from_ode_coeffs(A))
        assert all(E.equal(a, b) for a, b in zip(A, back))
        gamma = random_gamma(rng, 2)
        assert christoffels_from_ode_coeffs(ode_coeffs_dim2(gamma)).equals(gamma)


def test_example_coefficients():
    gamma = christoffels_from_fij(example_structure())
    A = ode_coeffs_dim2(gamma)
    names = ["x1", "u"]
    for a, src in zip(A, ["0", "1/2", "0", "exp(-2*x1)/2"]):
        assert E.equal(a, E.parse(src, names))
    S = structure_from_ode_coeffs(["0", "1/2", "0", "exp(-2*x1)/2"])
    assert E.equal(S.f[0][0], example_structure().f[0][0])


@pytest.mark.parametrize("src", ["p1^4", "x1*p1^5 + p1", "sin(p1)", "1/(1 + p1^2)"])
def test_non_projective_rejected(src):
    with pytest.raises(NotProjective):
        christoffels_from_fij(LCStructure.scalar(src))
    assert not is_projective(LCStructure.scalar(src))


def test_degree_four_rejected_n2():
    S = LCStructure.from_strings(2, [["p1^2*p2^2", "0"], ["0", "0"]])
    with pytest.raises(NotProjective):
        christoffels_from_fij(S)


def test_cubic_without_pattern_rejected():
    # cubic in p but not of the projective form (n = 2 constrains the coefficients)
    assert not is_projective(LCStructure.from_strings(2, [["p2^3", "0"], ["0", "0"]]))
    # projectivity is a coefficient pattern, independent of integrability
    gamma = christoffels_from_fij(LCStructure.from_strings(2, [["u", "0"], ["0", "0"]]))
    assert E.equal(gamma[2, 0, 0], E.parse("-u", gamma.names))


def test_trace_validation():
    with pytest.raises(ChristoffelError):
        fij_from_christoffels(ChristoffelField(2, {(0, 0, 0): E.ONE}))
    with pytest.raises(ChristoffelError):
        ChristoffelField(2, {(0, 0, 5): E.ONE})
    with pytest.raises(ChristoffelError):
        ChristoffelField(2, {(0, 0, 1): E.ONE, (0, 1, 0): E.const(2)})


def test_projective_change_and_renormalisation(rng):
    names = ["x1", "x2", "u"]
    for _ in range(5):
        gamma = random_gamma(rng, 3)
        phi = E.parse("sin(x1)*u + x2^2*exp(u)", names)
        raw = projective_change(gamma, phi)
        assert not raw.is_trace_free()
        renorm = trace_free_representative(raw)
        assert renorm.is_trace_free()
        # the cubic formula is insensitive to the change itself
        base = fij_from_christoffels(gamma)
        for G in (fij_from_christoffels(raw, check=False), fij_from_christoffels(renorm)):
            for q in rng.uniform(-1, 1, (100, 5)):
                np.testing.assert_allclose(G.f_values(q), base.f_values(q), atol=1e-10)
    assert projective_change(gamma, E.ZERO).equals(gamma)


def test_geodesic_residual_dim2(rng):
    gamma = christoffels_from_fij(example_structure())
    S = example_structure()
    for x, y, yd, ydd in rng.uniform(-1, 1, (20, 4)):
        r = geodesic_residual(gamma, [x, y], [1.0, yd], [0.0, ydd])
        assert r == pytest.approx(abs(ydd - S.f_values([x, y, yd])[0, 0]), abs=1e-13)
        # reparametrisation invariance
        r2 = geodesic_residual(gamma, [x, y], [2.0, 2 * yd], [0.0, 4 * ydd])
        assert r2 == pytest.approx(r, abs=1e-12)


def test_christoffel_file_round_trip(tmp_path):
    gamma = load_christoffel(bundled("example_gamma.json"))
    assert gamma.equals(christoffels_from_fij(example_structure()))
    path = tmp_path / "g.json"
    path.write_text(json.dumps(gamma.to_dict()))
    assert load_christoffel(path).equals(gamma)
    assert ChristoffelField.from_dict({"m": 2, "gamma": {"1,2,1": "x1"}})[0, 0, 1] == E.var("x1")
