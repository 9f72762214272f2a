"""Property-based checks of the arithmetic core: ring laws, derivations,
substitution homomorphisms, unit inversion, and the linear solver, on
randomized inputs drawn by hypothesis."""

from hypothesis import given, settings, strategies as st

from hdflow.ringmath import (
    GF,
    LaurentPoly,
    RingMatrix,
    Zmod,
    solve_linear_mod,
)
from hdflow.serialize import poly_from_json, poly_to_json

RINGS = [Zmod(3, 1), Zmod(5, 1), Zmod(7, 1), Zmod(3, 2), Zmod(5, 2)]
FIELDS = [GF(3, 2), GF(3, 3), GF(5, 2)]


def _poly(ring, coeffs):
    return LaurentPoly(ring, dict(coeffs))


@st.composite
def ring_polys(draw, count, min_exp=-3, max_exp=4, max_terms=5):
    ring = draw(st.sampled_from(RINGS))
    polys = []
    for _ in range(count):
        coeffs = draw(
            st.dictionaries(
                st.integers(min_value=min_exp, max_value=max_exp),
                st.integers(min_value=0, max_value=ring.modulus - 1),
                max_size=max_terms,
            )
        )
        polys.append(_poly(ring, coeffs))
    return (ring, *polys)


@settings(deadline=None)
@given(ring_polys(3))
def test_laurent_ring_laws(data):
    ring, f, g, h = data
    assert f.add(g) == g.add(f)
    assert f.add(g).add(h) == f.add(g.add(h))
    assert f.mul(g) == g.mul(f)
    assert f.mul(g).mul(h) == f.mul(g.mul(h))
    assert f.mul(g.add(h)) == f.mul(g).add(f.mul(h))


@settings(deadline=None)
@given(ring_polys(2))
def test_derivative_is_a_derivation(data):
    ring, f, g = data
    lhs = f.mul(g).derivative()
    rhs = f.derivative().mul(g).add(f.mul(g.derivative()))
    assert lhs == rhs


@settings(deadline=None)
@given(
    ring_polys(2),
    st.integers(min_value=-2, max_value=2),
    st.integers(min_value=1, max_value=6),
)
def test_substitution_of_unit_monomials_is_a_ring_map(data, e, c):
    ring, f, g = data
    if c % ring.p == 0:
        c += 1
    u = LaurentPoly.monomial(ring, ring.coerce(c), e if e else 1)
    assert f.add(g).substitute(u) == f.substitute(u).add(g.substitute(u))
    assert f.mul(g).substitute(u) == f.substitute(u).mul(g.substitute(u))


@settings(deadline=None)
@given(
    ring_polys(1, min_exp=-2, max_exp=3, max_terms=3),
    st.integers(min_value=-3, max_value=3),
    st.integers(min_value=1, max_value=6),
)
def test_unit_laurent_polynomials_invert_exactly(data, e, c):
    ring, tail = data
    if c % ring.p == 0:
        c += 1
    lead = LaurentPoly.monomial(ring, ring.coerce(c), e)
    u = lead.add(tail.scale(ring.coerce(ring.p)))
    if not u.is_unit():
        return
    assert u.mul(u.inverse_unit()) == LaurentPoly.one(ring)


@settings(deadline=None)
@given(
    st.sampled_from(FIELDS),
    st.data(),
)
def test_field_frobenius_is_a_ring_endomorphism(K, data):
    order = K.p**K.f
    pick = lambda: data.draw(st.integers(min_value=0, max_value=order - 1))
    table = list(K.elements())
    a, b = table[pick()], table[pick()]
    assert K.frobenius(K.add(a, b)) == K.add(K.frobenius(a), K.frobenius(b))
    assert K.frobenius(K.mul(a, b)) == K.mul(K.frobenius(a), K.frobenius(b))
    assert K.frobenius(a) == K.pow(a, K.p)


@settings(deadline=None, max_examples=50)
@given(st.sampled_from(RINGS), st.data())
def test_matrix_multiplication_associates(ring, data):
    size = 2
    entry = st.dictionaries(
        st.integers(min_value=-1, max_value=2),
        st.integers(min_value=0, max_value=ring.modulus - 1),
        max_size=2,
    )

    def draw_matrix():
        return RingMatrix(
            ring,
            [
                [_poly(ring, data.draw(entry)) for _ in range(size)]
                for _ in range(size)
            ],
        )

    A, B, C = draw_matrix(), draw_matrix(), draw_matrix()
    assert A.mul(B).mul(C) == A.mul(B.mul(C))


@settings(deadline=None, max_examples=60)
@given(
    st.sampled_from(RINGS),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=1, max_value=3),
    st.data(),
)
def test_linear_solver_output_verifies(ring, n, m, data):
    mod = ring.modulus
    cell = st.integers(min_value=0, max_value=mod - 1)
    A = [[data.draw(cell) for _ in range(m)] for _ in range(n)]
    x = [data.draw(cell) for _ in range(m)]
    b = [sum(A[i][j] * x[j] for j in range(m)) % mod for i in range(n)]
    sol = solve_linear_mod(A, b, ring)
    got = [sum(A[i][j] * sol.particular[j] for j in range(m)) % mod for i in range(n)]
    assert got == b
    for vec in sol.kernel:
        image = [sum(A[i][j] * vec[j] for j in range(m)) % mod for i in range(n)]
        assert image == [0] * n


@settings(deadline=None)
@given(ring_polys(1))
def test_poly_json_round_trip(data):
    ring, f = data
    doc = poly_to_json(f)
    assert poly_from_json(ring, doc, "/poly") == f


@settings(deadline=None)
@given(ring_polys(2, min_exp=-2, max_exp=3))
def test_reduction_one_level_down_is_a_ring_map(data):
    ring, f, g = data
    if ring.m == 1:
        return
    down = Zmod(ring.p, ring.m - 1)
    assert f.add(g).reduce_to(down) == f.reduce_to(down).add(g.reduce_to(down))
    assert f.mul(g).reduce_to(down) == f.reduce_to(down).mul(g.reduce_to(down))
