"""Tests for semistability, destabilizers, and the filtration descent."""

import random
from fractions import Fraction

import pytest

from hdflow.bundles import (
    Bundle,
    FlatBundle,
    HiggsBundle,
    Subbundle,
    full_subbundle,
    hn_filtration,
)
from hdflow.cartier import inverse_cartier_1
from hdflow.curves import AffineLine, ProjectiveLine
from hdflow.errors import (
    NotNablaSemistable,
    SearchBudgetExceeded,
    SemistableInput,
    WrongModulus,
)
from hdflow.filtration import (
    DescentRecord,
    DestabilizerReport,
    check_window_descent,
    destabilizer_theta_closure,
    is_higgs_semistable,
    is_nabla_semistable,
    max_destabilizer_graded,
    simpson_filtration,
    xi_step,
)
from hdflow.graded import (
    DeRhamBundle,
    GradedHiggsBundle,
    HodgeFiltration,
    grade,
)
from hdflow.ringmath import LaurentPoly, RingMatrix, Zmod

from oracles import random_unimodular_poly


def upper_higgs(curve, exps, entry):
    d = curve.domain
    E = Bundle.sum_of_lines(curve, exps)
    theta = RingMatrix(
        d,
        [
            [LaurentPoly.zero(d), entry],
            [LaurentPoly.zero(d), LaurentPoly.zero(d)],
        ],
    )
    return HiggsBundle.from_chart0(E, theta)


def transform_36(p=3):
    """The splitting-(p, -p) flat bundle with an off-diagonal connection."""
    d = Zmod(p, 1)
    curve = ProjectiveLine(d)
    return inverse_cartier_1(
        upper_higgs(curve, (1, -1), LaurentPoly.const(d, d.one))
    )


def one_grade(bundle):
    return GradedHiggsBundle((bundle,), ())


def conjugated_trivial_flat(rng, curve, rank):
    """A trivial-type flat bundle presented in a random unimodular frame."""
    d = curve.domain
    E = Bundle.free(curve, rank)
    flat = FlatBundle.from_chart0(E, RingMatrix.zeros(d, rank, rank))
    if not curve.is_projective:
        return flat
    Q = random_unimodular_poly(rng, d, rank, ops=3, max_deg=1)
    Qinv = Q.inverse()
    g_new = E.transition.mul(Q)
    A_new = Qinv.mul(flat.A[0]).mul(Q).add(Qinv.mul(Q.derivative()))
    return FlatBundle.from_chart0(Bundle(curve, rank, g_new), A_new)


# -- connection semistability ------------------------------------------------


def test_nabla_semistable_trivial():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    flat = FlatBundle.from_chart0(Bundle.free(curve, 2), RingMatrix.zeros(d, 2, 2))
    ok, witness = is_nabla_semistable(flat)
    assert ok and witness is None


def test_nabla_unstable_mixed_type_with_witness():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    V = Bundle.sum_of_lines(curve, (3, 0))
    flat = FlatBundle.from_chart0(V, RingMatrix.zeros(d, 2, 2))
    ok, witness = is_nabla_semistable(flat)
    assert not ok
    assert witness.rank == 1 and witness.degree() == 3
    assert witness.slope() == Fraction(3)


def test_nabla_semistability_of_transforms():
    ok, _ = is_nabla_semistable(transform_36())
    assert not ok

    d = Zmod(5, 1)
    curve = ProjectiveLine(d)
    H = inverse_cartier_1(HiggsBundle.zero(Bundle.free(curve, 3)))
    ok, witness = is_nabla_semistable(H)
    assert ok and witness is None


def test_nabla_semistable_affine_and_modulus_guard():
    d = Zmod(5, 1)
    flat = FlatBundle.from_chart0(
        Bundle.free(AffineLine(d), 2), RingMatrix.zeros(d, 2, 2)
    )
    ok, witness = is_nabla_semistable(flat)
    assert ok and witness is None

    W = Zmod(5, 2)
    flatW = FlatBundle.from_chart0(
        Bundle.free(ProjectiveLine(W), 2), RingMatrix.zeros(W, 2, 2)
    )
    with pytest.raises(WrongModulus):
        is_nabla_semistable(flatW)


# -- graded semistability ----------------------------------------------------


def test_trivial_graded_semistable():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    ok, witness = is_higgs_semistable(one_grade(Bundle.free(curve, 2)))
    assert ok and witness is None
    with pytest.raises(SemistableInput):
        max_destabilizer_graded(one_grade(Bundle.free(curve, 2)))


def test_two_grade_line_destabilizer():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    zero_map = RingMatrix.zeros(d, 1, 1)
    G = GradedHiggsBundle(
        (Bundle.line(curve, 1), Bundle.line(curve, -1)),
        ((zero_map, zero_map),),
    )
    ok, report = is_higgs_semistable(G)
    assert not ok
    best = max_destabilizer_graded(G)
    assert best.mu_max == Fraction(1) and best.r_max == 1
    assert best.pieces[0] is not None and best.pieces[0].degree() == 1
    assert best.pieces[1] is None


def test_single_grade_split_destabilizer():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    G = one_grade(Bundle.sum_of_lines(curve, (1, -1)))
    best = max_destabilizer_graded(G)
    assert best.mu_max == Fraction(1) and best.r_max == 1
    hn_top = hn_filtration(G.pieces[0])[0]
    assert best.pieces[0].same_as(hn_top)


def test_invariance_constrains_candidates():
    # grade 1 = O(-2) maps onto grade 0 = O(2) by a nonzero connecting map,
    # so the grade-1 line alone is not invariant; the witness sits in grade 0
    d = Zmod(5, 1)
    curve = ProjectiveLine(d)
    G = GradedHiggsBundle(
        (Bundle.line(curve, 2), Bundle.line(curve, -2)),
        (
            (
                RingMatrix(d, [[LaurentPoly.const(d, d.one)]]),
                RingMatrix(
                    d, [[LaurentPoly.var(d, 2).scale(d.coerce(-1))]]
                ),
            ),
        ),
    )
    G.validate()
    best = max_destabilizer_graded(G)
    assert best.mu_max == Fraction(2) and best.r_max == 1
    assert best.pieces[1] is None


def test_lex_maximum_prefers_rank_at_equal_slope():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    zero_map = RingMatrix.zeros(d, 2, 1)
    G = GradedHiggsBundle(
        (Bundle.sum_of_lines(curve, (2, -4)), Bundle.line(curve, 2)),
        ((zero_map, zero_map),),
    )
    best = max_destabilizer_graded(G)
    assert best.mu_max == Fraction(2) and best.r_max == 2
    assert best.pieces[0].rank == 1 and best.pieces[1].rank == 1

    heur = destabilizer_theta_closure(G)
    assert heur is not None
    assert (heur.mu_max, heur.r_max) == (best.mu_max, best.r_max)


def test_heuristic_agrees_on_unstable_samples():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    samples = [
        one_grade(Bundle.sum_of_lines(curve, (1, -1))),
        one_grade(Bundle.sum_of_lines(curve, (3, -3))),
        GradedHiggsBundle(
            (Bundle.line(curve, 1), Bundle.line(curve, -1)),
            ((RingMatrix.zeros(d, 1, 1), RingMatrix.zeros(d, 1, 1)),),
        ),
    ]
    for G in samples:
        best = max_destabilizer_graded(G)
        heur = destabilizer_theta_closure(G)
        assert heur is not None
        assert (heur.mu_max, heur.r_max) == (best.mu_max, best.r_max)


def test_affine_graded_always_semistable():
    d = Zmod(3, 1)
    curve = AffineLine(d)
    G = one_grade(Bundle.free(curve, 2))
    ok, witness = is_higgs_semistable(G)
    assert ok and witness is None
    with pytest.raises(SemistableInput):
        max_destabilizer_graded(G)


def test_scan_budget_exhaustion():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    G = one_grade(Bundle.sum_of_lines(curve, (3, -3)))
    with pytest.raises(SearchBudgetExceeded):
        max_destabilizer_graded(G, budget=2)


def test_destabilizer_deterministic():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    G = one_grade(Bundle.sum_of_lines(curve, (1, -1)))
    a = max_destabilizer_graded(G)
    b = max_destabilizer_graded(G)
    assert a.mu_max == b.mu_max and a.r_max == b.r_max
    assert a.pieces[0].same_as(b.pieces[0])


# -- the descent operator ----------------------------------------------------


def test_xi_from_trivial_pushes_in_hn_max():
    H = transform_36()
    fil = HodgeFiltration.trivial(H.bundle)
    new_fil = xi_step(DeRhamBundle(H, fil))
    assert new_fil.level == 1
    assert new_fil.steps[0].same_as(hn_filtration(H.bundle)[0])
    assert new_fil.steps[0].degree() == 3


def test_xi_full_shift_with_whole_grading():
    H = transform_36()
    fil = HodgeFiltration(
        H.bundle,
        [Subbundle.from_chart0_span(H.bundle, hn_filtration(H.bundle)[0].basis[0])],
    )
    g = grade(H, fil)
    whole = DestabilizerReport(
        tuple(full_subbundle(P) for P in g.graded.pieces),
        g.graded.slope(),
        g.graded.rank,
    )
    new_fil = xi_step(DeRhamBundle(H, fil), grading=g, report=whole)
    assert new_fil.level == fil.level + 1
    for i in range(fil.level + 1):
        assert new_fil.rank_at(i + 1) == fil.rank_at(i)


def test_xi_stationary_on_nabla_unstable_loop():
    # the counterexample class: an invariant destabilizing line makes the
    # descent loop stall instead of reaching a semistable grading
    H = transform_36()
    fil = HodgeFiltration.trivial(H.bundle)
    f1 = xi_step(DeRhamBundle(H, fil))
    from hdflow.graded import reduce_filtration

    f2 = reduce_filtration(xi_step(DeRhamBundle(H, f1)))
    assert f2.level == 1 and f2.steps[0].same_as(f1.steps[0])


def test_xi_semistable_input_raises():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    flat = FlatBundle.from_chart0(Bundle.free(curve, 2), RingMatrix.zeros(d, 2, 2))
    with pytest.raises(SemistableInput):
        xi_step(DeRhamBundle(flat, HodgeFiltration.trivial(flat.bundle)))


# -- the canonical filtration ------------------------------------------------


def test_simpson_trivial_on_semistable_bundle():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    flat = FlatBundle.from_chart0(Bundle.free(curve, 2), RingMatrix.zeros(d, 2, 2))
    fil, log = simpson_filtration(flat)
    assert fil.level == 0 and log == ()
    ok, _ = is_higgs_semistable(grade(flat, fil).graded)
    assert ok


def test_simpson_refuses_mixed_type_with_witness():
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    V = Bundle.sum_of_lines(curve, (0, 3))
    flat = FlatBundle.from_chart0(V, RingMatrix.zeros(d, 2, 2))
    with pytest.raises(NotNablaSemistable) as err:
        simpson_filtration(flat)
    assert err.value.witness is not None
    assert err.value.witness.degree() == 3 and err.value.witness.rank == 1

    with pytest.raises(NotNablaSemistable):
        simpson_filtration(transform_36())


def test_simpson_on_transform_of_semistable_input():
    rng = random.Random(5)
    d = Zmod(3, 1)
    curve = ProjectiveLine(d)
    for rank in (1, 2, 3):
        E = Bundle.free(curve, rank)
        H = inverse_cartier_1(HiggsBundle.zero(E))
        fil, log = simpson_filtration(H)
        assert fil.level == 0 and log == ()
        ok, _ = is_higgs_semistable(grade(H, fil).graded)
        assert ok


def test_simpson_affine():
    d = Zmod(5, 1)
    flat = FlatBundle.from_chart0(
        Bundle.free(AffineLine(d), 2), RingMatrix.zeros(d, 2, 2)
    )
    fil, log = simpson_filtration(flat)
    assert fil.level == 0 and log == ()


def test_semistable_corpus_terminates_quickly():
    rng = random.Random(17)
    count = 0
    for p in (3, 5, 7):
        d = Zmod(p, 1)
        curve = ProjectiveLine(d)
        for rank in (1, 2, 3):
            for _ in range(4):
                flat = conjugated_trivial_flat(rng, curve, rank)
                ok, _ = is_nabla_semistable(flat)
                assert ok
                fil, log = simpson_filtration(flat)
                assert fil.level == 0 and log == ()
                ok, _ = is_higgs_semistable(grade(flat, fil).graded)
                assert ok
                count += 1
    assert count >= 30


# -- window descent bookkeeping ----------------------------------------------


def test_window_descent_checks():
    mk = lambda mu, r, lvl: DescentRecord(Fraction(mu), r, lvl)
    check_window_descent([mk(3, 1, 1), mk(2, 1, 1), mk(1, 1, 1)])
    check_window_descent([mk(3, 2, 2), mk(3, 1, 2), mk(2, 2, 2)])
    with pytest.raises(AssertionError):
        check_window_descent([mk(2, 1, 1), mk(3, 1, 1)])
    with pytest.raises(AssertionError):
        check_window_descent([mk(2, 1, 1), mk(2, 1, 1)])
    with pytest.raises(AssertionError):
        check_window_descent([mk(3, 2, 2), mk(3, 2, 2), mk(3, 2, 2)])
    # incomplete trailing window is not judged
    check_window_descent([mk(3, 2, 3), mk(3, 2, 3)])
