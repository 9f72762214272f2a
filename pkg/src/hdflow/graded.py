"""Hodge filtrations, their gradings, and graded Higgs bundles.

A filtration is a descending chain of saturated subbundles
Fil^0 = V > Fil^1 > ... > Fil^n > 0 stored by its proper steps.  Grading a
flat bundle along a transversal filtration is done in adapted frames: per
chart, a unimodular frame whose column blocks run through the filtration
from the deepest step outward, so that the transition becomes block
triangular and the connection block subdiagonal; the graded pieces and the
induced grade-lowering maps are read off as blocks.

The induced maps are O-linear and satisfy the Higgs-type chart rule with
the piece transitions, which is re-verified exactly on construction.
"""

from dataclasses import dataclass
from fractions import Fraction

from .bundles import (
    Bundle,
    FlatBundle,
    full_subbundle,
)
from .errors import SearchBudgetExceeded, TransversalityViolated
from .ringmath import (
    LaurentPoly,
    RingMatrix,
    field_nullspace,
    poly_solve,
    unimodular_completion,
)


class HodgeFiltration:
    """Descending flag of saturated subbundles; steps hold Fil^1..Fil^n."""

    def __init__(self, parent, steps=()):
        self.parent = parent
        self.steps = tuple(steps)
        for S in self.steps:
            if S.parent != parent:
                raise ValueError("filtration step has a different parent")

    @classmethod
    def trivial(cls, parent):
        return cls(parent, ())

    @property
    def level(self):
        return len(self.steps)

    def rank_at(self, i):
        """rank of Fil^i with the standard extension by V and 0."""
        if i <= 0:
            return self.parent.rank
        if i > self.level:
            return 0
        return self.steps[i - 1].rank

    def step(self, i):
        """Fil^i as a subbundle, None meaning the zero sheaf."""
        if i <= 0:
            return full_subbundle(self.parent)
        if i > self.level:
            return None
        return self.steps[i - 1]

    def validate(self):
        prev = full_subbundle(self.parent)
        for S in self.steps:
            S.validate()
            if S.rank == 0 or not prev.contains_chart0(S.basis[0]):
                raise ValueError("filtration steps are not nested")
            prev = S
        return self

    def is_strict(self):
        ranks = [self.parent.rank] + [S.rank for S in self.steps]
        return all(a > b for a, b in zip(ranks, ranks[1:]))

    def __eq__(self, other):
        return (
            isinstance(other, HodgeFiltration)
            and self.parent == other.parent
            and self.level == other.level
            and all(
                a.rank == b.rank and a.same_as(b)
                for a, b in zip(self.steps, other.steps)
            )
        )


def reduce_filtration(filtration):
    """Drop redundant steps (equal to the previous one or to the whole
    space), keeping the grading up to index shift; idempotent, and the
    result is anchored: Fil^0 = V and Fil^1 is proper."""
    out = []
    prev_rank = filtration.parent.rank
    for S in filtration.steps:
        if S.rank == prev_rank:
            continue
        out.append(S)
        prev_rank = S.rank
    return HodgeFiltration(filtration.parent, out)


def transversality_offender(flat, filtration):
    """First index i with nabla(Fil^i) not inside Fil^{i-1} tensor forms,
    or None; the chart-0 check is exact because the steps are saturated."""
    for i in range(1, filtration.level + 1):
        S = filtration.steps[i - 1]
        B = S.basis[0]
        image = B.derivative().add(flat.A[0].mul(B))
        target = filtration.step(i - 1)
        if not target.contains_chart0(image):
            return i
    return None


def is_transversal(flat, filtration):
    return transversality_offender(flat, filtration) is None


@dataclass
class DeRhamBundle:
    """Flat bundle with a transversal Hodge filtration."""

    flat: FlatBundle
    filtration: HodgeFiltration

    def validate(self):
        if self.filtration.parent != self.flat.bundle:
            raise ValueError("filtration belongs to a different bundle")
        self.filtration.validate()
        bad = transversality_offender(self.flat, self.filtration)
        if bad is not None:
            raise TransversalityViolated(
                "nabla(Fil^%d) escapes Fil^%d" % (bad, bad - 1)
            )
        return self


class GradedHiggsBundle:
    """Graded pieces E^0..E^w with grade-lowering maps theta^i: E^i ->
    E^{i-1} tensor forms; maps[k] holds theta^{k+1} per chart."""

    def __init__(self, pieces, maps):
        self.pieces = tuple(pieces)
        self.maps = tuple(tuple(m) for m in maps)
        if not self.pieces:
            raise ValueError("a graded object needs at least one piece")
        self.curve = self.pieces[0].curve
        if len(self.maps) != len(self.pieces) - 1:
            raise ValueError("one connecting map per adjacent grade pair")
        for k, per_chart in enumerate(self.maps):
            if len(per_chart) != self.curve.ncharts:
                raise ValueError("one matrix per chart required")
            for M in per_chart:
                if (
                    M.nrows != self.pieces[k].rank
                    or M.ncols != self.pieces[k + 1].rank
                ):
                    raise ValueError("connecting map shape mismatch")

    @property
    def weight(self):
        return len(self.pieces) - 1

    @property
    def domain(self):
        return self.curve.domain

    @property
    def rank(self):
        return sum(P.rank for P in self.pieces)

    def degree(self):
        return sum(P.degree() for P in self.pieces)

    def slope(self):
        return Fraction(self.degree(), self.rank)

    def validate(self):
        p = self.domain.p
        if self.weight > p - 2:
            raise ValueError("grading weight exceeds p-2")
        if not self.curve.is_projective:
            return self
        d = self.domain
        s_inv = LaurentPoly.var(d, -1)
        jac = self.curve.jacobian_factor(d)
        for k, per_chart in enumerate(self.maps):
            tgt_hat = self.pieces[k].chart1_transition()
            src_hat = self.pieces[k + 1].chart1_transition()
            want = (
                tgt_hat.mul(per_chart[0].substitute(s_inv))
                .mul(src_hat.inverse())
                .scale(jac)
            )
            if want != per_chart[1]:
                raise ValueError(
                    "grade-%d connecting map breaks the chart rule" % (k + 1)
                )
        return self

    def total(self):
        """The underlying Higgs bundle: block-diagonal transition in grade
        order 0..w, block-superdiagonal Higgs matrix."""
        from .bundles import HiggsBundle

        d = self.domain
        ranks = [P.rank for P in self.pieces]
        n = sum(ranks)
        offs = []
        run = 0
        for r in ranks:
            offs.append(run)
            run += r
        thetas = []
        for c in range(self.curve.ncharts):
            rows = [[LaurentPoly.zero(d) for _ in range(n)] for _ in range(n)]
            for k, per_chart in enumerate(self.maps):
                M = per_chart[c]
                for i in range(M.nrows):
                    for j in range(M.ncols):
                        rows[offs[k] + i][offs[k + 1] + j] = M.entry(i, j)
            thetas.append(RingMatrix(d, rows))
        if not self.curve.is_projective:
            return HiggsBundle(Bundle(self.curve, n), tuple(thetas))
        g = None
        for P in self.pieces:
            g = P.transition if g is None else block_diag(g, P.transition)
        return HiggsBundle(Bundle(self.curve, n, g), tuple(thetas))

    def __eq__(self, other):
        return (
            isinstance(other, GradedHiggsBundle)
            and self.pieces == other.pieces
            and self.maps == other.maps
        )


def block_diag(A, B):
    d = A.domain
    top = A.hstack(RingMatrix.zeros(d, A.nrows, B.ncols))
    bot = RingMatrix.zeros(d, B.nrows, A.ncols).hstack(B)
    return top.vstack(bot)


class Grading:
    """Adapted-frame data of a graded flat bundle.

    frames[c] is the unimodular chart-c frame whose columns run through the
    filtration deepest-first: grade i occupies columns [rank Fil^{i+1},
    rank Fil^i).  aprime[c] is the connection in the adapted frame.
    """

    def __init__(self, flat, filtration, frames, aprime, graded):
        self.flat = flat
        self.filtration = filtration
        self.frames = frames
        self.aprime = aprime
        self.graded = graded

    def block_cols(self, i):
        return range(
            self.filtration.rank_at(i + 1), self.filtration.rank_at(i)
        )

    def piece_to_ambient(self, i, cols, chart=0):
        """Carry chart columns over a grade-i piece into the ambient bundle
        (a choice of lift through the quotient)."""
        block = self.frames[chart].columns(self.block_cols(i))
        return block.mul(cols)


def _adapted_frame(filtration, chart):
    """Unimodular frame whose leading column blocks span the filtration
    steps, deepest step first."""
    parent = filtration.parent
    d = parent.domain
    n = filtration.level
    if n == 0:
        return RingMatrix.identity(d, parent.rank)
    ad = filtration.steps[n - 1].basis[chart]
    for i in range(n - 1, 0, -1):
        B = filtration.steps[i - 1].basis[chart]
        coords = poly_solve(B, ad, laurent_denominators=True)
        if coords is None or not coords.is_polynomial():
            raise ValueError("filtration steps are not nested")
        ad = B.mul(unimodular_completion(coords))
    return unimodular_completion(ad)


def grade(flat, filtration):
    """Graded Higgs bundle of a transversal filtration, with the adapted
    frames exposed for later lifting of graded data."""
    bundle = flat.bundle
    d = bundle.domain
    if not filtration.is_strict():
        raise ValueError("grade needs a strictly decreasing filtration")
    n = filtration.level
    frames = tuple(
        _adapted_frame(filtration, c) for c in range(bundle.curve.ncharts)
    )
    aprime = []
    for c in range(bundle.curve.ncharts):
        T = frames[c]
        Tinv = T.inverse()
        aprime.append(Tinv.mul(flat.A[c]).mul(T).add(Tinv.mul(T.derivative())))
    aprime = tuple(aprime)

    blocks = [
        list(range(filtration.rank_at(i + 1), filtration.rank_at(i)))
        for i in range(n + 1)
    ]
    for c in range(bundle.curve.ncharts):
        for b in range(n + 1):
            for a in range(b - 1):
                chunk = aprime[c].submatrix(blocks[a], blocks[b])
                if not chunk.is_zero():
                    raise TransversalityViolated(
                        "nabla(Fil^%d) escapes Fil^%d" % (b, b - 1)
                    )

    if bundle.curve.is_projective:
        s_inv = LaurentPoly.var(d, -1)
        ghat = bundle.chart1_transition()
        gprime_hat = frames[1].inverse().mul(ghat).mul(frames[0].substitute(s_inv))
        for b in range(n + 1):
            for a in range(b):
                chunk = gprime_hat.submatrix(blocks[a], blocks[b])
                if not chunk.is_zero():
                    raise ValueError("filtration charts do not glue")
        pieces = tuple(
            Bundle(
                bundle.curve,
                len(blocks[i]),
                gprime_hat.submatrix(blocks[i], blocks[i]).substitute(s_inv),
            )
            for i in range(n + 1)
        )
    else:
        pieces = tuple(
            Bundle(bundle.curve, len(blocks[i])) for i in range(n + 1)
        )

    maps = tuple(
        tuple(
            aprime[c].submatrix(blocks[i - 1], blocks[i])
            for c in range(bundle.curve.ncharts)
        )
        for i in range(1, n + 1)
    )
    graded = GradedHiggsBundle(pieces, maps).validate()
    return Grading(flat, filtration, frames, aprime, graded)


# ---------------------------------------------------------------------------
# isomorphism search for graded objects


@dataclass
class GradedMap:
    """Grade-preserving map between graded Higgs bundles: one matrix per
    grade per chart, in the original piece frames."""

    blocks: tuple

    def validate(self, A, B):
        if len(self.blocks) != len(A.pieces) or len(A.pieces) != len(B.pieces):
            raise ValueError("grade count mismatch")
        d = A.domain
        for i, per_chart in enumerate(self.blocks):
            for c, M in enumerate(per_chart):
                if M.nrows != B.pieces[i].rank or M.ncols != A.pieces[i].rank:
                    raise ValueError("block shape mismatch at grade %d" % i)
                if not M.is_polynomial():
                    raise ValueError("block has a pole at grade %d" % i)
        if A.curve.is_projective:
            s_inv = LaurentPoly.var(d, -1)
            for i, per_chart in enumerate(self.blocks):
                want = (
                    B.pieces[i].chart1_transition()
                    .mul(per_chart[0].substitute(s_inv))
                    .mul(A.pieces[i].chart1_transition().inverse())
                )
                if want != per_chart[1]:
                    raise ValueError("grade-%d block breaks the chart rule" % i)
        for k in range(len(A.maps)):
            for c in range(A.curve.ncharts):
                left = self.blocks[k][c].mul(A.maps[k][c])
                right = B.maps[k][c].mul(self.blocks[k + 1][c])
                if left != right:
                    raise ValueError(
                        "map fails to intertwine the grade-%d component" % (k + 1)
                    )
        return self

    def is_isomorphism(self):
        for per_chart in self.blocks:
            for M in per_chart:
                if M.nrows != M.ncols:
                    return False
                det = M.det()
                if M.nrows and (det.degree() != 0 or not det.is_unit()):
                    return False
        return True


def _identity_graded_map(A):
    d = A.domain
    return GradedMap(
        tuple(
            tuple(
                RingMatrix.identity(d, P.rank)
                for _ in range(A.curve.ncharts)
            )
            for P in A.pieces
        )
    )


def _field_elements(d):
    if hasattr(d, "elements"):
        return list(d.elements())
    return [d.coerce(k) for k in range(d.p)]


def graded_higgs_isomorphic(A, B, budget=200000):
    """Search for a grade-preserving isomorphism intertwining the maps.

    The unknowns are the split-frame entries of each grade block, with
    degrees bounded by the splitting gaps; the intertwining relations are a
    linear system over the coefficient field, and candidates from the
    solution space are tried in a fixed element order, so the returned
    certificate is the first valid one in that order.  None means no
    isomorphism exists with coefficients in the instance's field.
    """
    if len(A.pieces) != len(B.pieces):
        return None
    if A == B:
        return _identity_graded_map(A)
    d = A.domain
    for PA, PB in zip(A.pieces, B.pieces):
        if PA.rank != PB.rank:
            return None
        if A.curve.is_projective and PA.splitting_type() != PB.splitting_type():
            return None
    if not A.curve.is_projective:
        types = [[0] * P.rank for P in A.pieces]
        to_split_A = [RingMatrix.identity(d, P.rank) for P in A.pieces]
        to_split_B = list(to_split_A)
        from_split_B = list(to_split_A)
        maps_A = [m[0] for m in A.maps]
        maps_B = [m[0] for m in B.maps]
    else:
        types = [P.splitting_type() for P in A.pieces]
        sd_A = [P.split_data() for P in A.pieces]
        sd_B = [P.split_data() for P in B.pieces]
        to_split_A = [sd.Q for sd in sd_A]
        to_split_B = [sd.Q for sd in sd_B]
        from_split_B = [sd.Qinv for sd in sd_B]
        maps_A = [
            sd_A[k].Q.mul(A.maps[k][0]).mul(sd_A[k + 1].Qinv)
            for k in range(len(A.maps))
        ]
        maps_B = [
            sd_B[k].Q.mul(B.maps[k][0]).mul(sd_B[k + 1].Qinv)
            for k in range(len(B.maps))
        ]

    # unknown layout: per grade, per entry, per monomial exponent
    slots = []
    for i, tp in enumerate(types):
        for r in range(len(tp)):
            for cidx in range(len(tp)):
                top = tp[r] - tp[cidx]
                for e in range(top + 1):
                    slots.append((i, r, cidx, e))
    total = len(slots)
    index = {key: k for k, key in enumerate(slots)}

    def unknown_matrix(i, coeffs):
        tp = types[i]
        rows = [
            [LaurentPoly.zero(d) for _ in range(len(tp))]
            for _ in range(len(tp))
        ]
        for r in range(len(tp)):
            for cidx in range(len(tp)):
                poly = {}
                for e in range(max(0, tp[r] - tp[cidx]) + 1):
                    key = (i, r, cidx, e)
                    if key in index:
                        v = coeffs[index[key]]
                        if v != d.zero:
                            poly[e] = v
                rows[r][cidx] = LaurentPoly(d, poly)
        return RingMatrix(d, rows)

    # linear equations: phi^{k} theta_A^{k+1} = theta_B^{k+1} phi^{k+1},
    # expanded entrywise per monomial
    equations = []
    for k in range(len(maps_A)):
        tgt_tp, src_tp = types[k], types[k + 1]
        for r in range(len(tgt_tp)):
            for cidx in range(len(src_tp)):
                per_exp = {}

                def add_term(exp, slot, value, per_exp=per_exp):
                    if slot < 0 or value == d.zero:
                        return
                    row = per_exp.setdefault(exp, {})
                    row[slot] = d.add(row.get(slot, d.zero), value)

                for m in range(len(tgt_tp)):
                    theta_entry = maps_A[k].entry(m, cidx)
                    for te, tv in theta_entry.coeffs.items():
                        for e in range(max(0, tgt_tp[r] - tgt_tp[m]) + 1):
                            key = (k, r, m, e)
                            if key in index:
                                add_term(te + e, index[key], tv)
                for m in range(len(src_tp)):
                    theta_entry = maps_B[k].entry(r, m)
                    for te, tv in theta_entry.coeffs.items():
                        for e in range(max(0, src_tp[m] - src_tp[cidx]) + 1):
                            key = (k + 1, m, cidx, e)
                            if key in index:
                                add_term(te + e, index[key], d.neg(tv))
                equations.extend(per_exp.values())

    rows = []
    for eq in equations:
        rows.append([eq.get(j, d.zero) for j in range(total)])
    if rows:
        kernel = field_nullspace(rows, d, total)
    else:
        kernel = [
            [d.one if i == j else d.zero for j in range(total)]
            for i in range(total)
        ]
    if not kernel:
        return None

    elements = _field_elements(d)
    dim = len(kernel)
    tried = 0
    combo = [0] * dim
    while True:
        tried += 1
        if tried > budget:
            raise SearchBudgetExceeded(
                "isomorphism search exceeded %d candidates" % budget
            )
        coeffs = [d.zero] * total
        nonzero = False
        for j, pick in enumerate(combo):
            v = elements[pick]
            if v == d.zero:
                continue
            nonzero = True
            for t_idx in range(total):
                coeffs[t_idx] = d.add(
                    coeffs[t_idx], d.mul(v, kernel[j][t_idx])
                )
        if nonzero:
            mats = [unknown_matrix(i, coeffs) for i in range(len(types))]
            if all(
                M.nrows == 0
                or (M.det().degree() == 0 and M.det().is_unit())
                for M in mats
            ):
                blocks = []
                for i, M in enumerate(mats):
                    phi0 = from_split_B[i].mul(M).mul(to_split_A[i])
                    per_chart = [phi0]
                    if A.curve.is_projective:
                        s_inv = LaurentPoly.var(d, -1)
                        phi1 = (
                            B.pieces[i].chart1_transition()
                            .mul(phi0.substitute(s_inv))
                            .mul(A.pieces[i].chart1_transition().inverse())
                        )
                        per_chart.append(_expect_polynomial(phi1))
                    blocks.append(tuple(per_chart))
                out = GradedMap(tuple(blocks))
                out.validate(A, B)
                return out
        j = dim - 1
        while j >= 0:
            combo[j] += 1
            if combo[j] < len(elements):
                break
            combo[j] = 0
            j -= 1
        if j < 0:
            return None


def _expect_polynomial(M):
    if not M.is_polynomial():
        raise ValueError("chart-1 block unexpectedly has a pole")
    return M
