"""Flow driver: iterate the inverse transform under a filtration policy.

A flow step sends a graded Higgs bundle through the level-one inverse
transform, picks a transversal filtration (the canonical one from the
semistability descent, or one supplied by the caller), and reads off the
next graded Higgs bundle.  Degree multiplies by p at every step, so a
periodic flow forces degree zero; periodicity is certified by an explicit
graded isomorphism found within a declared search field and trace horizon.

Periodic tuples of period f can be folded into one-periodic objects over
F_{p^f} carrying a multiplication endomorphism (one scalar block per flow
stage, rotated by the period isomorphism); unfolding recovers the stages as
eigenspaces.  One-periodic tuples yield a per-chart relative Frobenius with
three exact certificates: invertibility, horizontality against the two
transform connections, and cross-chart compatibility through the twisted
gluing.
"""

from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction

from .bundles import (
    Bundle,
    BundleMap,
    Subbundle,
    frobenius_pullback_matrix,
)
from .cartier import inverse_cartier_1, inverse_cartier_1_on_map
from .errors import (
    BadMinimalPolynomial,
    CertificateFailed,
    HdflowError,
    NotPrimitive,
    PolicyFiltrationInvalid,
)
from .filtration import is_higgs_semistable, simpson_filtration
from .graded import (
    DeRhamBundle,
    GradedHiggsBundle,
    GradedMap,
    HodgeFiltration,
    _identity_graded_map,
    block_diag,
    grade,
    graded_higgs_isomorphic,
    reduce_filtration,
)
from .ringmath import (
    GF,
    LaurentPoly,
    RingMatrix,
    field_nullspace,
    poly_solve,
    smith_form_poly,
)

DEFAULT_ISO_BUDGET = 200000


# ---------------------------------------------------------------------------
# policies, stages, traces


@dataclass(frozen=True)
class FlowPolicy:
    """How each step chooses its filtration, how long to run, and the field
    degree used when searching for period isomorphisms."""

    rule: str = "canonical"
    max_steps: int = 1
    field_degree: int = 1
    filtrations: tuple = ()

    def __post_init__(self):
        if self.rule not in ("canonical", "supplied"):
            raise ValueError("rule must be 'canonical' or 'supplied'")
        if self.max_steps < 1:
            raise ValueError("a flow needs at least one step")
        if self.field_degree < 1:
            raise ValueError("the search field degree must be positive")


@dataclass
class FlowStage:
    """One stage: the graded object entering the step, its transform and
    filtration (None on the final, unexpanded stage), and its invariants."""

    higgs: GradedHiggsBundle
    flat: object
    filtration: object
    degree: int
    slope: Fraction


@dataclass
class PeriodReport:
    preperiod: int
    period: int
    phi: GradedMap


@dataclass
class FlowTrace:
    stages: tuple
    periodicity: object = None

    def higgs_terms(self):
        return [st.higgs for st in self.stages]

    def degrees(self):
        return [st.degree for st in self.stages]


def _adopt_filtration(flat, fil_spec):
    """Re-express a supplied filtration on the transform's own bundle and
    check nesting plus transversality."""
    try:
        steps = [
            Subbundle.from_chart0_span(flat.bundle, S.basis[0])
            for S in fil_spec.steps
        ]
        fil = HodgeFiltration(flat.bundle, steps)
        fil.validate()
        fil = reduce_filtration(fil)
        DeRhamBundle(flat, fil).validate()
    except (HdflowError, ValueError) as err:
        raise PolicyFiltrationInvalid(str(err))
    return fil


def flow_step(G, policy=None, atlas=None, step_index=0):
    """One step: transform, filter per policy, take the graded object.

    Degree scaling by p is asserted on projective models."""
    if policy is None:
        policy = FlowPolicy()
    G.validate()
    H = inverse_cartier_1(G.total(), lifting=atlas)
    if policy.rule == "canonical":
        fil, _ = simpson_filtration(H)
    else:
        if step_index >= len(policy.filtrations):
            raise PolicyFiltrationInvalid(
                "no filtration supplied for step %d" % step_index
            )
        fil = _adopt_filtration(H, policy.filtrations[step_index])
    nxt = grade(H, fil).graded
    if G.curve.is_projective:
        assert nxt.degree() == G.domain.p * G.degree()
    return H, fil, nxt


def run_flow(G0, policy=None, atlas=None):
    """Iterate flow_step for policy.max_steps steps, record every stage,
    assert degree scaling throughout, and attach a periodicity report.

    Canonical-policy flows started at a semistable graded object keep
    every later graded term semistable; this is asserted per stage."""
    if policy is None:
        policy = FlowPolicy()
    track_semistable = policy.rule == "canonical" and is_higgs_semistable(G0)[0]
    stages = []
    cur = G0
    for i in range(policy.max_steps):
        H, fil, nxt = flow_step(cur, policy, atlas, step_index=i)
        if track_semistable:
            ok, _ = is_higgs_semistable(nxt)
            assert ok
        stages.append(FlowStage(cur, H, fil, cur.degree(), cur.slope()))
        cur = nxt
    stages.append(FlowStage(cur, None, None, cur.degree(), cur.slope()))
    trace = FlowTrace(tuple(stages))
    trace.periodicity = detect_period(trace, policy.field_degree)
    return trace


# ---------------------------------------------------------------------------
# scalar extension


def _extend_poly(f, K):
    return LaurentPoly(K, {e: K.coerce(c) for e, c in f.coeffs.items()})


def _extend_matrix(M, K):
    return RingMatrix(
        K,
        [
            [_extend_poly(M.entry(i, j), K) for j in range(M.ncols)]
            for i in range(M.nrows)
        ],
    )


def extend_graded(G, K):
    """Base change a graded Higgs bundle to a larger coefficient field with
    the same characteristic."""
    if G.domain == K:
        return G
    if K.p != G.domain.p:
        raise ValueError("scalar extension must preserve the characteristic")
    curve = type(G.curve)(K)
    pieces = []
    for P in G.pieces:
        if curve.is_projective:
            pieces.append(Bundle(curve, P.rank, _extend_matrix(P.transition, K)))
        else:
            pieces.append(Bundle(curve, P.rank))
    maps = tuple(
        tuple(_extend_matrix(M, K) for M in per) for per in G.maps
    )
    return GradedHiggsBundle(pieces, maps)


def extend_graded_map(phi, K):
    return GradedMap(
        tuple(
            tuple(_extend_matrix(M, K) for M in per) for per in phi.blocks
        )
    )


# ---------------------------------------------------------------------------
# periodicity


def detect_period(trace, f_search=1, budget=DEFAULT_ISO_BUDGET):
    """Smallest (preperiod, period) whose graded terms are isomorphic over
    the degree-f_search extension, with the certifying map; None when no
    pair inside the trace matches."""
    terms = trace.higgs_terms()
    if len(terms) < 2:
        raise ValueError("periodicity needs a trace of length at least two")
    d = terms[0].domain
    if f_search > 1:
        K = GF(d.p, f_search)
        terms = [extend_graded(E, K) for E in terms]
    n = len(terms)
    for f in range(1, n):
        for e in range(n - f):
            if terms[e].degree() != terms[e + f].degree():
                continue
            phi = graded_higgs_isomorphic(terms[e + f], terms[e], budget=budget)
            if phi is not None:
                if terms[e].curve.is_projective:
                    assert terms[e].degree() == 0
                return PeriodReport(e, f, phi)
    return None


# ---------------------------------------------------------------------------
# periodic tuples


@dataclass
class PeriodicTuple:
    """(E, theta, Fil_0, ..., Fil_{f-1}, phi): the filtrations drive f flow
    steps from E and phi identifies the final graded term with E."""

    higgs: GradedHiggsBundle
    filtrations: tuple
    phi: GradedMap
    atlas: object = None
    _stages: tuple = dataclass_field(default=None, repr=False, compare=False)
    _flats: tuple = dataclass_field(default=None, repr=False, compare=False)
    _fils: tuple = dataclass_field(default=None, repr=False, compare=False)

    @property
    def period(self):
        return len(self.filtrations)

    def validate(self):
        if self.period < 1:
            raise ValueError("a periodic tuple needs at least one filtration")
        stages = [self.higgs]
        flats = []
        fils = []
        cur = self.higgs
        for i in range(self.period):
            H = inverse_cartier_1(cur.total(), lifting=self.atlas)
            fil = _adopt_filtration(H, self.filtrations[i])
            flats.append(H)
            fils.append(fil)
            cur = grade(H, fil).graded
            stages.append(cur)
        self.phi.validate(stages[-1], stages[0])
        if not self.phi.is_isomorphism():
            raise ValueError("the period map fails to be an isomorphism")
        if self.higgs.curve.is_projective:
            assert self.higgs.degree() == 0
        self._stages = tuple(stages)
        self._flats = tuple(flats)
        self._fils = tuple(fils)
        self.filtrations = tuple(fils)
        return self

    def stages(self):
        if self._stages is None:
            self.validate()
        return self._stages

    def flats(self):
        if self._flats is None:
            self.validate()
        return self._flats


def compose_graded_maps(outer, inner):
    """Blockwise composite, outer after inner."""
    return GradedMap(
        tuple(
            tuple(po[c].mul(pi[c]) for c in range(len(po)))
            for po, pi in zip(outer.blocks, inner.blocks)
        )
    )


def total_map(phi, A, B):
    """The map of total Higgs bundles underlying a graded map, blocks laid
    out in grade order to match GradedHiggsBundle.total()."""
    mats = []
    for c in range(A.curve.ncharts):
        M = None
        for per in phi.blocks:
            M = per[c] if M is None else block_diag(M, per[c])
        mats.append(M)
    return BundleMap(A.total().bundle, B.total().bundle, tuple(mats))


def _transport_filtration(psi_graded, src_graded, tgt_graded, tgt_flat, fil):
    """Pull a filtration on the transform of tgt_graded back to the
    transform of src_graded along the transform of a graded isomorphism."""
    H_src = inverse_cartier_1(src_graded.total())
    Psi = inverse_cartier_1_on_map(
        total_map(psi_graded, src_graded, tgt_graded), H_src, tgt_flat
    )
    inv0 = Psi.phi[0].inverse()
    steps = [
        Subbundle.from_chart0_span(H_src.bundle, inv0.mul(S.basis[0]))
        for S in fil.steps
    ]
    new_fil = HodgeFiltration(H_src.bundle, steps)
    DeRhamBundle(H_src, new_fil).validate()
    return H_src, new_fil


def shift_tuple(T, budget=DEFAULT_ISO_BUDGET):
    """Rotate a periodic tuple to start one flow step later; the missing
    final filtration is the transport of Fil_0 through the period map."""
    stages = T.stages()
    fils = T._fils
    flats = T._flats
    f = T.period
    H_last, fil_last = _transport_filtration(
        T.phi, stages[f], stages[0], flats[0], fils[0]
    )
    nxt = grade(H_last, fil_last).graded
    phi_new = graded_higgs_isomorphic(nxt, stages[1], budget=budget)
    if phi_new is None:
        raise HdflowError("no intertwiner found for the shifted tuple")
    return PeriodicTuple(
        stages[1], tuple(fils[1:]) + (fil_last,), phi_new, T.atlas
    ).validate()


def lengthen_tuple(T, l, budget=DEFAULT_ISO_BUDGET):
    """Repeat the filtration data l times, transporting it along the
    accumulated period isomorphism; the period map becomes the folded
    composite."""
    if l < 1:
        raise ValueError("lengthening factor must be positive")
    if l == 1:
        return T
    stages = T.stages()
    fils = list(T._fils)
    flats = T._flats
    f = T.period
    all_fils = list(fils)
    psi = T.phi
    cur = stages[f]
    for _ in range(1, l):
        for i in range(f):
            H_cur, fil_cur = _transport_filtration(
                psi, cur, stages[i], flats[i], fils[i]
            )
            all_fils.append(fil_cur)
            nxt = grade(H_cur, fil_cur).graded
            psi = graded_higgs_isomorphic(nxt, stages[i + 1], budget=budget)
            if psi is None:
                raise HdflowError("no intertwiner found while lengthening")
            cur = nxt
        psi = compose_graded_maps(T.phi, psi)
    return PeriodicTuple(T.higgs, tuple(all_fils), psi, T.atlas).validate()


def tuples_isomorphic(T1, T2, budget=DEFAULT_ISO_BUDGET):
    """Bounded tuple-isomorphism certificate: equal periods, matching
    filtration rank profiles, and an isomorphism of the starting graded
    objects; returns the certifying map or None."""
    if T1.period != T2.period:
        return None
    T1.stages()
    T2.stages()
    prof1 = [
        [fil.rank_at(i) for i in range(1, fil.level + 1)] for fil in T1._fils
    ]
    prof2 = [
        [fil.rank_at(i) for i in range(1, fil.level + 1)] for fil in T2._fils
    ]
    if prof1 != prof2:
        return None
    return graded_higgs_isomorphic(T1.higgs, T2.higgs, budget=budget)


# ---------------------------------------------------------------------------
# endomorphism packing


@dataclass
class PackedEndostructure:
    """One-periodic tuple over F_{p^f} carrying the scalar-block
    endomorphism; summand_ranks records per-stage per-grade ranks."""

    carrier: PeriodicTuple
    endo: GradedMap
    xi: object
    field: object
    summand_ranks: tuple


def _frobenius_orbit(K, xi):
    """The Frobenius orbit of xi, which must have exact length [K : F_p]."""
    orbit = [xi]
    for e in range(1, K.f):
        nxt = K.frobenius(orbit[-1])
        if nxt == xi:
            raise NotPrimitive(
                "element already returns after %d Frobenius twists" % e
            )
        orbit.append(nxt)
    if K.frobenius(orbit[-1]) != xi:
        raise NotPrimitive("Frobenius orbit escapes the declared field")
    return orbit


def _scalar_block(K, scalars, ranks):
    """Block-diagonal constant matrix with scalars[i] on a rank-ranks[i]
    identity block."""
    n = sum(ranks)
    M = RingMatrix.zeros(K, n, n)
    off = 0
    for c, r in zip(scalars, ranks):
        for k in range(r):
            M.rows[off + k][off + k] = LaurentPoly.const(K, c)
        off += r
    return M


def direct_sum_graded(summands):
    """Grade-wise direct sum of graded Higgs bundles of equal weight."""
    w = summands[0].weight
    if any(G.weight != w for G in summands):
        raise ValueError("direct sum needs summands of equal weight")
    pieces = []
    for j in range(w + 1):
        P = summands[0].pieces[j]
        for G in summands[1:]:
            P = P.direct_sum(G.pieces[j])
        pieces.append(P)
    maps = []
    for k in range(w):
        per_chart = []
        for c in range(summands[0].curve.ncharts):
            M = None
            for G in summands:
                M = G.maps[k][c] if M is None else block_diag(M, G.maps[k][c])
            per_chart.append(M)
        maps.append(tuple(per_chart))
    return GradedHiggsBundle(pieces, tuple(maps))


def pack_endostructure(T, xi, field=None, budget=DEFAULT_ISO_BUDGET):
    """Fold a period-f tuple into a one-periodic tuple over F_{p^f} with the
    multiplication endomorphism s; the commutation of s with the block
    rotation is verified as an exact matrix identity.

    The element xi must generate the degree-f extension: its Frobenius
    orbit has length exactly f, and the top twist returns to xi."""
    stages0 = T.stages()
    f = T.period
    p = T.higgs.domain.p
    K = field if field is not None else GF(p, f)
    if K.p != p or K.f != f:
        raise ValueError("the packing field must be F_{p^period}")
    xi = K.coerce(xi)
    scalars = _frobenius_orbit(K, xi)

    stages = [extend_graded(E, K) for E in stages0]
    phi_K = extend_graded_map(T.phi, K)
    w = stages[0].weight
    if any(E.weight != w for E in stages[:f]):
        raise ValueError("stages must share a weight to pack")
    big = direct_sum_graded(stages[:f])
    piece_ranks = [
        [stages[i].pieces[j].rank for j in range(w + 1)] for i in range(f)
    ]

    ncharts = big.curve.ncharts
    s_blocks = tuple(
        tuple(
            _scalar_block(K, scalars, [piece_ranks[i][j] for i in range(f)])
            for _ in range(ncharts)
        )
        for j in range(w + 1)
    )
    s = GradedMap(s_blocks)
    s.validate(big, big)

    # block rotation from the flow output (summand i carries stage i+1)
    rot_src = direct_sum_graded(stages[1 : f + 1])
    rot_blocks = []
    for j in range(w + 1):
        per_chart = []
        for c in range(ncharts):
            nrows = big.pieces[j].rank
            ncols = rot_src.pieces[j].rank
            M = RingMatrix.zeros(K, nrows, ncols)
            row_offs = [sum(piece_ranks[i][j] for i in range(i0)) for i0 in range(f)]
            src_ranks = [stages[i + 1].pieces[j].rank for i in range(f)]
            col_offs = [sum(src_ranks[:i0]) for i0 in range(f)]
            for i in range(f - 1):
                for k in range(src_ranks[i]):
                    M.rows[row_offs[i + 1] + k][col_offs[i] + k] = (
                        LaurentPoly.one(K)
                    )
            blk = phi_K.blocks[j][c]
            for a in range(blk.nrows):
                for b in range(blk.ncols):
                    M.rows[row_offs[0] + a][col_offs[f - 1] + b] = blk.entry(a, b)
            per_chart.append(M)
        rot_blocks.append(tuple(per_chart))
    rot = GradedMap(tuple(rot_blocks))
    rot.validate(rot_src, big)
    if not rot.is_isomorphism():
        raise HdflowError("the block rotation fails to be an isomorphism")

    # exact commutation identity: rot . (flow image of s) == s . rot
    flow_scalars = [K.frobenius(c) for c in scalars]
    s_flow_blocks = tuple(
        tuple(
            _scalar_block(
                K,
                flow_scalars,
                [stages[i + 1].pieces[j].rank for i in range(f)],
            )
            for _ in range(ncharts)
        )
        for j in range(w + 1)
    )
    s_flow = GradedMap(s_flow_blocks)
    s_flow.validate(rot_src, rot_src)
    lhs = compose_graded_maps(rot, s_flow)
    rhs = compose_graded_maps(s, rot)
    if lhs.blocks != rhs.blocks:
        raise HdflowError("endomorphism fails to commute with the rotation")

    # block filtration on the transform of the sum
    H_big = inverse_cartier_1(big.total())
    level = max(fil.level for fil in T._fils)
    embeds = _summand_embeddings(K, H_big.bundle.rank, piece_ranks)
    steps = []
    for k in range(1, level + 1):
        cols = None
        for i in range(f):
            S = T._fils[i].step(k)
            if S is None:
                continue
            part = embeds[i].mul(_extend_matrix(S.basis[0], K))
            cols = part if cols is None else cols.hstack(part)
        if cols is None:
            break
        steps.append(Subbundle.from_chart0_span(H_big.bundle, cols))
    fil_big = HodgeFiltration(H_big.bundle, steps)
    DeRhamBundle(H_big, fil_big).validate()

    out = grade(H_big, fil_big).graded
    chi = graded_higgs_isomorphic(out, rot_src, budget=budget)
    if chi is None:
        raise HdflowError("no identification of the packed flow output")
    phi_packed = compose_graded_maps(rot, chi)
    carrier = PeriodicTuple(big, (fil_big,), phi_packed).validate()
    return PackedEndostructure(
        carrier, s, xi, K, tuple(tuple(r) for r in piece_ranks)
    )


def _summand_embeddings(K, total_rank, piece_ranks):
    """Constant 0/1 matrices embedding each summand's total coordinates into
    the grade-major layout of the direct sum."""
    f = len(piece_ranks)
    w1 = len(piece_ranks[0])
    grade_offs = []
    run = 0
    for j in range(w1):
        grade_offs.append(run)
        run += sum(piece_ranks[i][j] for i in range(f))
    out = []
    for i in range(f):
        rows = []
        for j in range(w1):
            base = grade_offs[j] + sum(piece_ranks[i2][j] for i2 in range(i))
            for k in range(piece_ranks[i][j]):
                rows.append(base + k)
        M = RingMatrix.zeros(K, total_rank, len(rows))
        for col, r in enumerate(rows):
            M.rows[r][col] = LaurentPoly.one(K)
        out.append(M)
    return out


# ---------------------------------------------------------------------------
# endomorphism unpacking


def _poly_kernel(M):
    """Kernel columns of a polynomial matrix, or None when injective."""
    sf = smith_form_poly(M)
    size = min(M.nrows, M.ncols)
    free = []
    for i in range(M.ncols):
        di = sf.D.rows[i][i] if i < size else None
        if di is None or di.is_zero():
            free.append(i)
    if not free:
        return None
    return sf.Vinv.columns(free)


def _span_intersection_coords(B1, B2):
    """Columns u with B2 u in span(B1), spanning the intersection in B2's
    coordinates; None when the intersection is zero."""
    combined = B1.hstack(B2.neg())
    ker = _poly_kernel(combined)
    if ker is None:
        return None
    u = ker.submatrix(
        range(B1.ncols, B1.ncols + B2.ncols), range(ker.ncols)
    )
    if u.is_zero():
        return None
    return u


def _constant_entries(M):
    rows = []
    for i in range(M.nrows):
        row = []
        for j in range(M.ncols):
            e = M.entry(i, j)
            if any(k != 0 for k in e.coeffs):
                raise BadMinimalPolynomial(
                    "endomorphism blocks must be constant"
                )
            row.append(e.constant_term())
        rows.append(row)
    return rows


def _eigenspace_columns(K, M, lam):
    """Constant kernel basis of (M - lam) as a matrix, or None."""
    rows = _constant_entries(M)
    n = len(rows)
    shifted = [
        [
            K.sub(rows[i][j], lam) if i == j else rows[i][j]
            for j in range(n)
        ]
        for i in range(n)
    ]
    basis = field_nullspace(shifted, K, n)
    if not basis:
        return None
    return RingMatrix(
        K,
        [
            [LaurentPoly.const(K, v[i]) for v in basis]
            for i in range(n)
        ],
    )


def _restrict_map(basis_tgt, basis_src, M):
    """Solve basis_tgt . C = M . basis_src for the restricted block."""
    sol = poly_solve(basis_tgt, M.mul(basis_src))
    if sol is None:
        raise BadMinimalPolynomial(
            "eigenspaces are not preserved by the connecting maps"
        )
    return sol


def unpack_endostructure(packed, budget=DEFAULT_ISO_BUDGET):
    """Decompose a packed one-periodic tuple into eigenspaces of its
    endomorphism, recovering a tuple whose period is the field degree.

    The endomorphism must act with the full Frobenius orbit of xi as
    spectrum — equivalently its minimal polynomial is the irreducible
    degree-f polynomial of xi; anything smaller is rejected."""
    carrier = packed.carrier
    carrier.stages()
    K = packed.field
    f = K.f
    big = carrier.higgs
    s = packed.endo
    s.validate(big, big)
    orbit = _frobenius_orbit_checked(K, packed.xi)

    w = big.weight
    ncharts = big.curve.ncharts
    # eigen-decomposition per grade; completeness certifies the spectrum
    eig = []
    for i in range(f):
        per_grade = []
        for j in range(w + 1):
            cols = _eigenspace_columns(K, s.blocks[j][0], orbit[i])
            per_grade.append(cols)
        eig.append(per_grade)
    for j in range(w + 1):
        got = sum(
            0 if eig[i][j] is None else eig[i][j].ncols for i in range(f)
        )
        if got != big.pieces[j].rank:
            raise BadMinimalPolynomial(
                "eigenspaces of the declared spectrum do not fill grade %d"
                % j
            )

    # stage 0..f-1 graded objects from the eigen-bases
    summands = []
    embeds_total = []
    for i in range(f):
        pieces = []
        subs = []
        for j in range(w + 1):
            cols = eig[i][j]
            if cols is None:
                raise BadMinimalPolynomial(
                    "an eigenvalue is missing from grade %d" % j
                )
            V = Subbundle.from_chart0_span(big.pieces[j], cols)
            subs.append(V)
            if big.curve.is_projective:
                pieces.append(
                    Bundle(big.curve, V.rank, V.induced_transition())
                )
            else:
                pieces.append(Bundle(big.curve, V.rank))
        maps = []
        for k in range(w):
            per_chart = []
            for c in range(ncharts):
                per_chart.append(
                    _restrict_map(
                        subs[k].basis[c],
                        subs[k + 1].basis[c],
                        big.maps[k][c],
                    )
                )
            maps.append(tuple(per_chart))
        G_i = GradedHiggsBundle(pieces, tuple(maps)).validate()
        summands.append(G_i)
        # total-coordinate embedding of the summand into big
        tot = None
        for j in range(w + 1):
            B = subs[j].basis[0]
            tot = B if tot is None else block_diag(tot, B)
        embeds_total.append(tot)

    # filtrations: cut the packed filtration along the transformed
    # eigenspaces (eigenvalue orbit advances by one Frobenius twist)
    H_big = carrier._flats[0]
    fil_big = carrier._fils[0]
    fils = []
    flats = []
    for i in range(f):
        H_i = inverse_cartier_1(summands[i].total())
        flats.append(H_i)
        Q_i = frobenius_pullback_matrix(embeds_total[i])
        steps = []
        for k in range(1, fil_big.level + 1):
            B = fil_big.step(k).basis[0]
            u = _span_intersection_coords(B, Q_i)
            if u is None:
                break
            steps.append(Subbundle.from_chart0_span(H_i.bundle, u))
        fil_i = HodgeFiltration(H_i.bundle, steps)
        DeRhamBundle(H_i, fil_i).validate()
        fils.append(fil_i)

    # walk the stages: transport each recovered filtration to the actual
    # flow presentation along a certified stage identification
    cur = summands[0]
    out_fils = []
    for i in range(f):
        if i == 0:
            chi = _identity_graded_map(cur)
        else:
            chi = graded_higgs_isomorphic(cur, summands[i], budget=budget)
            if chi is None:
                raise BadMinimalPolynomial(
                    "stage %d fails to match its eigenspace" % i
                )
        H_cur, fil_cur = _transport_filtration(
            chi, cur, summands[i], flats[i], fils[i]
        )
        out_fils.append(fil_cur)
        cur = grade(H_cur, fil_cur).graded
    phi = graded_higgs_isomorphic(cur, summands[0], budget=budget)
    if phi is None:
        raise BadMinimalPolynomial("the recovered tuple fails to close up")
    return PeriodicTuple(summands[0], tuple(out_fils), phi).validate()


def _frobenius_orbit_checked(K, xi):
    try:
        return _frobenius_orbit(K, xi)
    except NotPrimitive as err:
        raise BadMinimalPolynomial(str(err))


# ---------------------------------------------------------------------------
# relative Frobenius


@dataclass
class RelativeFrobenius:
    """Per-chart matrices of the reconstructed relative Frobenius, with the
    two flat bundles it intertwines and the passed certificate labels."""

    charts: tuple
    source: object
    target: object
    certificates: dict


def build_relative_frobenius(T, atlas=None, budget=DEFAULT_ISO_BUDGET):
    """Per-chart relative Frobenius of a one-periodic tuple.

    Certificates, all exact: (1) each chart matrix is invertible, (2) the
    horizontality square against the two transform connections commutes,
    (3) the chart matrices agree across the twisted gluing.  A failure
    names the certificate that broke."""
    if T.period != 1:
        raise ValueError("the relative Frobenius needs a one-periodic tuple")
    stages = T.stages()
    E0, E1 = stages[0], stages[1]
    H = T._flats[0]
    lifting = atlas if atlas is not None else T.atlas
    source = inverse_cartier_1(E1.total(), lifting=lifting)
    phi_tot = total_map(T.phi, E1, E0)
    charts = tuple(frobenius_pullback_matrix(M) for M in phi_tot.phi)

    for c, M in enumerate(charts):
        det = M.det()
        if det.is_zero() or det.degree() != 0 or not det.is_unit():
            raise CertificateFailed(
                "chart %d matrix is not invertible" % c, part=1
            )
    for c in range(len(charts)):
        lhs = charts[c].derivative().add(H.A[c].mul(charts[c]))
        rhs = charts[c].mul(source.A[c])
        if lhs != rhs:
            raise CertificateFailed(
                "horizontality fails on chart %d" % c, part=2
            )
    if E0.curve.is_projective:
        d = E0.domain
        s_inv = LaurentPoly.var(d, -1)
        want = (
            H.bundle.chart1_transition()
            .mul(charts[0].substitute(s_inv))
            .mul(source.bundle.chart1_transition().inverse())
        )
        if want != charts[1]:
            raise CertificateFailed(
                "chart matrices disagree across the gluing", part=3
            )
    return RelativeFrobenius(
        charts,
        source,
        H,
        {"invertible": True, "horizontal": True, "taylor": True},
    )
