"""Exact arithmetic over Z/p^m, F_{p^f}, and Laurent polynomial rings.

Elements of Z/p^m are plain ints in [0, p^m); elements of F_{p^f} are tuples
of f ints in [0, p).  Both coefficient domains expose the same small protocol
(zero/one/add/mul/neg/is_unit/inv/coeff_frobenius) so polynomials and matrices
are generic over them.

Conventions fixed here and relied on everywhere else:
  * Laurent polynomials are dicts {exponent: coefficient} with no zero
    coefficients stored; the zero polynomial is the empty dict.
  * A unit of Z/p^m[t, 1/t] is (unit coefficient) * t^e plus p-nilpotent
    junk; inversion uses the finite geometric series.
  * birkhoff_factorize(G) returns (P, a, Q) with G = P*diag(t^-a_1..t^-a_r)*Q
    and a_1 >= ... >= a_r, where P is unimodular over polynomials in 1/t and
    Q is unimodular over polynomials in t.  The exponent list is the splitting
    type of the transition matrix G and sum(a) = -(exponent of det G).
"""

from .errors import NoSolution, NonInvertible, NotDivisible


# ---------------------------------------------------------------------------
# coefficient domains


class Zmod:
    """The ring Z/p^m with elements stored as least nonnegative residues."""

    def __init__(self, p, m=1):
        if p < 2 or m < 1:
            raise ValueError("need a prime p >= 2 and m >= 1")
        self.p = p
        self.m = m
        self.modulus = p ** m
        self.zero = 0
        self.one = 1 % self.modulus

    def __eq__(self, other):
        return isinstance(other, Zmod) and (self.p, self.m) == (other.p, other.m)

    def __hash__(self):
        return hash(("Zmod", self.p, self.m))

    def __repr__(self):
        return "Zmod(%d, %d)" % (self.p, self.m)

    @property
    def is_field(self):
        return self.m == 1

    def coerce(self, n):
        return n % self.modulus

    def add(self, a, b):
        return (a + b) % self.modulus

    def sub(self, a, b):
        return (a - b) % self.modulus

    def mul(self, a, b):
        return (a * b) % self.modulus

    def neg(self, a):
        return (-a) % self.modulus

    def is_unit(self, a):
        return a % self.p != 0

    def inv(self, a):
        if not self.is_unit(a):
            raise NonInvertible("%d is not a unit mod %d^%d" % (a, self.p, self.m))
        return pow(a, -1, self.modulus)

    def is_nilpotent(self, a):
        return a % self.p == 0

    def valuation(self, a):
        """p-adic valuation of the residue; m for zero."""
        if a % self.modulus == 0:
            return self.m
        v = 0
        while a % self.p == 0:
            a //= self.p
            v += 1
        return v

    def coeff_frobenius(self, a):
        return a % self.modulus

    def shift_down(self, a, k, target):
        """Divide by p^k exactly: maps p^k * (Z/p^m) onto Z/p^(m-k)."""
        if target.p != self.p or target.m > self.m - k:
            raise ValueError("bad target ring for shift_down")
        a = a % self.modulus
        if a % (self.p ** k) != 0:
            raise NotDivisible("%d not divisible by %d^%d" % (a, self.p, k))
        return (a // (self.p ** k)) % target.modulus

    def reduce_to(self, target, a):
        if target.p != self.p or target.m > self.m:
            raise ValueError("bad target ring for reduce_to")
        return a % target.modulus

    def serialize(self, a):
        return a % self.modulus


def _list_poly_mulmod(a, b, p, modulus):
    """Multiply in F_p[x]/(x^f + modulus(x)), dense coefficient tuples."""
    f = len(modulus)
    prod = [0] * (2 * f - 1) if f > 1 else [0]
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                prod[i + j] = (prod[i + j] + ai * bj) % p
    for k in range(len(prod) - 1, f - 1, -1):
        c = prod[k]
        if c:
            prod[k] = 0
            for i in range(f):
                prod[k - f + i] = (prod[k - f + i] - c * modulus[i]) % p
    return tuple(prod[:f])


def _gf_pow(a, e, p, modulus):
    f = len(modulus)
    result = tuple(1 if i == 0 else 0 for i in range(f))
    base = a
    while e:
        if e & 1:
            result = _list_poly_mulmod(result, base, p, modulus)
        base = _list_poly_mulmod(base, base, p, modulus)
        e >>= 1
    return result


def _list_poly_gcd_is_one(a, b, p):
    """gcd test over F_p[x] on dense coefficient lists (lowest degree first)."""

    def norm(u):
        u = [c % p for c in u]
        while u and u[-1] == 0:
            u.pop()
        return u

    a, b = norm(a), norm(b)
    while b:
        # a mod b
        a = list(a)
        inv = pow(b[-1], -1, p)
        while len(a) >= len(b) and a:
            c = (a[-1] * inv) % p
            shift = len(a) - len(b)
            for i, bc in enumerate(b):
                a[shift + i] = (a[shift + i] - c * bc) % p
            a = norm(a)
        a, b = b, a
    return len(a) == 1


def _find_irreducible(p, f):
    """Lexicographically least monic irreducible of degree f over F_p, the
    scan ordering coefficients from the top power down (x^2 + 1 for p=3)."""
    if f == 1:
        return (0,)

    def is_irreducible(mod):
        x = tuple(1 if i == 1 else 0 for i in range(f))
        if _gf_pow(x, p ** f, p, mod) != x:
            return False
        for q in set(_prime_factors(f)):
            d = f // q
            xd = _gf_pow(x, p ** d, p, mod)
            diff = [(xd[i] - x[i]) % p for i in range(f)]
            full = list(mod) + [1]
            if not _list_poly_gcd_is_one(full, diff, p):
                return False
        return True

    for idx in range(p ** f):
        digits = []
        k = idx
        for _ in range(f):
            digits.append(k % p)
            k //= p
        # most significant digit (slowest varying) sits on the top power, so
        # the coefficient tuple (m_0..m_{f-1}) is just the digits in order
        mod = tuple(digits)
        if is_irreducible(mod):
            return mod
    raise RuntimeError("no irreducible polynomial found (impossible)")


def _prime_factors(n):
    out = []
    d = 2
    while d * d <= n:
        while n % d == 0:
            out.append(d)
            n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


class GF:
    """The field F_{p^f} presented as F_p[x]/(x^f + m_{f-1}x^{f-1}+...+m_0).

    modulus stores (m_0..m_{f-1}); the default is the lexicographically least
    irreducible monic polynomial (top coefficients compared first).  Elements
    are tuples (a_0..a_{f-1}) meaning sum a_i x^i.
    """

    def __init__(self, p, f, modulus=None):
        self.p = p
        self.f = f
        self.m = 1
        if modulus is None:
            modulus = _find_irreducible(p, f)
        modulus = tuple(c % p for c in modulus)
        if len(modulus) != f:
            raise ValueError("modulus must list f coefficients")
        self.modulus = modulus
        self.zero = tuple(0 for _ in range(f))
        self.one = tuple(1 if i == 0 else 0 for i in range(f))
        self.gen = tuple(1 if i == 1 else 0 for i in range(f)) if f > 1 else (1,)

    def __eq__(self, other):
        return (
            isinstance(other, GF)
            and (self.p, self.f, self.modulus) == (other.p, other.f, other.modulus)
        )

    def __hash__(self):
        return hash(("GF", self.p, self.f, self.modulus))

    def __repr__(self):
        return "GF(%d, %d)" % (self.p, self.f)

    @property
    def is_field(self):
        return True

    def coerce(self, n):
        if isinstance(n, tuple):
            if len(n) != self.f:
                raise ValueError("wrong tuple length for GF element")
            return tuple(c % self.p for c in n)
        return tuple((n % self.p) if i == 0 else 0 for i in range(self.f))

    def add(self, a, b):
        return tuple((x + y) % self.p for x, y in zip(a, b))

    def sub(self, a, b):
        return tuple((x - y) % self.p for x, y in zip(a, b))

    def mul(self, a, b):
        return _list_poly_mulmod(a, b, self.p, self.modulus)

    def neg(self, a):
        return tuple((-x) % self.p for x in a)

    def is_unit(self, a):
        return any(x % self.p for x in a)

    def is_nilpotent(self, a):
        return not self.is_unit(a)

    def inv(self, a):
        if not self.is_unit(a):
            raise NonInvertible("zero has no inverse in %r" % self)
        return _gf_pow(a, self.p ** self.f - 2, self.p, self.modulus)

    def pow(self, a, e):
        if e < 0:
            return _gf_pow(self.inv(a), -e, self.p, self.modulus)
        return _gf_pow(a, e, self.p, self.modulus)

    def frobenius(self, a):
        return self.pow(a, self.p)

    def coeff_frobenius(self, a):
        return self.frobenius(a)

    def elements(self):
        for idx in range(self.p ** self.f):
            coeffs = []
            k = idx
            for _ in range(self.f):
                coeffs.append(k % self.p)
                k //= self.p
            yield tuple(coeffs)

    def minimal_polynomial(self, a):
        """Monic minimal polynomial of a over F_p as (c_0..c_{d-1}) plus an
        implicit leading 1 of degree d."""
        powers = [self.one]
        for _ in range(self.f):
            powers.append(self.mul(powers[-1], a))
        for d in range(1, self.f + 1):
            rows = [[powers[i][coord] for i in range(d)] for coord in range(self.f)]
            rhs = [(-powers[d][coord]) % self.p for coord in range(self.f)]
            sol = _fp_solve(rows, rhs, self.p)
            if sol is not None:
                return tuple(sol)
        raise RuntimeError("minimal polynomial search failed (impossible)")

    def is_field_generator(self, a):
        return len(self.minimal_polynomial(a)) == self.f

    def serialize(self, a):
        return list(a)


def _fp_solve(rows, rhs, p):
    """One particular solution of a dense F_p system, or None."""
    n = len(rows)
    m = len(rows[0]) if rows else 0
    aug = [[rows[i][j] % p for j in range(m)] + [rhs[i] % p] for i in range(n)]
    pivots = []
    r = 0
    for c in range(m):
        pr = next((i for i in range(r, n) if aug[i][c] % p), None)
        if pr is None:
            continue
        aug[r], aug[pr] = aug[pr], aug[r]
        inv = pow(aug[r][c], -1, p)
        aug[r] = [(x * inv) % p for x in aug[r]]
        for i in range(n):
            if i != r and aug[i][c]:
                f = aug[i][c]
                aug[i] = [(x - f * y) % p for x, y in zip(aug[i], aug[r])]
        pivots.append(c)
        r += 1
        if r == n:
            break
    for i in range(r, n):
        if aug[i][m] % p:
            return None
    sol = [0] * m
    for i, c in enumerate(pivots):
        sol[c] = aug[i][m]
    return sol


def gf_conjugate(field, a, j):
    """Apply the p-power Frobenius j times: a -> a^(p^j)."""
    out = field.coerce(a)
    for _ in range(j % field.f if field.f > 1 else 0):
        out = field.frobenius(out)
    return out


# ---------------------------------------------------------------------------
# Laurent polynomials


class LaurentPoly:
    """Laurent polynomial over a coefficient domain, canonical sparse form."""

    __slots__ = ("domain", "coeffs")

    def __init__(self, domain, coeffs=None):
        self.domain = domain
        cleaned = {}
        if coeffs:
            for e, c in coeffs.items():
                c = domain.coerce(c)
                if c != domain.zero:
                    cleaned[e] = c
        self.coeffs = cleaned

    @classmethod
    def zero(cls, domain):
        return cls(domain, {})

    @classmethod
    def const(cls, domain, c):
        return cls(domain, {0: c})

    @classmethod
    def one(cls, domain):
        return cls(domain, {0: domain.one})

    @classmethod
    def var(cls, domain, e=1):
        return cls(domain, {e: domain.one})

    @classmethod
    def monomial(cls, domain, c, e):
        return cls(domain, {e: c})

    def is_zero(self):
        return not self.coeffs

    def is_polynomial(self):
        return all(e >= 0 for e in self.coeffs)

    def is_constant(self):
        return all(e == 0 for e in self.coeffs)

    def constant_term(self):
        return self.coeffs.get(0, self.domain.zero)

    def degree(self):
        """Max exponent carrying a nonzero coefficient; None for zero."""
        return max(self.coeffs) if self.coeffs else None

    def valuation(self):
        """Min exponent carrying a nonzero coefficient; None for zero."""
        return min(self.coeffs) if self.coeffs else None

    def __eq__(self, other):
        return (
            isinstance(other, LaurentPoly)
            and self.domain == other.domain
            and self.coeffs == other.coeffs
        )

    def __hash__(self):
        return hash((self.domain, tuple(sorted(self.coeffs.items()))))

    def __repr__(self):
        if not self.coeffs:
            return "0"
        return " + ".join(
            "%r*t^%d" % (self.coeffs[e], e) for e in sorted(self.coeffs)
        )

    def add(self, other):
        d = self.domain
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            s = d.add(out.get(e, d.zero), c)
            if s == d.zero:
                out.pop(e, None)
            else:
                out[e] = s
        return LaurentPoly(d, out)

    def sub(self, other):
        return self.add(other.neg())

    def neg(self):
        d = self.domain
        return LaurentPoly(d, {e: d.neg(c) for e, c in self.coeffs.items()})

    def mul(self, other):
        d = self.domain
        out = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = e1 + e2
                s = d.add(out.get(e, d.zero), d.mul(c1, c2))
                if s == d.zero:
                    out.pop(e, None)
                else:
                    out[e] = s
        return LaurentPoly(d, out)

    def scale(self, c):
        d = self.domain
        c = d.coerce(c)
        return LaurentPoly(d, {e: d.mul(v, c) for e, v in self.coeffs.items()})

    def shift(self, k):
        return LaurentPoly(self.domain, {e + k: c for e, c in self.coeffs.items()})

    def power(self, n):
        if n < 0:
            return self.inverse_unit().power(-n)
        out = LaurentPoly.one(self.domain)
        base = self
        while n:
            if n & 1:
                out = out.mul(base)
            base = base.mul(base)
            n >>= 1
        return out

    def derivative(self):
        d = self.domain
        out = {}
        for e, c in self.coeffs.items():
            if e == 0:
                continue
            v = d.mul(c, d.coerce(e))
            if v != d.zero:
                out[e - 1] = v
        return LaurentPoly(d, out)

    def substitute(self, image):
        """Composition self(image); image must be a Laurent unit whenever self
        has negative exponents (our uses: t -> t^p, t -> 1/t, polynomials)."""
        d = self.domain
        out = LaurentPoly.zero(d)
        inv = None
        for e, c in self.coeffs.items():
            if e >= 0:
                term = image.power(e).scale(c)
            else:
                if inv is None:
                    inv = image.inverse_unit()
                term = inv.power(-e).scale(c)
            out = out.add(term)
        return out

    def coeff_map(self, fn):
        return LaurentPoly(self.domain, {e: fn(c) for e, c in self.coeffs.items()})

    def coeff_frobenius(self):
        return self.coeff_map(self.domain.coeff_frobenius)

    def is_unit(self):
        """Unit of the Laurent ring: a unique unit coefficient, the rest
        nilpotent (for a field: a single monomial)."""
        d = self.domain
        unit_slots = [e for e, c in self.coeffs.items() if d.is_unit(c)]
        if len(unit_slots) != 1:
            return False
        if d.is_field:
            return len(self.coeffs) == 1
        return all(
            d.is_nilpotent(c) for e, c in self.coeffs.items() if e != unit_slots[0]
        )

    def inverse_unit(self):
        d = self.domain
        unit_slots = [e for e, c in self.coeffs.items() if d.is_unit(c)]
        if len(unit_slots) != 1:
            raise NonInvertible("not a unit Laurent polynomial: %r" % self)
        e0 = unit_slots[0]
        lead = LaurentPoly.monomial(d, d.inv(self.coeffs[e0]), -e0)
        rest = self.mul(lead)
        tail = rest.sub(LaurentPoly.one(d))
        if tail.is_zero():
            return lead
        if d.is_field:
            raise NonInvertible("not a unit Laurent polynomial: %r" % self)
        acc = LaurentPoly.one(d)
        term = LaurentPoly.one(d)
        for _ in range(getattr(d, "m", 1)):
            term = term.mul(tail).neg()
            if term.is_zero():
                break
            acc = acc.add(term)
        inv = lead.mul(acc)
        if not inv.mul(self).sub(LaurentPoly.one(d)).is_zero():
            raise NonInvertible("unit inversion failed for %r" % self)
        return inv

    def p_divide(self, k, target):
        """Divide every coefficient by p^k exactly, landing in target."""
        d = self.domain
        return LaurentPoly(
            target, {e: d.shift_down(c, k, target) for e, c in self.coeffs.items()}
        )

    def reduce_to(self, target):
        d = self.domain
        return LaurentPoly(
            target, {e: d.reduce_to(target, c) for e, c in self.coeffs.items()}
        )

    def lift_to(self, target):
        """Reinterpret least-residue coefficients in a larger ring."""
        return LaurentPoly(target, dict(self.coeffs))


# ---------------------------------------------------------------------------
# matrices


class RingMatrix:
    """Dense matrix with LaurentPoly entries over a shared domain."""

    __slots__ = ("domain", "rows", "nrows", "ncols")

    def __init__(self, domain, rows):
        self.domain = domain
        self.rows = [list(r) for r in rows]
        self.nrows = len(self.rows)
        self.ncols = len(self.rows[0]) if self.rows else 0
        for r in self.rows:
            if len(r) != self.ncols:
                raise ValueError("ragged matrix")

    @classmethod
    def from_scalars(cls, domain, rows):
        return cls(
            domain, [[LaurentPoly.const(domain, c) for c in row] for row in rows]
        )

    @classmethod
    def identity(cls, domain, n):
        one = LaurentPoly.one(domain)
        zero = LaurentPoly.zero(domain)
        return cls(
            domain, [[one if i == j else zero for j in range(n)] for i in range(n)]
        )

    @classmethod
    def zeros(cls, domain, nrows, ncols):
        zero = LaurentPoly.zero(domain)
        return cls(domain, [[zero for _ in range(ncols)] for _ in range(nrows)])

    @classmethod
    def diagonal(cls, domain, entries):
        n = len(entries)
        zero = LaurentPoly.zero(domain)
        return cls(
            domain,
            [[entries[i] if i == j else zero for j in range(n)] for i in range(n)],
        )

    def entry(self, i, j):
        return self.rows[i][j]

    def copy(self):
        return RingMatrix(self.domain, [list(r) for r in self.rows])

    def __eq__(self, other):
        return (
            isinstance(other, RingMatrix)
            and self.domain == other.domain
            and self.nrows == other.nrows
            and self.ncols == other.ncols
            and all(
                self.rows[i][j] == other.rows[i][j]
                for i in range(self.nrows)
                for j in range(self.ncols)
            )
        )

    def __repr__(self):
        return "RingMatrix(%dx%d over %r)" % (self.nrows, self.ncols, self.domain)

    def is_zero(self):
        return all(e.is_zero() for row in self.rows for e in row)

    def add(self, other):
        return RingMatrix(
            self.domain,
            [
                [self.rows[i][j].add(other.rows[i][j]) for j in range(self.ncols)]
                for i in range(self.nrows)
            ],
        )

    def sub(self, other):
        return RingMatrix(
            self.domain,
            [
                [self.rows[i][j].sub(other.rows[i][j]) for j in range(self.ncols)]
                for i in range(self.nrows)
            ],
        )

    def neg(self):
        return RingMatrix(self.domain, [[e.neg() for e in row] for row in self.rows])

    def mul(self, other):
        if self.ncols != other.nrows:
            raise ValueError("shape mismatch: %r * %r" % (self, other))
        zero = LaurentPoly.zero(self.domain)
        out = []
        for i in range(self.nrows):
            row = []
            for j in range(other.ncols):
                acc = zero
                for k in range(self.ncols):
                    a = self.rows[i][k]
                    if a.is_zero():
                        continue
                    b = other.rows[k][j]
                    if b.is_zero():
                        continue
                    acc = acc.add(a.mul(b))
                row.append(acc)
            out.append(row)
        return RingMatrix(self.domain, out)

    def scale(self, poly):
        return RingMatrix(self.domain, [[e.mul(poly) for e in row] for row in self.rows])

    def scale_const(self, c):
        return RingMatrix(self.domain, [[e.scale(c) for e in row] for row in self.rows])

    def transpose(self):
        return RingMatrix(
            self.domain,
            [[self.rows[i][j] for i in range(self.nrows)] for j in range(self.ncols)],
        )

    def map_entries(self, fn):
        return RingMatrix(self.domain, [[fn(e) for e in row] for row in self.rows])

    def substitute(self, image):
        return self.map_entries(lambda e: e.substitute(image))

    def derivative(self):
        return self.map_entries(lambda e: e.derivative())

    def coeff_frobenius(self):
        return self.map_entries(lambda e: e.coeff_frobenius())

    def reduce_to(self, target):
        return RingMatrix(
            target, [[e.reduce_to(target) for e in row] for row in self.rows]
        )

    def lift_to(self, target):
        return RingMatrix(target, [[e.lift_to(target) for e in row] for row in self.rows])

    def hstack(self, other):
        if self.nrows != other.nrows:
            raise ValueError("hstack height mismatch")
        return RingMatrix(
            self.domain, [self.rows[i] + other.rows[i] for i in range(self.nrows)]
        )

    def vstack(self, other):
        if self.ncols != other.ncols:
            raise ValueError("vstack width mismatch")
        return RingMatrix(self.domain, self.rows + other.rows)

    def submatrix(self, row_idx, col_idx):
        return RingMatrix(
            self.domain, [[self.rows[i][j] for j in col_idx] for i in row_idx]
        )

    def columns(self, col_idx):
        return self.submatrix(range(self.nrows), list(col_idx))

    def column(self, j):
        return self.columns([j])

    def det(self):
        n = self.nrows
        if n != self.ncols:
            raise ValueError("det of non-square matrix")
        if n == 0:
            return LaurentPoly.one(self.domain)
        memo = {}

        def minor(start_row, cols_list):
            key = (start_row, cols_list)
            if key in memo:
                return memo[key]
            if len(cols_list) == 1:
                val = self.rows[start_row][cols_list[0]]
            else:
                acc = LaurentPoly.zero(self.domain)
                for pos, j in enumerate(cols_list):
                    a = self.rows[start_row][j]
                    if a.is_zero():
                        continue
                    rest = tuple(c for c in cols_list if c != j)
                    term = a.mul(minor(start_row + 1, rest))
                    if pos % 2:
                        term = term.neg()
                    acc = acc.add(term)
                val = acc
            memo[key] = val
            return val

        return minor(0, tuple(range(n)))

    def adjugate(self):
        n = self.nrows
        if n == 1:
            return RingMatrix.identity(self.domain, 1)
        out = RingMatrix.zeros(self.domain, n, n)
        for i in range(n):
            for j in range(n):
                rows = [r for r in range(n) if r != i]
                cols = [c for c in range(n) if c != j]
                cof = self.submatrix(rows, cols).det()
                if (i + j) % 2:
                    cof = cof.neg()
                out.rows[j][i] = cof
        return out

    def inverse(self):
        d = self.det()
        if not d.is_unit():
            raise NonInvertible("matrix determinant %r is not a unit" % d)
        dinv = d.inverse_unit()
        return self.adjugate().map_entries(lambda e: e.mul(dinv))

    def is_polynomial(self):
        return all(e.is_polynomial() for row in self.rows for e in row)

    def is_constant(self):
        return all(e.is_constant() for row in self.rows for e in row)

    def max_degree(self):
        degs = [e.degree() for row in self.rows for e in row if not e.is_zero()]
        return max(degs) if degs else None

    def min_valuation(self):
        vals = [e.valuation() for row in self.rows for e in row if not e.is_zero()]
        return min(vals) if vals else None

    def shift_all(self, k):
        return self.map_entries(lambda e: e.shift(k))


# ---------------------------------------------------------------------------
# polynomial matrix normal forms over a field (F_p or F_{p^f})


def poly_divmod(a, b):
    """Univariate division with remainder over a coefficient field."""
    d = a.domain
    if b.is_zero():
        raise ZeroDivisionError("division by zero polynomial")
    q = LaurentPoly.zero(d)
    r = a
    db = b.degree()
    lb_inv = d.inv(b.coeffs[db])
    while not r.is_zero() and r.degree() >= db:
        dr = r.degree()
        term = LaurentPoly.monomial(d, d.mul(r.coeffs[dr], lb_inv), dr - db)
        q = q.add(term)
        r = r.sub(term.mul(b))
    return q, r


def poly_gcd(a, b):
    while not b.is_zero():
        _, r = poly_divmod(a, b)
        a, b = b, r
    if a.is_zero():
        return a
    return a.scale(a.domain.inv(a.coeffs[a.degree()]))


class SmithForm:
    """M = U * D * V over F[t]: U, V unimodular polynomial matrices with
    polynomial inverses Uinv, Vinv; D diagonal with monic invariant factors."""

    def __init__(self, U, Uinv, D, V, Vinv, rank):
        self.U = U
        self.Uinv = Uinv
        self.D = D
        self.V = V
        self.Vinv = Vinv
        self.rank = rank

    def invariant_factors(self):
        size = min(self.D.nrows, self.D.ncols)
        return [self.D.rows[i][i] for i in range(size)]


def smith_form_poly(M):
    """Smith normal form over F[t].  Left/right transforms are accumulated on
    identities and inverted once at the end (unimodular, so exact)."""
    d = M.domain
    if not d.is_field:
        raise ValueError("smith_form_poly needs a field coefficient domain")
    if not M.is_polynomial():
        raise ValueError("smith_form_poly needs polynomial entries")
    A = M.copy()
    n, m = A.nrows, A.ncols
    Lacc = RingMatrix.identity(d, n)   # row ops applied to identity: A = Lacc*M*Racc
    Racc = RingMatrix.identity(d, m)

    def row_combine(i, j, q):
        # row_i -= q * row_j
        A.rows[i] = [A.rows[i][c].sub(q.mul(A.rows[j][c])) for c in range(m)]
        Lacc.rows[i] = [Lacc.rows[i][c].sub(q.mul(Lacc.rows[j][c])) for c in range(n)]

    def col_combine(j, k, q):
        # col_j -= q * col_k
        for r in range(n):
            A.rows[r][j] = A.rows[r][j].sub(q.mul(A.rows[r][k]))
        for r in range(m):
            Racc.rows[r][j] = Racc.rows[r][j].sub(q.mul(Racc.rows[r][k]))

    def row_swap(i, j):
        A.rows[i], A.rows[j] = A.rows[j], A.rows[i]
        Lacc.rows[i], Lacc.rows[j] = Lacc.rows[j], Lacc.rows[i]

    def col_swap(i, j):
        for r in range(n):
            A.rows[r][i], A.rows[r][j] = A.rows[r][j], A.rows[r][i]
        for r in range(m):
            Racc.rows[r][i], Racc.rows[r][j] = Racc.rows[r][j], Racc.rows[r][i]

    def row_scale(i, c):
        A.rows[i] = [e.scale(c) for e in A.rows[i]]
        Lacc.rows[i] = [e.scale(c) for e in Lacc.rows[i]]

    size = min(n, m)
    guard = 0
    while True:
        guard += 1
        if guard > 2000:
            raise RuntimeError("smith form failed to stabilize")
        k = 0
        restart = False
        while k < size and not restart:
            best = None
            for i in range(k, n):
                for j in range(k, m):
                    e = A.rows[i][j]
                    if not e.is_zero() and (best is None or e.degree() < best[2]):
                        best = (i, j, e.degree())
            if best is None:
                break
            bi, bj, _ = best
            if bi != k:
                row_swap(k, bi)
            if bj != k:
                col_swap(k, bj)
            while True:
                pivot = A.rows[k][k]
                moved = False
                for i in range(k + 1, n):
                    e = A.rows[i][k]
                    if e.is_zero():
                        continue
                    q, r = poly_divmod(e, pivot)
                    row_combine(i, k, q)
                    if not r.is_zero():
                        row_swap(k, i)
                        moved = True
                        break
                if moved:
                    continue
                for j in range(k + 1, m):
                    e = A.rows[k][j]
                    if e.is_zero():
                        continue
                    q, r = poly_divmod(e, pivot)
                    col_combine(j, k, q)
                    if not r.is_zero():
                        col_swap(k, j)
                        moved = True
                        break
                if not moved:
                    break
            lead = A.rows[k][k].coeffs[A.rows[k][k].degree()]
            if lead != d.one:
                row_scale(k, d.inv(lead))
            k += 1
        # enforce the divisibility chain
        fixed = True
        for k in range(size - 1):
            a = A.rows[k][k]
            b = A.rows[k + 1][k + 1]
            if a.is_zero() or b.is_zero():
                continue
            _, r = poly_divmod(b, a)
            if not r.is_zero():
                col_combine(k, k + 1, LaurentPoly.one(d).neg())
                fixed = False
                break
        if fixed:
            break

    rank = sum(
        1 for k in range(size) if not A.rows[k][k].is_zero()
    )
    U = Lacc.inverse()
    V = Racc.inverse()
    return SmithForm(U, Lacc, A, V, Racc, rank)


def poly_solve(M, v, laurent_denominators=False):
    """Solve M x = v over F[t] (v a matrix of columns); None if unsolvable.
    With laurent_denominators=True the solution may live in F[t, 1/t]."""
    sf = smith_form_poly(M)
    w = sf.Uinv.mul(v)
    d = M.domain
    size = min(M.nrows, M.ncols)
    y = RingMatrix.zeros(d, M.ncols, v.ncols)
    for i in range(M.nrows):
        di = sf.D.rows[i][i] if i < size else LaurentPoly.zero(d)
        for j in range(v.ncols):
            wi = w.rows[i][j]
            if di.is_zero():
                if not wi.is_zero():
                    return None
                continue
            if wi.is_zero():
                continue
            if laurent_denominators:
                q = _laurent_exact_div(wi, di)
                if q is None:
                    return None
            else:
                q, r = poly_divmod(wi, di)
                if not r.is_zero():
                    return None
            if i < M.ncols:
                y.rows[i][j] = q
            else:
                return None
    return sf.Vinv.mul(y)


def _laurent_exact_div(w, di):
    """w / di allowing t-power denominators; None if not exactly divisible."""
    d = w.domain
    if w.is_zero():
        return LaurentPoly.zero(d)
    val = di.valuation()
    stripped = di.shift(-val)
    wval = w.valuation()
    wpoly = w.shift(-wval)
    q, r = poly_divmod(wpoly, stripped)
    if not r.is_zero():
        return None
    return q.shift(wval - val)


def poly_kernel(M):
    """Basis (columns) of the kernel of M over F[t]."""
    sf = smith_form_poly(M)
    d = M.domain
    size = min(M.nrows, M.ncols)
    cols = [
        j
        for j in range(M.ncols)
        if j >= size or sf.D.rows[j][j].is_zero()
    ]
    if not cols:
        return RingMatrix.zeros(d, M.ncols, 0)
    return sf.Vinv.columns(cols)


def saturation_basis(M):
    """Basis of the saturation of the column span of M in the ambient free
    F[t]-module: the first `rank` columns of U from the Smith form."""
    sf = smith_form_poly(M)
    return sf.U.columns(range(sf.rank)), sf.rank


def unimodular_completion(B):
    """Complete a saturated polynomial basis B to a square unimodular matrix
    [B | C] over F[t]."""
    sf = smith_form_poly(B)
    d = B.domain
    for i in range(B.ncols):
        e = sf.D.rows[i][i]
        if e.is_zero() or e.degree() != 0:
            raise NonInvertible("basis not saturated; invariant factor %r" % e)
    extra = sf.U.columns(range(B.ncols, B.nrows))
    return B.hstack(extra)


# ---------------------------------------------------------------------------
# constant linear algebra over Z/p^m and fields


class LinearSolution:
    """Particular solution plus a kernel basis, both lists of column vectors
    (python lists of domain elements)."""

    def __init__(self, particular, kernel):
        self.particular = particular
        self.kernel = kernel


def solve_linear_mod(A, b, ring):
    """Solve A x = b over Z/p^m via diagonalization with valuation pivots.

    A: list of rows of ints; b: list of ints.  Returns LinearSolution with a
    particular solution and a kernel basis generating all solutions; raises
    NoSolution when none exists.
    """
    n = len(A)
    m = len(A[0]) if n else 0
    p, mod = ring.p, ring.modulus
    M = [[A[i][j] % mod for j in range(m)] for i in range(n)]
    # row ops applied to b; column ops tracked on an identity for back-mapping
    rhs = [bi % mod for bi in b]
    col = [[1 if i == j else 0 for j in range(m)] for i in range(m)]  # x = col*y

    diag = []
    k = 0
    size = min(n, m)
    while k < size:
        best = None
        for i in range(k, n):
            for j in range(k, m):
                a = M[i][j]
                if a % mod:
                    val = ring.valuation(a)
                    if best is None or val < best[2]:
                        best = (i, j, val)
        if best is None:
            break
        bi, bj, val = best
        M[k], M[bi] = M[bi], M[k]
        rhs[k], rhs[bi] = rhs[bi], rhs[k]
        if bj != k:
            for row in M:
                row[k], row[bj] = row[bj], row[k]
            for row in col:
                row[k], row[bj] = row[bj], row[k]
        # normalize pivot to p^val
        unit = M[k][k] // (p ** val)
        uinv = pow(unit % mod, -1, mod)
        M[k] = [(uinv * x) % mod for x in M[k]]
        rhs[k] = (uinv * rhs[k]) % mod
        piv = p ** val
        for i in range(n):
            if i == k:
                continue
            a = M[i][k]
            if a % mod == 0:
                continue
            f = a // piv  # exact: pivot has minimal valuation in the block
            if a % piv:
                # entry with smaller valuation escaped: impossible by choice
                raise RuntimeError("pivot valuation violated")
            M[i] = [(x - f * y) % mod for x, y in zip(M[i], M[k])]
            rhs[i] = (rhs[i] - f * rhs[k]) % mod
        for j in range(m):
            if j == k:
                continue
            a = M[k][j]
            if a % mod == 0:
                continue
            f = a // piv
            if a % piv:
                raise RuntimeError("pivot valuation violated")
            for row in M:
                row[j] = (row[j] - f * row[k]) % mod
            for row in col:
                row[j] = (row[j] - f * row[k]) % mod
        diag.append(val)
        k += 1

    # solve diag(p^val) y = rhs
    y = [0] * m
    kernel_dirs = []
    for i in range(len(diag)):
        val = diag[i]
        piv = p ** val
        if rhs[i] % piv:
            raise NoSolution("no solution: rhs has valuation below pivot")
        y[i] = (rhs[i] // piv) % (mod // piv) if val < ring.m else 0
        if val > 0:
            kernel_dirs.append((i, (mod // piv) % mod))
    for i in range(len(diag), n):
        if rhs[i] % mod:
            raise NoSolution("no solution: inconsistent zero row")
    free_cols = list(range(len(diag), m))

    def col_map(vec):
        return [
            sum(col[r][j] * vec[j] for j in range(m)) % mod for r in range(m)
        ]

    particular = col_map(y)
    kernel = []
    for i, gen in kernel_dirs:
        v = [0] * m
        v[i] = gen
        kernel.append(col_map(v))
    for j in free_cols:
        v = [0] * m
        v[j] = 1
        kernel.append(col_map(v))
    return LinearSolution(particular, kernel)


def field_solve(rows, rhs, field):
    """Particular solution of a dense system over a field domain; None if
    unsolvable.  rows: list of lists of field elements; rhs: list."""
    n = len(rows)
    m = len(rows[0]) if n else 0
    aug = [[field.coerce(x) for x in rows[i]] + [field.coerce(rhs[i])] for i in range(n)]
    pivots = []
    r = 0
    for c in range(m):
        pr = next((i for i in range(r, n) if field.is_unit(aug[i][c])), None)
        if pr is None:
            continue
        aug[r], aug[pr] = aug[pr], aug[r]
        inv = field.inv(aug[r][c])
        aug[r] = [field.mul(x, inv) for x in aug[r]]
        for i in range(n):
            if i != r and field.is_unit(aug[i][c]):
                f = aug[i][c]
                aug[i] = [field.sub(x, field.mul(f, y)) for x, y in zip(aug[i], aug[r])]
        pivots.append(c)
        r += 1
        if r == n:
            break
    for i in range(r, n):
        if field.is_unit(aug[i][m]):
            return None
    sol = [field.zero] * m
    for i, c in enumerate(pivots):
        sol[c] = aug[i][m]
    return sol


def field_nullspace(rows, field, ncols):
    """Kernel basis of a dense matrix over a field domain."""
    n = len(rows)
    m = ncols
    mat = [[field.coerce(x) for x in row] for row in rows]
    pivots = []
    r = 0
    for c in range(m):
        pr = next((i for i in range(r, n) if field.is_unit(mat[i][c])), None)
        if pr is None:
            continue
        mat[r], mat[pr] = mat[pr], mat[r]
        inv = field.inv(mat[r][c])
        mat[r] = [field.mul(x, inv) for x in mat[r]]
        for i in range(n):
            if i != r and field.is_unit(mat[i][c]):
                f = mat[i][c]
                mat[i] = [field.sub(x, field.mul(f, y)) for x, y in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
        if r == n:
            break
    free = [c for c in range(m) if c not in pivots]
    basis = []
    for fc in free:
        v = [field.zero] * m
        v[fc] = field.one
        for i, pc in enumerate(pivots):
            v[pc] = field.neg(mat[i][fc])
        basis.append(v)
    return basis


# ---------------------------------------------------------------------------
# Birkhoff factorization over a field (Laurent matrices)


class BirkhoffFactorization:
    """G = P * diag(t^-a_1..t^-a_r) * Q, exponents descending; P unimodular
    over polynomials in 1/t, Q unimodular over polynomials in t."""

    def __init__(self, P, exponents, Q, domain):
        self.P = P
        self.exponents = exponents
        self.Q = Q
        self.domain = domain

    def middle(self):
        d = self.domain
        return RingMatrix.diagonal(d, [LaurentPoly.var(d, -a) for a in self.exponents])

    def verify(self, G):
        return self.P.mul(self.middle()).mul(self.Q) == G


def _is_poly_in_inverse(M):
    return all(e.is_zero() or e.degree() <= 0 for row in M.rows for e in row)


def birkhoff_factorize(G):
    """Factor an invertible Laurent matrix over a field; exact and verified by
    re-multiplication before returning.  Raises NonInvertible unless det(G)
    is a unit monomial.

    Method: strip each row's t-valuation; if the matrix of constant terms of
    the stripped rows is invertible over F we are done.  Otherwise a left
    null vector of that constant matrix yields a row operation with
    coefficients in F[1/t] (combining into the row of minimal valuation)
    that strictly raises that row's valuation.  The valuation sum is bounded
    above by the exponent of det(G), so this terminates.
    """
    d = G.domain
    if not d.is_field:
        raise NonInvertible("birkhoff factorization requires field coefficients")
    n = G.nrows
    if n != G.ncols:
        raise NonInvertible("matrix is not square")
    det = G.det()
    if len(det.coeffs) != 1:
        raise NonInvertible("determinant %r is not a unit monomial" % det)

    M = G.copy()
    Linv = RingMatrix.identity(d, n)   # invariant: M = Linv * G, Linv over F[1/t]

    def row_valuations():
        vals = []
        for i in range(n):
            row_vals = [e.valuation() for e in M.rows[i] if not e.is_zero()]
            if not row_vals:
                raise NonInvertible("zero row in an invertible matrix")
            vals.append(min(row_vals))
        return vals

    init_sum = sum(row_valuations())
    guard_max = det.degree() - init_sum + n + 2
    for _ in range(max(guard_max, 2)):
        vals = row_valuations()
        const_rows = [
            [M.rows[i][j].coeffs.get(vals[i], d.zero) for j in range(n)]
            for i in range(n)
        ]
        # left null vector: nullspace of the transpose
        null = field_nullspace(
            [[const_rows[i][j] for i in range(n)] for j in range(n)], d, n
        )
        if not null:
            break
        c = null[0]
        support = [i for i in range(n) if d.is_unit(c[i])]
        i0 = min(support, key=lambda i: (vals[i], i))
        new_row = [LaurentPoly.zero(d) for _ in range(n)]
        new_lrow = [LaurentPoly.zero(d) for _ in range(n)]
        for i in support:
            w = LaurentPoly.monomial(d, c[i], vals[i0] - vals[i])
            for j in range(n):
                new_row[j] = new_row[j].add(w.mul(M.rows[i][j]))
                new_lrow[j] = new_lrow[j].add(w.mul(Linv.rows[i][j]))
        M.rows[i0] = new_row
        Linv.rows[i0] = new_lrow
    else:
        raise NonInvertible("birkhoff reduction failed to terminate")

    vals = row_valuations()
    exps = [-v for v in vals]
    Qrows = [[M.rows[i][j].shift(-vals[i]) for j in range(n)] for i in range(n)]
    P0 = Linv.inverse()

    order = sorted(range(n), key=lambda i: (-exps[i], i))
    P = RingMatrix(d, [[P0.rows[r][order[c]] for c in range(n)] for r in range(n)])
    Q = RingMatrix(d, [Qrows[order[r]] for r in range(n)])
    exponents = [exps[i] for i in order]

    fact = BirkhoffFactorization(P, exponents, Q, d)
    if not fact.verify(G):
        raise NonInvertible("birkhoff re-multiplication check failed")
    if not _is_poly_in_inverse(P):
        raise NonInvertible("left factor escaped polynomials in 1/t")
    if not Q.is_polynomial():
        raise NonInvertible("right factor escaped polynomials in t")
    for T in (P, Q):
        dt = T.det()
        if not (dt.is_constant() and d.is_unit(dt.constant_term())):
            raise NonInvertible("factor is not unimodular")
    return fact
