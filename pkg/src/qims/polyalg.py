"""Multi-index combinatorics and polynomial arithmetic.

Monomials in the variables ``q_m^(i)`` (level m = 1..L-1, time index
i = 1..N) are indexed by flat row-major tuples of nonnegative integers:
position ``(m-1)*N + (i-1)`` holds the exponent of ``q_m^(i)``.

Coefficients are either exact (``int``/``Fraction``) or floating
(``float``/``complex``); the two kinds never mix inside one polynomial.
"""

from __future__ import annotations

from fractions import Fraction
from math import comb

from .errors import ParameterError, StructureError

Index = tuple  # flat row-major exponent tuple of length (L-1)*N


def flat_pos(m: int, i: int, N: int) -> int:
    """Flat position of variable q_m^(i); m and i are 1-based."""
    return (m - 1) * N + (i - 1)


def degree(A: Index) -> int:
    """Total degree d(A)."""
    return sum(A)


def level_degree(A: Index, m: int, N: int) -> int:
    """Row sum d_m(A) over the time indices of level m."""
    return sum(A[flat_pos(m, 1, N):flat_pos(m, 1, N) + N])


def copies_before(A: Index, n: int, i: int, L: int, N: int) -> int:
    """Block boundary S_n^(i): entries of columns j < i plus rows m <= n of column i."""
    s = 0
    for j in range(1, i):
        for m in range(1, L):
            s += A[flat_pos(m, j, N)]
    for m in range(1, n + 1):
        s += A[flat_pos(m, i, N)]
    return s


def multinomial(M: int, A: Index) -> int:
    """M! / (A_0! * prod A_{m,i}!) with A_0 = M - d(A)."""
    rest = M
    out = 1
    for a in A:
        out *= comb(rest, a)
        rest -= a
    return out


def _simplex(k: int, cap: int):
    # All k-tuples of nonnegative ints with sum <= cap.
    if k == 0:
        yield ()
        return
    for head in range(cap + 1):
        for rest in _simplex(k - 1, cap - head):
            yield (head,) + rest


def _graded_lex_key(A: Index):
    return (sum(A), A)


def enumerate_basis(L: int, N: int, M: int) -> list[Index]:
    """All exponent tuples with d(A) <= M in graded lexicographic order.

    Grade is the total degree; ties are broken by row-major comparison of
    the entries.  The length is binomial(M + (L-1)N, (L-1)N).
    """
    if L < 2 or N < 1 or M < 0:
        raise ParameterError(f"need L >= 2, N >= 1, M >= 0, got L={L}, N={N}, M={M}")
    k = (L - 1) * N
    out = sorted(_simplex(k, M), key=_graded_lex_key)
    assert len(out) == comb(M + k, k)
    return out


def enumerate_basis_FT(L: int, N: int, T) -> list[Index]:
    """All exponent tuples with d_m(A) <= T_m per level, graded-lex ordered.

    The length is the product over levels of binomial(T_m + N, N).
    """
    T = tuple(T)
    if L < 2 or N < 1:
        raise ParameterError(f"need L >= 2, N >= 1, got L={L}, N={N}")
    if len(T) != L - 1:
        raise ParameterError(f"T must have length L-1={L - 1}, got {len(T)}")
    if any(t < 0 for t in T):
        raise ParameterError(f"level caps must be nonnegative, got {T}")

    def rows(m):
        if m == L:
            yield ()
            return
        for row in _simplex(N, T[m - 1]):
            for rest in rows(m + 1):
                yield row + rest

    out = sorted(rows(1), key=_graded_lex_key)
    expected = 1
    for t in T:
        expected *= comb(t + N, N)
    assert len(out) == expected
    return out


_EXACT_TYPES = (int, Fraction)
_FLOAT_TYPES = (float, complex)


def scalar_kind(x) -> str:
    if isinstance(x, bool):
        raise StructureError("bool is not a scalar")
    if isinstance(x, _EXACT_TYPES):
        return "exact"
    if isinstance(x, _FLOAT_TYPES):
        return "float"
    raise StructureError(f"unsupported scalar type {type(x).__name__}")


class Polynomial:
    """Finite map Index -> scalar with a fixed (L, N) context.

    Zero coefficients are never stored; the zero polynomial has degree -1.
    Instances are immutable after construction.
    """

    __slots__ = ("L", "N", "terms", "kind")

    def __init__(self, L: int, N: int, terms=None, kind=None):
        self.L = L
        self.N = N
        clean = {}
        k = kind
        nvars = (L - 1) * N
        for A, c in (terms or {}).items():
            ck = scalar_kind(c)
            if k is None:
                k = ck
            elif k != ck:
                raise StructureError("mixed exact and floating coefficients")
            if len(A) != nvars or any(e < 0 for e in A):
                raise StructureError(f"bad exponent tuple {A} for (L,N)=({L},{N})")
            if c != 0:
                clean[tuple(A)] = c
        self.terms = clean
        self.kind = k or "exact"

    @classmethod
    def zero(cls, L: int, N: int, kind: str = "exact") -> "Polynomial":
        return cls(L, N, {}, kind=kind)

    @classmethod
    def monomial(cls, L: int, N: int, A: Index, coeff=1) -> "Polynomial":
        return cls(L, N, {tuple(A): coeff})

    @classmethod
    def one(cls, L: int, N: int, coeff=1) -> "Polynomial":
        return cls.monomial(L, N, (0,) * ((L - 1) * N), coeff)

    def _check_context(self, other: "Polynomial"):
        if (self.L, self.N) != (other.L, other.N):
            raise StructureError("operands live in different (L, N) contexts")
        if self.terms and other.terms and self.kind != other.kind:
            raise StructureError("mixed exact and floating polynomials")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check_context(other)
        out = dict(self.terms)
        for A, c in other.terms.items():
            s = out.get(A, 0) + c
            if s == 0:
                out.pop(A, None)
            else:
                out[A] = s
        return Polynomial(self.L, self.N, out, kind=self.kind if self.terms else other.kind)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + other.scale(-1)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        self._check_context(other)
        out = {}
        for A, a in self.terms.items():
            for B, b in other.terms.items():
                C = tuple(x + y for x, y in zip(A, B))
                s = out.get(C, 0) + a * b
                if s == 0:
                    out.pop(C, None)
                else:
                    out[C] = s
        return Polynomial(self.L, self.N, out, kind=self.kind if self.terms else other.kind)

    def scale(self, c) -> "Polynomial":
        if c == 0:
            return Polynomial.zero(self.L, self.N, self.kind)
        if self.terms and scalar_kind(c) != self.kind:
            raise StructureError("scalar kind does not match polynomial kind")
        return Polynomial(self.L, self.N, {A: c * v for A, v in self.terms.items()})

    def coefficient(self, A: Index):
        """Coefficient of q^A; the appropriate zero when absent."""
        c = self.terms.get(tuple(A))
        if c is not None:
            return c
        return Fraction(0) if self.kind == "exact" else 0.0

    def degree(self) -> int:
        if not self.terms:
            return -1
        return max(sum(A) for A in self.terms)

    def max_abs(self):
        """Largest coefficient magnitude (0 for the zero polynomial)."""
        if not self.terms:
            return Fraction(0) if self.kind == "exact" else 0.0
        return max(abs(c) for c in self.terms.values())

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and (self.L, self.N) == (other.L, other.N)
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.L, self.N, frozenset(self.terms.items())))

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        bits = [f"{c}*q^{A}" for A, c in sorted(self.terms.items(), key=lambda kv: _graded_lex_key(kv[0]))]
        return "Polynomial(" + " + ".join(bits) + ")"
