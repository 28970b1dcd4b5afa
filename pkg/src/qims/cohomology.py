"""Pfaffian rows from the cohomology reduction, plus exact identity checks.

``pfaffian_from_cohomology`` assembles, for each degree-M multi-index A, the
row expressing planck * dc_A/dz_i as a combination of the c_B: the scalar
bracket on c_A itself plus shifted-index contributions with one raised/
lowered entry, a raise/lower pair within one time column, a transfer between
two time columns, and the four-entry double transfer.  A term whose shifted
target leaves the level set is dropped; such terms always carry a vanishing
guard entry (the lowered entry was 0, or the raise had no room because
A_0 = 0), so a nonvanishing coefficient pointing outside the basis would
indicate a transcription bug and is asserted against.

The identity checks evaluate both sides of the two-copy symmetrized
rational-function identities used to reduce the coboundary terms; with
exact rational inputs the residual must be exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product as _iproduct

import numpy as np

from .errors import ParameterError, StructureError
from .polyalg import enumerate_basis, flat_pos
from .weylops import Parameters
from .hypint import dictionary_M


def _display_row(A, L, N, M, alpha, beta, gamma, z, i):
    """Coefficients of planck*z_i*dc_A/dz_i on the c_B basis."""
    pos = lambda n, j: flat_pos(n, j, N)
    Av = lambda n, j: A[pos(n, j)]
    A0 = M - sum(A)
    di = sum(Av(n, i) for n in range(1, L))
    zi = z[i - 1]
    row = {}

    def add(B, c):
        if c == 0:
            return
        if any(x < 0 for x in B) or sum(B) > M:
            return
        B = tuple(B)
        row[B] = row.get(B, 0) + c

    def shifted(*moves):
        B = list(A)
        for (n, j, delta) in moves:
            B[pos(n, j)] += delta
        return B

    # scalar bracket on c_A
    s = -beta[i - 1] * M
    for n in range(1, L):
        inner = sum(alpha[m - 1] for m in range(n, L))
        inner += -(L - n) - beta[i - 1] + sum(Av(m, i) for m in range(1, n + 1))
        s -= Av(n, i) * inner
    s += (A0 * (di - beta[i - 1])
          - sum(Av(n, i) * Av(n, j) for j in range(1, N + 1) for n in range(1, L))
          + Av(1, i) * (M - gamma)) / (zi - 1)
    for j in range(1, N + 1):
        if j == i:
            continue
        zj = z[j - 1]
        dj = sum(Av(n, j) for n in range(1, L))
        s += zj / (zi - zj) * sum(
            Av(n, i) * (dj + Av(n, j) - beta[j - 1]) - beta[i - 1] * Av(n, j)
            for n in range(1, L))
    add(list(A), s)

    # one entry lowered
    for n in range(1, L):
        coeff = -(A0 + 1) * (
            sum(Av(n, j) for j in range(1, N + 1)) + (gamma - M if n == 1 else 0)
        ) / (zi - 1)
        add(shifted((n, i, -1)), coeff)

    # one entry raised
    for n in range(1, L):
        add(shifted((n, i, +1)), zi / (zi - 1) * (di - beta[i - 1]) * (Av(n, i) + 1))

    # raise/lower within column i
    for n in range(1, L):
        pref = -(sum(Av(n, j) for j in range(1, N + 1))
                 + (gamma - M if n == 1 else 0)) / (zi - 1)
        for m in range(1, n):
            add(shifted((m, i, +1), (n, i, -1)), pref * (Av(m, i) + 1))
        for m in range(n + 1, L):
            add(shifted((m, i, +1), (n, i, -1)), pref * zi * (Av(m, i) + 1))

    # double transfer between columns i and j
    for j in range(1, N + 1):
        if j == i:
            continue
        zj = z[j - 1]
        for n in range(1, L):
            pref = (Av(n, j) + 1) / (zi - zj)
            for m in range(1, n):
                add(shifted((m, j, -1), (m, i, +1), (n, i, -1), (n, j, +1)),
                    pref * zj * (Av(m, i) + 1))
            for m in range(n + 1, L):
                add(shifted((m, j, -1), (m, i, +1), (n, i, -1), (n, j, +1)),
                    pref * zi * (Av(m, i) + 1))

    # single transfer j -> i and i -> j
    for j in range(1, N + 1):
        if j == i:
            continue
        zj = z[j - 1]
        dj = sum(Av(n, j) for n in range(1, L))
        for n in range(1, L):
            add(shifted((n, j, -1), (n, i, +1)),
                zi / (zi - zj) * (beta[i - 1] - di) * (Av(n, i) + 1))
            add(shifted((n, i, -1), (n, j, +1)),
                zj / (zi - zj) * (beta[j - 1] - dj) * (Av(n, j) + 1))
    return row


def pfaffian_from_cohomology(params: Parameters, z, M: int, i: int):
    """The D x D matrix P_i(z) with planck * dc/dz_i = P_i(z) c, assembled
    from the shift coefficients of the cohomology reduction; exact for exact
    rational z."""
    exps = dictionary_M(params, M)
    L, N = params.L, params.N
    if not 1 <= i <= N:
        raise StructureError(f"time index {i} out of range")
    z = tuple(z)
    exact = all(isinstance(x, (int, Fraction)) for x in z)
    zt = tuple(Fraction(x) if exact else float(x) for x in z)
    alpha = list(exps.alpha)
    beta = list(exps.beta)
    gamma = exps.gamma
    if not exact:
        alpha = [float(x) for x in alpha]
        beta = [float(x) for x in beta]
        gamma = float(gamma)
    basis = enumerate_basis(L, N, M)
    idx = {A: k for k, A in enumerate(basis)}
    D = len(basis)
    zero = Fraction(0) if exact else 0.0
    P = [[zero] * D for _ in range(D)]
    zi = zt[i - 1]
    for A in basis:
        row = _display_row(A, L, N, M, alpha, beta, gamma, zt, i)
        for B, c in row.items():
            P[idx[A]][idx[B]] += c / zi
    return P


@dataclass(frozen=True)
class CohomologyComparison:
    exact_equal: bool
    max_abs_diff: object
    lambda_shift: object          # scalar if P - M is a multiple of identity, else None
    discrepancy: tuple            # the difference matrix rows (empty when equal)


def compare_cohomology_operator(params: Parameters, z, M: int, i: int) -> CohomologyComparison:
    """Exact entrywise comparison of P_i(z) with the operator restriction M_i(z).

    Tests exact equality first; if that fails, tests whether the difference
    is lambda(z) * identity and reports the discrepancy either way (never
    silently).
    """
    from .pfaffian import PfaffianSystem

    P = pfaffian_from_cohomology(params, z, M, i)
    Mi = PfaffianSystem(params, ("V", M)).matrix_at(i, z)
    D = len(P)
    diff = [[Mi[a][b] - P[a][b] for b in range(D)] for a in range(D)]
    maxdiff = max(abs(x) for row in diff for x in row)
    if maxdiff == 0:
        return CohomologyComparison(True, Fraction(0), None, ())
    offdiag = max((abs(diff[a][b]) for a in range(D) for b in range(D) if a != b),
                  default=Fraction(0))
    lam = None
    if offdiag == 0 and all(diff[a][a] == diff[0][0] for a in range(D)):
        lam = diff[0][0]
    return CohomologyComparison(False, maxdiff, lam, tuple(tuple(r) for r in diff))


# --- two-copy rational identity checks ---------------------------------------------

LEMMA_IDS = ("l_lt_n", "n_lt_l", "one_lt_l", "l_eq_n", "l_eq_0", "jacobi", "f0")


def _gaps(c, L):
    """chain gaps of one copy: [t_0 - t_1, t_1 - t_2, ...] with t_0 = 1."""
    chain = (Fraction(1),) + tuple(c)
    return [chain[m - 1] - chain[m] for m in range(1, L)]


def _f0(c, L):
    out = Fraction(1)
    for g in _gaps(c, L):
        out /= g
    return out


def _fn(c, n, zz, L):
    out = Fraction(1) / (1 - zz * c[L - 2])
    for m, g in enumerate(_gaps(c, L), start=1):
        if m != n:
            out /= g
    return out


def _C(n, c1, c2, L):
    """C(n, 1, 2): copy-1 coordinates against copy-2 partners; t_0^(2) = 1 and
    no partner below the last level."""
    out = Fraction(0)
    chain2 = (Fraction(1),) + tuple(c2)
    for m in range(n, L):
        tm = c1[m - 1]
        term = -1 / (tm - chain2[m - 1]) + 2 / (tm - c2[m - 1])
        if m <= L - 2:
            term += -1 / (tm - c2[m])
        out += tm * term
    if n == 1:
        out += c1[0] / (c1[0] - 1)
    return out


def _sym2(expr, t1, t2, L):
    """Sum expr(c1, c2) over independent per-level copy swaps."""
    total = Fraction(0)
    for mask in _iproduct((0, 1), repeat=L - 1):
        c1 = tuple(t2[m] if mask[m] else t1[m] for m in range(L - 1))
        c2 = tuple(t1[m] if mask[m] else t2[m] for m in range(L - 1))
        total += expr(c1, c2)
    return total


def lemma_residual(lemma_id: str, *, L, t1=None, t2=None, zi=None, zj=None,
                   n=None, l=None, t=None):
    """|LHS - RHS| of one displayed identity at an exact sample point.

    The inputs are exact rationals; the sides are rational functions, so the
    residual is exactly zero whenever the identity holds.  ``zj = zi`` selects
    the degenerate clauses (the cross-index lines drop out).
    """
    if lemma_id == "jacobi":
        lhs = t / (1 - zi * t)
        rhs = (1 - zj * t) / (zi - zj) * (1 / (1 - zi * t) - 1 / (1 - zj * t))
        return abs(lhs - rhs)
    if lemma_id == "f0":
        lhs = t1[L - 2] / (1 - zi * t1[L - 2])
        f0v = _f0(t1, L)
        rhs = (-f0v + sum(_fn(t1, nn, zi, L) for nn in range(1, L))) / ((zi - 1) * f0v)
        return abs(lhs - rhs)

    degenerate = zj == zi
    inv_last = lambda c: 1 / c[L - 2]

    def lhs_expr(fl_label):
        def expr(c1, c2):
            fl = _fn(c2, l, zj, L) if fl_label == "fl" else _f0(c2, L)
            return _C(n, c1, c2, L) * inv_last(c1) * _fn(c1, n, zi, L) * inv_last(c2) * fl
        return expr

    if lemma_id == "l_lt_n":
        if not (1 <= l < n <= L - 1):
            raise ParameterError("l_lt_n requires 1 <= l < n <= L-1")
        lhs = _sym2(lhs_expr("fl"), t1, t2, L)
        rhs = _sym2(lambda c1, c2: inv_last(c1) * _fn(c1, n, zi, L)
                    * inv_last(c2) * _fn(c2, l, zi, L), t1, t2, L)
        if not degenerate:
            rhs += zj / (zi - zj) * _sym2(
                lambda c1, c2: inv_last(c1) * inv_last(c2)
                * (_fn(c1, n, zi, L) - _fn(c1, n, zj, L))
                * (_fn(c2, l, zi, L) - _fn(c2, l, zj, L)), t1, t2, L)
        return abs(lhs - rhs)

    if lemma_id in ("n_lt_l", "one_lt_l"):
        if lemma_id == "n_lt_l" and not (2 <= n < l <= L - 1):
            raise ParameterError("n_lt_l requires 2 <= n < l <= L-1")
        if lemma_id == "one_lt_l":
            if n not in (None, 1):
                raise ParameterError("one_lt_l fixes n = 1")
            n = 1
            if not 1 < l <= L - 1:
                raise ParameterError("one_lt_l requires 1 < l <= L-1")
        lhs = _sym2(lhs_expr("fl"), t1, t2, L)
        rhs = Fraction(0)
        if not degenerate:
            rhs += _sym2(
                lambda c1, c2: inv_last(c1) * inv_last(c2)
                * (_fn(c1, n, zi, L) - _fn(c1, n, zj, L))
                * (zi * _fn(c2, l, zi, L) - zj * _fn(c2, l, zj, L)),
                t1, t2, L) / (zi - zj)
        if lemma_id == "one_lt_l":
            rhs += _sym2(
                lambda c1, c2: inv_last(c1) * (
                    _f0(c1, L) - _fn(c1, 1, zi, L)
                    - zi * sum(_fn(c1, m, zi, L) for m in range(2, L)))
                * inv_last(c2) * _fn(c2, l, zj, L), t1, t2, L) / (zi - 1)
        return abs(lhs - rhs)

    if lemma_id == "l_eq_n":
        lhs = _sym2(lambda c1, c2: _C(n, c1, c2, L) * inv_last(c1)
                    * _fn(c1, n, zi, L) * inv_last(c2) * _fn(c2, n, zj, L), t1, t2, L)
        rhs = _sym2(lambda c1, c2: inv_last(c1) * _fn(c1, n, zi, L)
                    * inv_last(c2) * _fn(c2, n, zi, L), t1, t2, L)
        if n != 1:
            rhs += _sym2(
                lambda c1, c2: inv_last(c1) * (
                    -_f0(c1, L)
                    + sum(_fn(c1, m, zi, L) for m in range(1, n + 1))
                    + zi * sum(_fn(c1, m, zi, L) for m in range(n + 1, L)))
                * inv_last(c2) * _fn(c2, n, zj, L), t1, t2, L) / (zi - 1)
        if not degenerate:
            rhs += zj / (zi - zj) * _sym2(
                lambda c1, c2: inv_last(c1) * inv_last(c2)
                * (_fn(c1, n, zi, L) - _fn(c1, n, zj, L))
                * (_fn(c2, n, zi, L) - _fn(c2, n, zj, L)), t1, t2, L)
        return abs(lhs - rhs)

    if lemma_id == "l_eq_0":
        lhs = _sym2(lhs_expr("f0"), t1, t2, L)
        rhs = _sym2(
            lambda c1, c2: inv_last(c1) * inv_last(c2) * _fn(c1, n, zi, L) * (
                -(2 if n == 1 else 1) * _f0(c2, L)
                + zi * sum(_fn(c2, m, zi, L) for m in range(1, L))),
            t1, t2, L) / (zi - 1)
        if n == 1:
            rhs += _sym2(
                lambda c1, c2: inv_last(c1) * inv_last(c2) * _f0(c2, L) * (
                    _f0(c1, L) - zi * sum(_fn(c1, m, zi, L) for m in range(2, L))),
                t1, t2, L) / (zi - 1)
        return abs(lhs - rhs)

    raise ParameterError(f"unknown lemma id {lemma_id!r}; pick one of {LEMMA_IDS}")


def random_lemma_sample(lemma_id: str, L: int, rng):
    """Exact rational sample with pairwise-distinct coordinates off every
    singular locus; retried internally by the caller if a division fails."""
    def rq():
        return Fraction(rng.randint(1, 60), 61) + Fraction(rng.randint(0, 6), 431)

    vals = set()
    def fresh():
        while True:
            x = rq()
            if x not in vals and x != 0 and x != 1:
                vals.add(x)
                return x

    sample = {"L": L}
    if lemma_id == "jacobi":
        sample.update(t=fresh(), zi=fresh(), zj=fresh())
        return sample
    sample["t1"] = tuple(fresh() for _ in range(L - 1))
    sample["zi"] = fresh()
    if lemma_id == "f0":
        return sample
    sample["t2"] = tuple(fresh() for _ in range(L - 1))
    sample["zj"] = fresh()
    if lemma_id == "l_lt_n":
        n = rng.randint(2, L - 1)
        sample.update(n=n, l=rng.randint(1, n - 1))
    elif lemma_id == "n_lt_l":
        n = rng.randint(2, L - 2)
        sample.update(n=n, l=rng.randint(n + 1, L - 1))
    elif lemma_id == "one_lt_l":
        sample.update(l=rng.randint(2, L - 1))
    elif lemma_id in ("l_eq_n", "l_eq_0"):
        sample.update(n=rng.randint(1, L - 1))
    return sample
