import random
from fractions import Fraction as F

import numpy as np
import pytest

from conftest import m_window_params, random_z, resonant_params
from qims.cohomology import (LEMMA_IDS, compare_cohomology_operator,
                             lemma_residual, pfaffian_from_cohomology,
                             random_lemma_sample)
from qims.hypint import dictionary_M, eval_psiM
from qims.pfaffian import PfaffianSystem
from qims.polyalg import enumerate_basis, flat_pos
from qims.quadrature import QuadratureSpec


CONFIGS = [(2, 1, 1), (2, 1, 2), (2, 2, 1), (3, 1, 1), (3, 2, 2)]


@pytest.mark.parametrize("L,N,M", CONFIGS)
def test_cohomology_equals_operator_exactly(L, N, M):
    rnd = random.Random(97 * L + 13 * N + M)
    params = resonant_params(L, N, M, rnd, dict_m=True)
    for _ in range(3):
        z = random_z(N, rnd)
        for i in range(1, N + 1):
            cmp = compare_cohomology_operator(params, z, M, i)
            assert cmp.exact_equal, (L, N, M, i, cmp.max_abs_diff)


def test_diagonal_entry_matches_scalar_bracket():
    # diagonal of z_i * P_i is the scalar bracket of the reduction
    rnd = random.Random(31)
    L, N, M = 3, 2, 2
    params = resonant_params(L, N, M, rnd, dict_m=True)
    z = random_z(N, rnd)
    i = 2
    exps = dictionary_M(params, M)
    P = pfaffian_from_cohomology(params, z, M, i)
    basis = enumerate_basis(L, N, M)
    zi = z[i - 1]
    for idx, A in enumerate(basis):
        beta_i = exps.beta[i - 1]
        di = sum(A[flat_pos(n, i, N)] for n in range(1, L))
        A0 = M - sum(A)
        s = -beta_i * M
        for n in range(1, L):
            An = A[flat_pos(n, i, N)]
            inner = sum(exps.alpha[m - 1] for m in range(n, L)) - (L - n) - beta_i \
                + sum(A[flat_pos(m, i, N)] for m in range(1, n + 1))
            s -= An * inner
        s += (A0 * (di - beta_i)
              - sum(A[flat_pos(n, i, N)] * A[flat_pos(n, j, N)]
                    for j in range(1, N + 1) for n in range(1, L))
              + A[flat_pos(1, i, N)] * (M - exps.gamma)) / (zi - 1)
        for j in range(1, N + 1):
            if j == i:
                continue
            zj = z[j - 1]
            dj = sum(A[flat_pos(n, j, N)] for n in range(1, L))
            s += zj / (zi - zj) * sum(
                A[flat_pos(n, i, N)] * (dj + A[flat_pos(n, j, N)] - exps.beta[j - 1])
                - beta_i * A[flat_pos(n, j, N)] for n in range(1, L))
        assert P[idx][idx] == s / zi


def test_cohomology_float_path():
    rnd = random.Random(7)
    params = resonant_params(2, 2, 1, rnd, dict_m=True)
    z = (0.4, 0.7)
    P = pfaffian_from_cohomology(params, z, 1, 1)
    system = PfaffianSystem(params, ("V", 1))
    Mi = system.matrix_float(1, z)
    err = max(abs(P[a][b] - Mi[a, b].real) for a in range(3) for b in range(3))
    assert err < 1e-12


def test_m1_pfaffian_consistent_with_integral():
    # finite differences of the quadrature coefficients against P_i rows
    params = m_window_params(2, 1, 1, gamma=F(-1, 2))
    q = QuadratureSpec(nodes_per_axis=32)
    z0, h = 0.4, 5e-3
    cs = {d: eval_psiM(params, (z0 + d * h,), 1, q).vector for d in (-2, -1, 0, 1, 2)}
    dc = (cs[-2] - 8 * cs[-1] + 8 * cs[1] - cs[2]) / (12 * h)
    P = np.array([[float(x) for x in row]
                  for row in pfaffian_from_cohomology(params, (z0,), 1, 1)])
    resid = np.linalg.norm(float(params.planck) * dc - P @ cs[0]) / \
        np.linalg.norm(P @ cs[0])
    assert resid < 1e-6


@pytest.mark.parametrize("lemma", LEMMA_IDS)
def test_lemma_identities_exact(lemma):
    rnd = random.Random(hash(lemma) & 0xFFFF)
    Lmin = {"l_lt_n": 3, "n_lt_l": 4, "one_lt_l": 3}.get(lemma, 2)
    for L in (Lmin, Lmin + 1):
        for _ in range(8):
            s = random_lemma_sample(lemma, L, rnd)
            assert lemma_residual(lemma, **s) == 0, (lemma, L, s)


@pytest.mark.parametrize("lemma", ["l_lt_n", "n_lt_l", "one_lt_l", "l_eq_n"])
def test_lemma_degenerate_clauses(lemma):
    rnd = random.Random(5)
    Lmin = {"l_lt_n": 3, "n_lt_l": 4, "one_lt_l": 3}.get(lemma, 2)
    for _ in range(5):
        s = random_lemma_sample(lemma, Lmin, rnd)
        s["zj"] = s["zi"]
        assert lemma_residual(lemma, **s) == 0


def test_lemma_sample_validation():
    with pytest.raises(Exception):
        lemma_residual("l_lt_n", L=3, n=1, l=1, t1=(F(1, 2), F(1, 3)),
                       t2=(F(1, 5), F(1, 7)), zi=F(1, 11), zj=F(1, 13))
    with pytest.raises(Exception):
        lemma_residual("nonsense", L=2)
