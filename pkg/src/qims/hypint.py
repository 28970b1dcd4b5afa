"""Hypergeometric integral solutions evaluated over one explicit chamber.

The degree-1 solution integrates a weight U(t) against the rational forms
phi_0, phi_n^(i) over the nested simplex 0 < t_{L-1} < ... < t_1 < 1
(t_0 = 1).  The substitution t_n = t_{n-1} u_n maps this chamber onto the
unit cube and turns every singular factor into a per-axis Jacobi weight
u^a (1-u)^b, which Gauss-Jacobi nodes absorb exactly; only the analytic
factor prod_i (1 - z_i t_{L-1})^{-beta_i/kappa} remains in the integrand.

Degree-M solutions use M copies of each integration level, ordered so all
level-n copies exceed all level-(n+1) copies and copies decrease within a
level; the integrand is fully symmetrized over the copy permutations and
integrated over that single ordered chamber.  Each copy carries a factor
1/t_{L-1}^(a), matching the degree-1 forms; without it the coefficient
vector does not satisfy the differential system.

All power-law bases are positive on the chamber for real z with
0 < z_i < 1, so principal branches apply throughout and no branch tracking
is needed.  Complex z is out of scope for quadrature (ODE transport covers
it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, permutations, product

import numpy as np
from scipy.special import gammaln

from .errors import ChamberError, ConvergenceError, ParameterError
from .polyalg import enumerate_basis, flat_pos
from .quadrature import QuadratureSpec, gauss_jacobi_01, tanh_sinh_01
from .weylops import Parameters


# --- parameter dictionaries -------------------------------------------------------

@dataclass(frozen=True)
class ExponentsM1:
    """Weight exponents of the degree-1 integral: U = prod t_n^(alpha_n/k)
    * prod (1-z_i t_{L-1})^(-beta_i/k) * prod (t_{n-1}-t_n)^(-gamma_n/k)."""

    alpha: tuple
    beta: tuple
    gamma: tuple
    planck: object

    @property
    def L(self):
        return len(self.alpha) + 1

    @property
    def N(self):
        return len(self.beta)


@dataclass(frozen=True)
class ExponentsM:
    """Weight exponents of the degree-M integral (single gamma on (1 - t_1))."""

    alpha: tuple
    beta: tuple
    gamma: object
    planck: object
    M: int

    @property
    def L(self):
        return len(self.alpha) + 1

    @property
    def N(self):
        return len(self.beta)


def dictionary_M1(params: Parameters) -> ExponentsM1:
    """alpha_n = e_{n+1} - e_n + kappa_{n+1}, beta_i = -theta_i, gamma_n = kappa_n,
    with e_L = e_0 and kappa_L = 1; requires the degree-1 resonance."""
    if params.resonance_V != 1:
        raise ParameterError(
            f"degree-1 dictionary requires kappa_0 - sum(theta) = 1, got {params.resonance_V}")
    L = params.L
    e = params.e + (params.e[0],)
    kap = params.kappa + (Fraction(1),)
    alpha = tuple(e[n + 1] - e[n] + kap[n + 1] for n in range(1, L))
    beta = tuple(-t for t in params.theta[1:])
    gamma = tuple(params.kappa[n] for n in range(1, L))
    return ExponentsM1(alpha, beta, gamma, params.planck)


def dictionary_M(params: Parameters, M: int) -> ExponentsM:
    """alpha_n = e_{n+1} - e_n + 1, beta_i = -theta_i, gamma = kappa_1 + M - 1;
    requires kappa_0 - sum(theta) = M and kappa_n = 1 for 2 <= n <= L-1."""
    if params.resonance_V != M:
        raise ParameterError(
            f"degree-M dictionary requires kappa_0 - sum(theta) = M, got "
            f"{params.resonance_V} != {M}")
    for n in range(2, params.L):
        if params.kappa[n] != 1:
            raise ParameterError(
                f"degree-M dictionary requires kappa_{n} = 1, got {params.kappa[n]}")
    L = params.L
    e = params.e + (params.e[0],)
    alpha = tuple(e[n + 1] - e[n] + 1 for n in range(1, L))
    beta = tuple(-t for t in params.theta[1:])
    gamma = params.kappa[1] + M - 1
    return ExponentsM(alpha, beta, gamma, params.planck, M)


# --- pointwise weight and forms ----------------------------------------------------

def _check_chamber_point(t, L):
    t = tuple(float(x) for x in t)
    if len(t) != L - 1:
        raise ChamberError(f"t must have length L-1={L - 1}")
    chain = (1.0,) + t
    if any(not (chain[k + 1] < chain[k]) for k in range(L - 1)) or not t[-1] > 0.0:
        raise ChamberError(f"point {t} outside the chamber 0 < t_(L-1) < ... < t_1 < 1")
    return t


def _check_z_box(z, N):
    z = tuple(float(x) for x in z)
    if len(z) != N:
        raise ChamberError(f"z must have length N={N}")
    if any(not (0.0 < zi < 1.0) for zi in z):
        raise ChamberError(f"z {z} outside the real box (0,1)^N")
    if len(set(z)) != N:
        raise ChamberError("z entries must be pairwise distinct")
    return z


def weight_M1(t, z, exps: ExponentsM1) -> float:
    """U(t) at an interior chamber point; positive real (principal powers)."""
    L, N = exps.L, exps.N
    t = _check_chamber_point(t, L)
    z = _check_z_box(z, N)
    kp = float(exps.planck)
    chain = (1.0,) + t
    out = 0.0
    for n in range(1, L):
        out += float(exps.alpha[n - 1]) / kp * math.log(t[n - 1])
        out += -float(exps.gamma[n - 1]) / kp * math.log(chain[n - 1] - chain[n])
    for i in range(N):
        out += -float(exps.beta[i]) / kp * math.log(1.0 - z[i] * t[-1])
    return math.exp(out)


def forms_M1(t, z):
    """Densities of the basis forms against dt_1 ^ ... ^ dt_{L-1}.

    Returns (phi_0, phi) with phi[n-1][i-1] the density of phi_n^(i):
    phi_0 = 1/(t_{L-1} prod (t_{n-1}-t_n)) and
    phi_n^(i) = 1/((1-z_i t_{L-1}) t_{L-1}) prod_{m != n} 1/(t_{m-1}-t_m).
    """
    L = len(t) + 1
    N = len(z)
    t = _check_chamber_point(t, L)
    z = tuple(float(x) for x in z)
    chain = (1.0,) + t
    gaps = [chain[m - 1] - chain[m] for m in range(1, L)]
    phi0 = 1.0 / (t[-1] * math.prod(gaps))
    phi = [[1.0 / ((1.0 - z[i] * t[-1]) * t[-1] * math.prod(
        g for m, g in enumerate(gaps, start=1) if m != n))
        for i in range(N)] for n in range(1, L)]
    return phi0, phi


# --- degree-1 evaluation ------------------------------------------------------------

def _axis_exponents_m1(exps: ExponentsM1, key):
    """Exact per-axis cube exponents (a_k, b_k) for one coefficient.

    key is None for the constant coefficient or (n, i) for -phi_n^(i).
    Includes the substitution Jacobian and the form density.
    """
    L = exps.L
    a, b = [], []
    for k in range(1, L):
        ak = sum(exps.alpha[k - 1:], Fraction(0))
        ak -= sum(exps.gamma[k:], Fraction(0))
        ak = ak / exps.planck - 1
        bk = -exps.gamma[k - 1] / exps.planck - 1
        if key is not None:
            n = key[0]
            if k <= n - 1:
                ak += 1
            if k == n:
                bk += 1
        a.append(ak)
        b.append(bk)
    return a, b


def _coefficient_keys(L, N):
    return [None] + [(n, i) for n in range(1, L) for i in range(1, N + 1)]


def _psi1_eval_at(exps: ExponentsM1, z, nodes: int):
    """Evaluate every coefficient with per-(n)-group Gauss-Jacobi tensor rules."""
    L, N = exps.L, exps.N
    kp = float(exps.planck)
    coeffs = {}
    for n_group in [None] + list(range(1, L)):
        key0 = None if n_group is None else (n_group, 1)
        a, b = _axis_exponents_m1(exps, key0)
        for ak, bk in zip(a, b):
            if not (ak > -1 and bk > -1):
                raise ConvergenceError(
                    f"nonconvergent exponent window: axis exponents ({float(ak)}, "
                    f"{float(bk)}) for coefficient group {n_group}")
        rules = [gauss_jacobi_01(nodes, float(ak), float(bk)) for ak, bk in zip(a, b)]
        grids = np.meshgrid(*[u for u, _ in rules], indexing="ij")
        W = math.prod(np.ix_(*[w for _, w in rules]))
        T = math.prod(grids)
        base = np.ones_like(T)
        for i in range(N):
            base = base * (1.0 - z[i] * T) ** (-float(exps.beta[i]) / kp)
        if n_group is None:
            coeffs[None] = float(np.sum(W * base))
        else:
            for i in range(1, N + 1):
                coeffs[(n_group, i)] = -float(np.sum(W * base / (1.0 - z[i - 1] * T)))
    return coeffs


@dataclass(frozen=True)
class IntegralResult:
    basis: tuple           # multi-indices, graded-lex
    vector: np.ndarray     # coefficients in basis order
    coeffs: dict           # key -> value (None / (n,i) for M=1, index tuple for M>=2)
    convergence: float     # relative change under node doubling (or MC std error)
    meta: dict


def _m1_vector(coeffs, L, N):
    basis = tuple(enumerate_basis(L, N, 1))
    idx = {A: k for k, A in enumerate(basis)}
    vec = np.zeros(len(basis))
    vec[idx[(0,) * ((L - 1) * N)]] = coeffs[None]
    for (n, i), v in ((k, v) for k, v in coeffs.items() if k is not None):
        A = [0] * ((L - 1) * N)
        A[flat_pos(n, i, N)] = 1
        vec[idx[tuple(A)]] = v
    return basis, vec


def eval_psi1(params: Parameters, z, quad: QuadratureSpec) -> IntegralResult:
    """Degree-1 coefficient vector c with c_(0) = int U phi_0 and
    c_(n,i) = -int U phi_n^(i), by Gauss-Jacobi tensor quadrature on the cube.

    Stability is asserted by node doubling, never assumed.
    """
    exps = dictionary_M1(params)
    z = _check_z_box(z, exps.N)
    c1 = _psi1_eval_at(exps, z, quad.nodes_per_axis)
    c2 = _psi1_eval_at(exps, z, 2 * quad.nodes_per_axis)
    scale = max(abs(v) for v in c2.values())
    change = max(abs(c1[k] - c2[k]) for k in c1) / scale if scale else 0.0
    if change > quad.stabilize_tol:
        raise ConvergenceError(
            f"quadrature failed to stabilize: relative change {change:.3e} after "
            f"doubling {quad.nodes_per_axis} nodes")
    basis, vec = _m1_vector(c2, exps.L, exps.N)
    return IntegralResult(basis, vec, c2, change,
                          {"scheme": "gauss_jacobi_tensor", "nodes": 2 * quad.nodes_per_axis})


# --- degree-1 series oracle ---------------------------------------------------------

def _log_beta(x, y):
    return gammaln(x) + gammaln(y) - gammaln(x + y)


def series_psi1(params: Parameters, z, order: int) -> IntegralResult:
    """Term-by-term integration of the cube integrand (N = 1 only, |z| < 1).

    Expands the analytic factor (1 - z T)^(-s) in powers of zT and integrates
    each term as a product of Beta functions; entirely independent of the
    quadrature path.
    """
    if params.N != 1:
        raise ParameterError("the series oracle is defined for N = 1")
    if order < 0:
        raise ParameterError("order must be nonnegative")
    exps = dictionary_M1(params)
    zv = float(z[0]) if isinstance(z, (tuple, list)) else float(z)
    if abs(zv) >= 1:
        raise ParameterError(f"series requires |z| < 1, got {zv}")
    kp = float(exps.planck)
    coeffs = {}
    tails = []
    for key in _coefficient_keys(exps.L, 1):
        a, b = _axis_exponents_m1(exps, key)
        for ak, bk in zip(a, b):
            if not (ak > -1 and bk > -1):
                raise ConvergenceError(
                    f"nonconvergent exponent window for coefficient {key}")
        # (1 - zT)^(-beta/kappa) = sum_k (beta/kappa)_k (zT)^k / k!, one extra
        # power of 1/(1 - zT) for the degree-1 coefficients
        s = float(exps.beta[0]) / kp + (1.0 if key is not None else 0.0)
        total = 0.0
        term = math.nan
        poch = 1.0
        for k in range(order + 1):
            logterm = sum(
                _log_beta(float(ak) + k + 1.0, float(bk) + 1.0) for ak, bk in zip(a, b))
            term = poch * zv ** k / math.factorial(k) * math.exp(logterm)
            total += term
            poch *= s + k
        sign = -1.0 if key is not None else 1.0
        coeffs[key] = sign * total
        tails.append(abs(term) / max(abs(total), 1e-300))
    basis, vec = _m1_vector(coeffs, exps.L, 1)
    return IntegralResult(basis, vec, coeffs, max(tails),
                          {"scheme": "series", "order": order, "tail_bound": max(tails)})


# --- degree-M chamber machinery -----------------------------------------------------

CHAMBERS = ("level_blocks", "copy_blocks")


def _chain_maps(L, M, chamber="level_blocks"):
    """Chain position of t_n^(a) under the chosen total order.

    ``level_blocks`` (default): all level-n copies exceed all level-(n+1)
    copies, copies descending within a level.  ``copy_blocks``: each copy's
    full chain t_1 > ... > t_{L-1} sits above the next copy's; every
    adjacent chain pair then meets a level-adjacent weight factor, which
    needs L <= 3 (for larger L the copy boundary would be a free face with
    no vanishing factor, breaking the coboundary argument).
    """
    if chamber not in CHAMBERS:
        raise ParameterError(f"unknown chamber {chamber!r}; pick one of {CHAMBERS}")
    pos = {}
    if chamber == "level_blocks":
        for n in range(1, L):
            for a in range(1, M + 1):
                pos[(n, a)] = (n - 1) * M + (a - 1)
    else:
        if L > 3 and M > 1:
            raise ParameterError(
                "copy_blocks chamber requires L <= 3: the copy boundary pairs "
                "levels (L-1, 1), which are weight-adjacent only then")
        for a in range(1, M + 1):
            for n in range(1, L):
                pos[(n, a)] = (a - 1) * (L - 1) + (n - 1)
    return pos


@dataclass(frozen=True)
class PhiIndexData:
    """Combinatorics of one degree-M coefficient form.

    ``segments`` lists ((n, i), S_prev, S) with copies S_prev+1..S carrying
    the (n, i) label; the final ``A0`` copies carry the plain form.  The
    block lengths plus A0 always sum to M and the multinomial weight is a
    positive integer.
    """

    A0: int
    multinomial: int
    sign: int
    segments: tuple

    @classmethod
    def from_index(cls, A, L, N, M):
        A0 = M - sum(A)
        segments = []
        s = 0
        for i in range(1, N + 1):
            for n in range(1, L):
                cnt = A[flat_pos(n, i, N)]
                if cnt:
                    segments.append(((n, i), s, s + cnt))
                s += cnt
        mult = math.factorial(M) // math.factorial(A0)
        for x in A:
            mult //= math.factorial(x)
        assert s + A0 == M and mult > 0
        return cls(A0, mult, (-1) ** (M - A0), tuple(segments))

    def copy_labels(self, M):
        """label of each copy 1..M: an (n, i) pair or None for the plain form."""
        out = [None] * M
        for (label, lo, hi) in self.segments:
            for a in range(lo, hi):
                out[a] = label
        return out


class _ChainPoint:
    """Batched chamber points with stable gap evaluation.

    x[..., p] holds chain coordinate p (descending).  ``gap(p, r)`` returns
    x_p - x_r; on the tensor path these come from the cube variables without
    cancellation, on the MC path directly.
    """

    def __init__(self, x, omx, gaps=None):
        self.x = x
        self.omx = omx
        self._gaps = gaps

    def gap(self, p, r):
        if p == r:
            raise ValueError("no gap between a coordinate and itself")
        if p > r:
            p, r = r, p
        if self._gaps is not None:
            return self._gaps[(p, r)]
        return self.x[..., p] - self.x[..., r]

    @classmethod
    def from_cube(cls, v, omv):
        K = v.shape[-1]
        x = np.cumprod(v, axis=-1)
        omx = np.empty_like(x)
        omx[..., 0] = omv[..., 0]
        for j in range(1, K):
            omx[..., j] = omx[..., j - 1] + x[..., j - 1] * omv[..., j]
        gaps = {}
        for p in range(K):
            prod = np.ones_like(v[..., 0])
            omprod = np.zeros_like(v[..., 0])
            for r in range(p + 1, K):
                omprod = omprod + prod * omv[..., r]
                prod = prod * v[..., r]
                gaps[(p, r)] = x[..., p] * omprod
        return cls(x, omx, gaps)


def _psiM_coeffs(exps: ExponentsM, z, pt: _ChainPoint, logw, basis,
                 chamber="level_blocks"):
    """Coefficient integrands summed over points: dict A -> value.

    logw already contains the quadrature weight and any substitution
    Jacobian; the per-copy 1/t_{L-1} normalization and the symmetric
    weight U go into a shared log-domain base.  Power-law bases enter
    through their (positive) chain gaps; on the copy_blocks chamber one
    base family has constant negative sign, which only multiplies every
    coefficient by one global constant and is dropped (the differential
    system is linear).  The rational densities keep their true signs.
    """
    L, N, M = exps.L, exps.N, exps.M
    kp = float(exps.planck)
    pos = _chain_maps(L, M, chamber)
    x, omx = pt.x, pt.omx

    logbase = np.array(logw, copy=True)
    for n in range(1, L):
        for a in range(1, M + 1):
            for b_ in range(a + 1, M + 1):
                logbase += (2.0 / kp) * np.log(pt.gap(pos[(n, a)], pos[(n, b_)]))
    for n in range(1, L - 1):
        for a in range(1, M + 1):
            for b_ in range(1, M + 1):
                logbase += (-1.0 / kp) * np.log(pt.gap(pos[(n, a)], pos[(n + 1, b_)]))
    for n in range(1, L):
        an = float(exps.alpha[n - 1]) / kp
        for a in range(1, M + 1):
            logbase += an * np.log(x[..., pos[(n, a)]])
    for a in range(1, M + 1):
        tl = x[..., pos[(L - 1, a)]]
        for i in range(N):
            logbase += (-float(exps.beta[i]) / kp) * np.log1p(-z[i] * tl)
        logbase += (-float(exps.gamma) / kp) * np.log(omx[..., pos[(1, a)]])
        logbase -= np.log(tl)  # per-copy 1/t_{L-1}
    base = np.exp(logbase)

    # per-sigma per-copy form factors;   copy a under sigma has level-n
    # coordinate t_n^(sigma_n(a))
    def copy_factors(sigma):
        """list over copies a=1..M of (f_0 value, {(n,i): f_n^(i) value})."""
        out = []
        for a in range(1, M + 1):
            cidx = [pos[(n, sigma[n - 1][a - 1] + 1)] for n in range(1, L)]
            gaps = []
            for m in range(1, L):
                if m == 1:
                    gaps.append(omx[..., cidx[0]])
                else:
                    g = pt.gap(cidx[m - 2], cidx[m - 1])
                    # pt.gap is the positive chain gap; restore the sign of
                    # t_{m-1} - t_m when the permuted copy inverts the order
                    gaps.append(g if cidx[m - 2] < cidx[m - 1] else -g)
            inv_gaps = [1.0 / g for g in gaps]
            f0 = math.prod(inv_gaps)
            tl = x[..., cidx[L - 2]]
            fni = {}
            for i in range(1, N + 1):
                pref = 1.0 / (1.0 - z[i - 1] * tl)
                for n in range(1, L):
                    fni[(n, i)] = pref * f0 * gaps[n - 1]
            out.append((f0, fni))
        return out

    sigmas = list(product(permutations(range(M)), repeat=L - 1))
    info = {A: PhiIndexData.from_index(A, L, N, M) for A in basis}
    acc = {A: 0.0 for A in basis}
    for sigma in sigmas:
        facs = copy_factors(sigma)
        for A in basis:
            dens = None
            for a, label in enumerate(info[A].copy_labels(M)):
                f0, fni = facs[a]
                piece = f0 if label is None else fni[label]
                dens = piece if dens is None else dens * piece
            acc[A] = acc[A] + float(np.sum(base * dens))
    return {A: info[A].sign * info[A].multinomial * acc[A] for A in basis}


def _probe_exponent(exps: ExponentsM, z, basis, moves, chamber="level_blocks"):
    """Fitted power of the cube integrand as the listed (axis, side) faces
    are approached together; +inf when the integrand vanishes there."""
    K = (exps.L - 1) * exps.M
    vals = []
    for eps in (1e-4, 5e-5):
        v = np.full((1, K), 0.5)
        for axis, side in moves:
            v[0, axis] = eps if side == 0 else 1.0 - eps
        omv = 1.0 - v
        for axis, side in moves:
            omv[0, axis] = 1.0 - eps if side == 0 else eps
        pt = _ChainPoint.from_cube(v, omv)
        logw = np.zeros(1)
        for j in range(K):
            logw += (K - 1 - j) * np.log(v[0, j])  # cube Jacobian
        c = _psiM_coeffs(exps, z, pt, logw, basis, chamber)
        worst = max(abs(val) for val in c.values())
        if not math.isfinite(worst):
            raise ConvergenceError(
                f"integrand overflow while probing faces {moves}")
        vals.append(worst)
    if vals[0] == 0.0 and vals[1] == 0.0:
        return math.inf
    return (math.log(vals[0]) - math.log(vals[1])) / math.log(2.0)


def _axis_exponents_numeric(exps: ExponentsM, z, basis, chamber="level_blocks"):
    """Measured per-axis endpoint exponents (v -> 0 and v -> 1 separately)."""
    K = (exps.L - 1) * exps.M
    return [tuple(_probe_exponent(exps, z, basis, [(axis, side)], chamber)
                  for side in (0, 1))
            for axis in range(K)]


def _window_check_M(exps: ExponentsM, z, basis, chamber="level_blocks"):
    """Integrability window on the concrete ordered chamber.

    Within-level collision faces carry (t-t')^(2/kappa) from the weight alone,
    so Re(2/kappa) > -1.  For L >= 3 the symmetrized densities put a simple
    pole on the adjacent-level collision faces on top of the weight's
    (t-t')^(-1/kappa), so those faces need -1 < Re(-1/kappa - 1) < 0, i.e.
    -1/2 < Re(1/kappa) < 0; no kappa with Re(kappa) > 0 makes the naive
    integral converge there.  The per-axis endpoint exponents of the
    substituted integrand are then measured numerically and must all
    exceed -1.
    """
    kp = float(exps.planck)
    if chamber == "level_blocks":
        # within-level collisions are codimension-1 faces here
        if not 2.0 / kp > -1.0:
            raise ConvergenceError(
                f"window violated: need Re(2/kappa) > -1, got {2.0 / kp}")
        if exps.L >= 3 and exps.M >= 2 and not 1.0 / kp < 0.0:
            raise ConvergenceError(
                "window violated: adjacent-level collision faces need "
                f"Re(1/kappa) < 0 for L >= 3, got 1/kappa = {1.0 / kp}")
    else:
        # every adjacent pair is level-adjacent; within-level collisions only
        # occur at corners, which the composite-face probes cover
        if exps.M >= 2 and not 1.0 / kp < 0.0:
            raise ConvergenceError(
                "window violated: copy_blocks faces need Re(1/kappa) < 0, "
                f"got 1/kappa = {1.0 / kp}")
    if not float(exps.gamma) / kp < 1:
        raise ConvergenceError("window violated: Re(gamma/kappa) must be below 1")
    # endpoint exponents do not depend on z (z only scales smooth factors), so
    # probe at a canonical point; downstream Monte Carlo proposals then agree
    # exactly across nearby z and finite differences see common random numbers
    zc = tuple(0.15 + 0.7 * j / max(exps.N - 1, 1) if exps.N > 1 else 0.35
               for j in range(exps.N))
    expos = _axis_exponents_numeric(exps, zc, basis, chamber)
    for axis, (e0, e1) in enumerate(expos):
        for side, expo in ((0, e0), (1, e1)):
            # guard band: an exponent this close to -1 is either measurement
            # noise on a divergent face or numerically hopeless
            if expo <= -0.98:
                raise ConvergenceError(
                    f"nonconvergent endpoint exponent {expo:.3f} on axis {axis}, "
                    f"side {side}")
    # composite faces: a codimension-c corner integrates rho^(E + c - 1) drho,
    # so it needs E > -c; per-axis probes cannot see these
    K = (exps.L - 1) * exps.M
    for c in (2, 3):
        if K < c:
            continue
        for axes in combinations(range(K), c):
            for sides in product((0, 1), repeat=c):
                expo = _probe_exponent(exps, zc, basis, list(zip(axes, sides)), chamber)
                if expo <= -c + 0.05:
                    raise ConvergenceError(
                        f"nonconvergent corner exponent {expo:.3f} at faces "
                        f"{list(zip(axes, sides))}")
    return expos


def eval_psiM(params: Parameters, z, M: int, quad: QuadratureSpec,
              chamber: str = "level_blocks") -> IntegralResult:
    """Degree-M coefficient vector c_A over the ordered chamber.

    M = 1 delegates to :func:`eval_psi1` (same chamber, trivial
    symmetrization).  For M >= 2 the scheme is a tanh-sinh tensor rule on
    the cube image of the chamber (K = M(L-1) axes, K <= 6) or seeded
    Monte Carlo with sorted-uniform chamber samples.
    """
    if M < 1:
        raise ParameterError("M must be a positive integer")
    if M == 1:
        return eval_psi1(params, z, quad)
    exps = dictionary_M(params, M)
    z = _check_z_box(z, exps.N)
    basis = tuple(enumerate_basis(exps.L, exps.N, M))
    expos = _window_check_M(exps, z, basis, chamber)
    K = (exps.L - 1) * M

    if quad.scheme == "monte_carlo":
        c, sem = _psiM_mc(exps, z, basis, expos, quad.mc_samples, quad.seed, chamber)
        scale = max(abs(v) for v in c.values())
        conv = sem / scale if scale else 0.0
        vec = np.array([c[A] for A in basis])
        return IntegralResult(basis, vec, c, conv,
                              {"scheme": "monte_carlo", "samples": quad.mc_samples,
                               "seed": quad.seed, "sem": sem, "chamber": chamber})

    if K > 6:
        raise ParameterError(
            f"tensor quadrature supports M(L-1) <= 6 axes, got {K}; use monte_carlo")
    c1 = _psiM_tensor(exps, z, basis, quad.nodes_per_axis, chamber)
    c2 = _psiM_tensor(exps, z, basis, int(quad.nodes_per_axis * 1.5) | 1, chamber)
    scale = max(abs(v) for v in c2.values())
    change = max(abs(c1[A] - c2[A]) for A in basis) / scale if scale else 0.0
    if change > quad.stabilize_tol:
        raise ConvergenceError(
            f"quadrature failed to stabilize: relative change {change:.3e} under "
            f"node refinement")
    vec = np.array([c2[A] for A in basis])
    return IntegralResult(basis, vec, c2, change,
                          {"scheme": "tanh_sinh_tensor",
                           "nodes": int(quad.nodes_per_axis * 1.5) | 1,
                           "chamber": chamber})


def _psiM_tensor(exps: ExponentsM, z, basis, nodes, chamber="level_blocks"):
    K = (exps.L - 1) * exps.M
    xs, omxs, ws = tanh_sinh_01(nodes)
    grids = np.meshgrid(*([xs] * K), indexing="ij")
    ogrids = np.meshgrid(*([omxs] * K), indexing="ij")
    v = np.stack(grids, axis=-1)
    omv = np.stack(ogrids, axis=-1)
    logw = np.zeros_like(v[..., 0])
    for j in range(K):
        logw += np.log(ws)[(slice(None),) + (None,) * (K - 1 - j)]
        logw += (K - 1 - j) * np.log(v[..., j])  # Jacobian of x_j = prod v
    pt = _ChainPoint.from_cube(v, omv)
    return _psiM_coeffs(exps, z, pt, logw, basis, chamber)


def _psiM_mc(exps: ExponentsM, z, basis, expos, nsamples, seed,
             chamber="level_blocks", batches=16):
    """Importance-sampled Monte Carlo on the cube image of the chamber.

    Each cube axis draws from Beta(E0+1, E1+1) with (E0, E1) the measured
    endpoint exponents of the integrand, so the weighted integrand stays
    bounded near every face and the estimator has finite variance.  The
    stream is seeded and evaluated in equal deterministic batches, giving a
    batch-mean standard error.
    """
    K = (exps.L - 1) * exps.M
    # rounding makes the proposal (and hence the sample stream) identical
    # across nearby z, so finite differences see common random numbers
    a = np.array([round(max(e[0], -0.95), 2) + 1.0 for e in expos])
    b = np.array([round(max(e[1], -0.95), 2) + 1.0 for e in expos])
    log_norm = sum(_log_beta(ai, bi) for ai, bi in zip(a, b))
    rng = np.random.default_rng(seed)
    per = max(1, nsamples // batches)
    per_batch = {A: [] for A in basis}
    for _ in range(batches):
        # Beta draws via a Gamma pair keep the small side accurate: near a
        # singular face 1-v must not round to 0
        g1 = rng.gamma(np.broadcast_to(a, (per, K)))
        g2 = rng.gamma(np.broadcast_to(b, (per, K)))
        tot = g1 + g2
        v = g1 / tot
        omv = g2 / tot
        good = np.all((v > 0.0) & (omv > 0.0), axis=1)
        v, omv = v[good], omv[good]
        pt = _ChainPoint.from_cube(v, omv)
        logw = np.full(v.shape[0], log_norm)
        for j in range(K):
            logw += (K - 1 - j) * np.log(v[:, j])          # cube Jacobian
            logw -= (a[j] - 1.0) * np.log(v[:, j])         # / proposal density
            logw -= (b[j] - 1.0) * np.log(omv[:, j])
        c = _psiM_coeffs(exps, z, pt, logw, basis, chamber)
        for A in basis:
            per_batch[A].append(c[A] / per)
    means = {A: float(np.mean(per_batch[A])) for A in basis}
    sem = max(float(np.std(per_batch[A], ddof=1)) / math.sqrt(batches) for A in basis)
    return means, sem


# --- differential-system residual ----------------------------------------------------

def pde_residual(params: Parameters, z, M: int, quad: QuadratureSpec, i: int = 1,
                 h: float = 5e-3, chamber: str = "level_blocks"):
    """Relative residual || planck * D_h c - M_i(z) c || / || M_i(z) c ||.

    D_h is the 4th-order central difference in z_i of the quadrature-evaluated
    coefficients; every stencil point reuses the same nodes (or the same MC
    sample set), so statistical error largely cancels in the difference.
    """
    from .pfaffian import PfaffianSystem

    z = tuple(float(x) for x in z)
    kp = float(params.planck)

    def c_at(zz):
        return eval_psiM(params, zz, M, quad, chamber=chamber).vector

    def shifted(delta):
        out = list(z)
        out[i - 1] += delta
        return tuple(out)

    c0 = c_at(z)
    st = [c_at(shifted(k * h)) for k in (-2, -1, 1, 2)]
    dc = (st[0] - 8 * st[1] + 8 * st[2] - st[3]) / (12 * h)
    system = PfaffianSystem(params, ("V", M))
    rhs = system.matrix_float(i, z).real @ c0
    denom = float(np.linalg.norm(rhs))
    return float(np.linalg.norm(kp * dc - rhs)) / denom if denom else 0.0
