"""Renormalized principal operator Phi(E) = K0(E) + K1(E) + U(E) in the eigenmode basis.

All time integrals are done in closed form (int_0^inf exp(-tA) dt = 1/A):

* K0 is diagonal, h0 - E + mu.
* K1 is diagonal, lambda^2 sum_s |f_s(a)|^2 [1/(s/2m + m - mu) - 1/(s/2m + h0 + m - E)].
  Each bracket decays like s^-2, so the sum converges in D = 2, 3.
* U moves one boson from mode s to mode t,
  -lambda^2 sqrt(n_s (n_t + 1)) f_s(a) f_t(a) / ((S + t)/2m + (n+1) m - E),
  where S is the Laplacian sum of the column state.

The epsilon-regularized operator and the bare mass mu(epsilon) live here too.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .fock import OccupationState, SectorBasis, h0_eigenvalue
from .manifold import ManifoldSpec, Mode, _eigenfunction_values, local_weights


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of one run. ``lam`` is the coupling lambda."""

    spec: ManifoldSpec
    m: float = 1.0
    mu: float = 0.5
    lam: float = 1.0
    a: tuple[float, ...] = (0.0, 0.0)
    n: int = 1

    def __post_init__(self):
        if not self.m > self.mu:
            raise ConfigurationError(f"need m > mu (got m={self.m}, mu={self.mu})")
        if not self.m > 0:
            raise ConfigurationError("m must be positive")
        if self.n < 0:
            raise ConfigurationError("sector index n must be >= 0")
        a = tuple(float(v) for v in self.spec.reduce(self.a))
        object.__setattr__(self, "a", a)

    @property
    def threshold(self) -> float:
        """n m + mu, the top of the operating window for E."""
        return self.n * self.m + self.mu

    def f_at_a(self, modes: Sequence[Mode]) -> np.ndarray:
        if not modes:
            return np.zeros(0)
        labels = np.asarray([md.label for md in modes])
        return _eigenfunction_values(self.spec, labels, np.atleast_2d(self.a))[0]

    def replace(self, **kw) -> "ModelParams":
        d = dict(spec=self.spec, m=self.m, mu=self.mu, lam=self.lam, a=self.a, n=self.n)
        d.update(kw)
        return ModelParams(**d)


@dataclass(frozen=True)
class RegularizationParams:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be > 0")


@dataclass(frozen=True, eq=False)
class PrincipalMatrix:
    entries: np.ndarray
    E: float
    kind: str = "phi"
    parts: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


# ---------------------------------------------------------------------------
# scalar pieces


def k0_diagonal(state: OccupationState, params: ModelParams, E: float) -> float:
    return h0_eigenvalue(state, params.m) - E + params.mu


def _k1_sum(w, sig, h0, params: ModelParams, E):
    m, mu = params.m, params.mu
    h0 = np.atleast_1d(np.asarray(h0, float))
    A = sig / (2 * m) + m - mu
    B = sig[None, :] / (2 * m) + h0[:, None] + m - E
    if np.any(B <= 0):
        raise DomainError("K1 needs E < h0 + m for every state (time integral diverges)")
    # 1/A - 1/B written as (B - A)/(A B) to avoid cancellation
    val = params.lam**2 * (((h0[:, None] + mu - E) / (A[None, :] * B)) @ w)
    dval = -params.lam**2 * ((1.0 / B**2) @ w)
    return val, dval


def k1_tail(params: ModelParams, h0, E: float, sigma_max: float):
    """Weyl-law estimate of the K1 sum above sigma_max, and its E-derivative."""
    m, mu, lam2 = params.m, params.mu, params.lam**2
    h0 = np.atleast_1d(np.asarray(h0, float))
    X = sigma_max
    if params.spec.dim == 2:
        a = X / (2 * m) + m - mu
        b = X / (2 * m) + h0 + m - E
        return lam2 * (2 * m / (4 * math.pi)) * np.log(b / a), -lam2 * (2 * m / (4 * math.pi)) / b
    a = 2 * m * (m - mu)
    b = 2 * m * (h0 + m - E)
    pre = lam2 * 2 * m / (4 * math.pi**2)
    val = pre * (2 * np.sqrt(b) * np.arctan(np.sqrt(b / X)) - 2 * np.sqrt(a) * np.arctan(np.sqrt(a / X)))
    dval = -2 * m * pre * (np.arctan(np.sqrt(b / X)) / np.sqrt(b) + np.sqrt(X) / (X + b))
    return val, dval


def k1_diagonal(state: OccupationState, params: ModelParams, E: float, sigma_max: float, tail: bool = False) -> float:
    """Renormalized kinetic correction on one basis state, summed over sigma <= sigma_max."""
    sig, w = local_weights(params.spec, float(sigma_max))
    h0 = h0_eigenvalue(state, params.m)
    val, _ = _k1_sum(w, sig, h0, params, E)
    if tail:
        val = val + k1_tail(params, h0, E, sigma_max)[0]
    return float(val[0])


def u_matrix_element(
    row: OccupationState, col: OccupationState, params: ModelParams, E: float, modes: Sequence[Mode]
) -> float:
    """Single U(E) entry computed directly from the two occupation patterns.

    ``modes`` must contain every mode occupied in either state.
    """
    by_id = {md.id: md for md in modes}
    m, n = params.m, col.n
    if row.n != n:
        return 0.0
    top = (n + 1) * m - E
    fa = dict(zip(by_id, params.f_at_a(list(by_id.values()))))
    lam2 = params.lam**2
    if row.key == col.key:
        total = 0.0
        for sid, ns in col.occupations:
            den = (col.S + by_id[sid].sigma) / (2 * m) + top
            if den <= 0:
                raise DomainError("U denominator is not positive; E is above the intermediate threshold")
            total -= lam2 * ns * fa[sid] ** 2 / den
        return total
    rc, cc = dict(row.occupations), dict(col.occupations)
    diff = {k: rc.get(k, 0) - cc.get(k, 0) for k in set(rc) | set(cc)}
    gained = [k for k, d in diff.items() if d == 1]
    lost = [k for k, d in diff.items() if d == -1]
    if len(gained) != 1 or len(lost) != 1 or any(abs(d) > 1 for d in diff.values()):
        return 0.0
    t, s = gained[0], lost[0]
    den = (col.S + by_id[t].sigma) / (2 * m) + top
    if den <= 0:
        raise DomainError("U denominator is not positive; E is above the intermediate threshold")
    return -lam2 * math.sqrt(cc[s] * (cc.get(t, 0) + 1)) * fa[s] * fa[t] / den


def mu_epsilon(params: ModelParams, eps: float, sigma_max: float) -> float:
    """Bare mass difference mu + lambda^2 int_eps^inf K_t(a,a) exp(-t(m - mu)) dt."""
    if not eps > 0:
        raise DomainError("epsilon must be > 0")
    sig, w = local_weights(params.spec, float(sigma_max))
    A = sig / (2 * params.m) + params.m - params.mu
    return params.mu + params.lam**2 * float(np.sum(w * np.exp(-eps * A) / A))


def bare_sum_partial(params: ModelParams, sigma_cut: float) -> float:
    """sum_{sigma <= sigma_cut} |f_sigma(a)|^2 / (sigma/2m + m - mu); divergent as the cut grows."""
    if not sigma_cut > 0:
        raise DomainError("sigma_cut must be > 0")
    sig, w = local_weights(params.spec, float(sigma_cut))
    return float(np.sum(w / (sig / (2 * params.m) + params.m - params.mu)))


# ---------------------------------------------------------------------------
# assembly


class PrincipalOperator:
    """Phi(E) and friends on one sector basis.

    The one-boson move structure of U is tabulated once; every assembly at a
    new E is then pure array arithmetic.
    """

    def __init__(self, basis: SectorBasis, params: ModelParams, sigma_max_k1: float | None = None, k1_tail: bool = False):
        if basis.n != params.n:
            raise ConfigurationError(f"basis sector n={basis.n} does not match params.n={params.n}")
        self.basis = basis
        self.params = params
        pool = list(basis.mode_pool)
        top_sigma = max((md.sigma for md in pool), default=0.0)
        if sigma_max_k1 is None:
            sigma_max_k1 = top_sigma
        if sigma_max_k1 < top_sigma * (1 - 1e-12):
            raise ConfigurationError("sigma_max_k1 must cover every mode of the Fock basis pool")
        self.sigma_max_k1 = float(sigma_max_k1)
        self.k1_tail = k1_tail
        self.h0 = basis.h0()
        self._w_sig, self._w = local_weights(params.spec, self.sigma_max_k1)
        self.f_a = dict(zip((md.id for md in pool), params.f_at_a(pool)))
        self._build_u_structure(pool)

    def _build_u_structure(self, pool):
        basis, m = self.basis, self.params.m
        rows, cols, coef, fprod, dsum, ssum = [], [], [], [], [], []
        active = [md for md in pool if self.f_a[md.id] != 0.0]
        by_id = {md.id: md for md in pool}
        for c, st in enumerate(basis.states):
            counts = dict(st.occupations)
            for sid, ns in st.occupations:
                fs = self.f_a[sid]
                if fs == 0.0:
                    continue
                s_sig = by_id[sid].sigma
                removed = dict(counts)
                if ns == 1:
                    del removed[sid]
                else:
                    removed[sid] = ns - 1
                for md in active:
                    if md.id == sid:
                        r, cf = c, float(ns)
                    else:
                        added = dict(removed)
                        added[md.id] = added.get(md.id, 0) + 1
                        r = basis.index.get(tuple(sorted(added.items())))
                        if r is None:
                            continue
                        cf = math.sqrt(ns * (counts.get(md.id, 0) + 1))
                    rows.append(r)
                    cols.append(c)
                    coef.append(cf)
                    fprod.append(fs * self.f_a[md.id])
                    dsum.append(st.S + md.sigma)
                    ssum.append(s_sig + md.sigma)
        self.u_rows = np.asarray(rows, dtype=np.int64)
        self.u_cols = np.asarray(cols, dtype=np.int64)
        self.u_weight = np.asarray(coef) * np.asarray(fprod)
        self._u_base = np.asarray(dsum) / (2 * m) + (basis.n + 1) * m
        self._u_moved = np.asarray(ssum)

    # -- pieces -----------------------------------------------------------
    def k0(self, E: float) -> np.ndarray:
        return self.h0 - E + self.params.mu

    def k1(self, E: float) -> np.ndarray:
        return self._k1(E)[0]

    def _k1(self, E):
        if self.basis.dim == 0:
            return np.zeros(0), np.zeros(0)
        val, dval = _k1_sum(self._w, self._w_sig, self.h0, self.params, E)
        if self.k1_tail:
            tv, td = k1_tail(self.params, self.h0, E, self.sigma_max_k1)
            val, dval = val + tv, dval + td
        return val, dval

    def _u_den(self, E):
        den = self._u_base - E
        if den.size and den.min() <= 0:
            raise DomainError("U denominator is not positive; E is above the intermediate threshold")
        return den

    def _scatter(self, vals) -> np.ndarray:
        d = self.basis.dim
        out = np.zeros((d, d))
        np.add.at(out, (self.u_rows, self.u_cols), vals)
        return out

    def u(self, E: float) -> np.ndarray:
        return self._scatter(-self.params.lam**2 * self.u_weight / self._u_den(E))

    # -- assembled operators ---------------------------------------------
    def phi(self, E: float, parts: bool = False) -> PrincipalMatrix:
        k0, k1, u = self.k0(E), self.k1(E), self.u(E)
        M = u.copy()
        M[np.diag_indices_from(M)] += k0 + k1
        extra = {"K0": k0, "K1": k1, "U": u} if parts else {}
        return PrincipalMatrix(M, float(E), "phi", extra)

    def dphi_dE(self, E: float) -> PrincipalMatrix:
        _, dk1 = self._k1(E)
        den = self._u_den(E)
        M = self._scatter(-self.params.lam**2 * self.u_weight / den**2)
        M[np.diag_indices_from(M)] += -1.0 + dk1
        return PrincipalMatrix(M, float(E), "dphi_dE")

    def phi_regularized(self, E: float, eps: float) -> PrincipalMatrix:
        """Phi_eps(E); converges entrywise to Phi(E) as eps -> 0."""
        if not eps > 0:
            raise DomainError("epsilon must be > 0")
        p = self.params
        m, mu, lam2 = p.m, p.mu, p.lam**2
        sig, w = self._w_sig, self._w
        A = sig / (2 * m) + m - mu
        B = sig[None, :] / (2 * m) + self.h0[:, None] + m - E
        if np.any(B <= 0):
            raise DomainError("K1 needs E < h0 + m for every state")
        # mu(eps) and the subtracted sum combined termwise
        cnum = mu + lam2 * ((np.exp(-eps * A)[None, :] / A[None, :] - np.exp(-eps * sig / (2 * m))[None, :] / B) @ w)
        den = self._u_den(E)
        M = self._scatter(-lam2 * self.u_weight * np.exp(-eps * self._u_moved / (4 * m)) / den)
        M[np.diag_indices_from(M)] += self.h0 - E + cnum
        return PrincipalMatrix(M, float(E), "phi_eps")


def assemble_phi(basis: SectorBasis, params: ModelParams, E: float, sigma_max_k1: float | None = None) -> PrincipalMatrix:
    return PrincipalOperator(basis, params, sigma_max_k1).phi(E, parts=True)


def assemble_dphi_dE(basis: SectorBasis, params: ModelParams, E: float, sigma_max_k1: float | None = None) -> PrincipalMatrix:
    return PrincipalOperator(basis, params, sigma_max_k1).dphi_dE(E)


def assemble_phi_regularized(
    basis: SectorBasis, params: ModelParams, E: float, eps: float, sigma_max_k1: float | None = None
) -> PrincipalMatrix:
    return PrincipalOperator(basis, params, sigma_max_k1).phi_regularized(E, eps)


def write_matrix_csv(matrix: PrincipalMatrix | np.ndarray, fh) -> None:
    """Dense row-major dump, one matrix row per CSV row."""
    M = matrix.entries if isinstance(matrix, PrincipalMatrix) else np.asarray(matrix)
    writer = csv.writer(fh, lineterminator="\n")
    for row in M:
        writer.writerow([repr(float(v)) for v in row])
