"""Lowest eigenpair of Phi(E) and the ground-state energy as the zero of omega_0(E)."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError, SearchFloorError
from .principal import PrincipalMatrix, PrincipalOperator

log = logging.getLogger(__name__)

DEGENERACY_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigenResult:
    omega0: float
    psi0: np.ndarray
    gap: float
    E: float
    omegas: np.ndarray
    vectors: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class GroundEnergy:
    E_gr: float
    bracket: tuple[float, float]
    iterations: int
    omega0_at_E_gr: float
    eigen: EigenResult | None = None
    slope: float = -1.0


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def lowest_eigenpair(matrix: PrincipalMatrix | np.ndarray, k: int = 2) -> EigenResult:
    """The k lowest eigenpairs, ascending, with the largest-magnitude entry of each vector positive."""
    if isinstance(matrix, PrincipalMatrix):
        M, E = matrix.entries, matrix.E
    else:
        M, E = np.asarray(matrix, float), float("nan")
    d = M.shape[0]
    if d == 0:
        raise NumericalError("cannot diagonalize an empty matrix")
    k = max(1, min(k, d))
    try:
        w, v = scipy.linalg.eigh(M, subset_by_index=[0, k - 1], check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        finite = bool(np.isfinite(M).all())
        asym = float(np.max(np.abs(M - M.T))) if finite else float("nan")
        raise NumericalError(f"eigensolve failed ({exc}); dim={d}, finite={finite}, max asymmetry={asym:.3e}") from exc
    v = _fix_signs(v)
    gap = float(w[1] - w[0]) if k > 1 else math.inf
    scale = max(float(np.max(np.abs(M))), 1e-300)
    degenerate = gap < DEGENERACY_RTOL * scale
    if degenerate:
        log.warning("numerically degenerate lowest eigenvalue at E=%s (gap %.3e)", E, gap)
    return EigenResult(float(w[0]), v[:, 0].copy(), gap, E, w, v, degenerate)


def feynman_hellmann(matrix_dE: PrincipalMatrix | np.ndarray, psi0: np.ndarray) -> float:
    """<psi0| dPhi/dE |psi0>, the slope of omega_0(E)."""
    D = matrix_dE.entries if isinstance(matrix_dE, PrincipalMatrix) else np.asarray(matrix_dE)
    psi0 = np.asarray(psi0, float)
    return float(psi0 @ D @ psi0)


def eigen_at(op: PrincipalOperator, E: float, k: int = 2) -> EigenResult:
    return lowest_eigenpair(op.phi(E), k)


def find_ground_energy(
    op: PrincipalOperator,
    E_hi: float | None = None,
    tol: float = 1e-9,
    floor: float | None = None,
    newton: bool = True,
    max_iter: int = 200,
) -> GroundEnergy:
    """Zero of the strictly decreasing omega_0(E) below E_hi = n m + mu.

    The bracket is opened by doubling steps downward from E_hi. Inside it,
    Newton steps with the Feynman-Hellmann slope are taken when they stay in
    the bracket; otherwise the bracket is bisected.
    """
    p = op.params
    if E_hi is None:
        E_hi = p.threshold
    if floor is None:
        floor = p.threshold - 50 * p.m
    top = eigen_at(op, E_hi)
    evals = 1
    if top.omega0 >= 0:
        if p.lam == 0 or top.omega0 == 0:
            return GroundEnergy(float(E_hi), (float(E_hi), float(E_hi)), 0, top.omega0, top, -1.0)
        raise NumericalError(f"omega0(E_hi={E_hi}) = {top.omega0:.3e} >= 0; no ground state below E_hi")

    hi, w_hi, res_hi = float(E_hi), top.omega0, top
    step = p.m
    while True:
        lo = hi - step
        if lo < floor:
            raise SearchFloorError(f"ground state below search floor {floor} (omega0 = {w_hi:.3e} still negative at E = {hi})")
        res_lo = eigen_at(op, lo)
        evals += 1
        if res_lo.omega0 > 0:
            break
        hi, w_hi, res_hi = lo, res_lo.omega0, res_lo
        step *= 2
    w_lo = res_lo.omega0

    # start from the endpoint closer to the root
    x, res = (lo, res_lo) if abs(w_lo) < abs(w_hi) else (hi, res_hi)
    bracket = (lo, hi)
    it = 0
    while abs(res.omega0) > tol:
        if it >= max_iter or hi - lo <= 1e-15 * max(1.0, abs(x)):
            raise NumericalError(f"ground-energy search stalled at residual {res.omega0:.3e} after {it} iterations")
        it += 1
        cand = None
        if newton:
            slope = feynman_hellmann(op.dphi_dE(x), res.psi0)
            if slope < 0:
                cand = x - res.omega0 / slope
                if not (lo < cand < hi):
                    cand = None
        if cand is None:
            cand = 0.5 * (lo + hi)
        bracket = (lo, hi)
        x = cand
        res = eigen_at(op, x)
        evals += 1
        if res.omega0 > 0:
            lo = x
        else:
            hi = x

    E_gr = float(res.E)
    slope = feynman_hellmann(op.dphi_dE(E_gr), res.psi0)
    log.debug("E_gr=%.12f after %d iterations (%d eigensolves)", E_gr, it, evals)
    return GroundEnergy(E_gr, (float(bracket[0]), float(bracket[1])), it, res.omega0, res, slope)


def omega0_curve(op: PrincipalOperator, E_grid, jobs: int = 1) -> list[tuple[float, float, float, float]]:
    """(E, omega0, gap, Feynman-Hellmann slope) for each grid energy, in grid order."""

    def one(E):
        res = eigen_at(op, float(E))
        return float(E), res.omega0, res.gap, feynman_hellmann(op.dphi_dE(float(E)), res.psi0)

    grid = [float(E) for E in E_grid]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, grid))
    return [one(E) for E in grid]
