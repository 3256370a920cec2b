"""Two-sector ground state from the zero mode of Phi(E_gr), and its positivity checks.

With v = (-omega_0')^{-1/2} psi_0 on the n-boson sector, the (n+1)-boson
component is

    u = -lambda (H0 - E_gr)^{-1} sum_t f_t(a) a_t^dagger v.

The Feynman-Hellmann slope equals -(1 + ||(H0 - E)^{-1} sum_t f_t a_t^dag psi_0||^2 lambda^2),
so ||u||^2 + ||v||^2 = 1 holds exactly on the creation closure of the basis.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .fock import SectorBasis, create, creation_closure
from .manifold import ManifoldSpec, _eigenfunction_values, mode_table, sample_grid
from .principal import PrincipalOperator
from .solver import GroundEnergy, feynman_hellmann, lowest_eigenpair


@dataclass(frozen=True, eq=False)
class TwoSectorState:
    psi_n: np.ndarray
    psi_np1: np.ndarray
    E_gr: float
    norms: tuple[float, float]
    basis_n: SectorBasis
    basis_np1: SectorBasis
    spec: ManifoldSpec
    slope: float
    gap: float

    def sector(self, which: str) -> tuple[SectorBasis, np.ndarray]:
        if which in ("n", 0, "0"):
            return self.basis_n, self.psi_n
        if which in ("n+1", 1, "1"):
            return self.basis_np1, self.psi_np1
        raise ConfigurationError(f"unknown sector {which!r}; use 'n' or 'n+1'")


def creation_pool(op: PrincipalOperator):
    """Modes a boson can be created into: sigma <= sigma_max_k1 with f(a) != 0."""
    modes = mode_table(op.params.spec, op.sigma_max_k1).modes
    fa = op.params.f_at_a(modes)
    return [md for md, f in zip(modes, fa) if f != 0.0], fa[fa != 0.0]


def _raise_amplitudes(op: PrincipalOperator, psi0: np.ndarray, basis_np1: SectorBasis):
    """sum_t f_t(a) a_t^dagger psi0, as a vector over basis_np1."""
    pool, fa = creation_pool(op)
    out = np.zeros(basis_np1.dim)
    for i, st in enumerate(op.basis.states):
        if psi0[i] == 0.0:
            continue
        for md, f in zip(pool, fa):
            new, amp = create(st, md)
            j = basis_np1.lookup(new)
            if j is None:
                raise ConfigurationError("(n+1)-sector basis does not contain the creation closure")
            out[j] += amp * f * psi0[i]
    return out


def reconstruct(op: PrincipalOperator, ground: GroundEnergy, basis_np1: SectorBasis | None = None, tol: float = 1e-8) -> TwoSectorState:
    """Ground state (Psi^(n), Psi^(n+1)) from the residue of the resolvent at E_gr."""
    params = op.params
    E = ground.E_gr
    res = ground.eigen if ground.eigen is not None and ground.eigen.E == E else lowest_eigenpair(op.phi(E))
    if abs(res.omega0) > tol:
        raise NumericalError(f"omega0(E_gr) = {res.omega0:.3e} is not a zero mode")
    if res.degenerate or not res.gap > 0:
        raise NumericalError("nondegeneracy precondition failed: lowest eigenvalue of Phi(E_gr) is degenerate")
    if basis_np1 is None:
        basis_np1 = creation_closure(op.basis, creation_pool(op)[0])
    h0 = basis_np1.h0()
    if basis_np1.dim and h0.min() <= E:
        raise NumericalError("free resolvent has a pole below E_gr in the (n+1) sector")
    slope = feynman_hellmann(op.dphi_dE(E), res.psi0)
    if not slope < 0:
        raise NumericalError(f"Feynman-Hellmann slope {slope} is not negative")
    c = 1.0 / math.sqrt(-slope)
    psi_n = c * res.psi0
    raised = _raise_amplitudes(op, res.psi0, basis_np1)
    psi_np1 = -params.lam * c * raised / (h0 - E)
    norms = (float(psi_n @ psi_n), float(psi_np1 @ psi_np1))
    return TwoSectorState(psi_n, psi_np1, E, norms, op.basis, basis_np1, params.spec, slope, res.gap)


# ---------------------------------------------------------------------------
# position space


def position_wavefunction(state: TwoSectorState, sector: str, points, chunk: int = 8192) -> np.ndarray:
    """Psi(y_1, ..., y_k) at each configuration; ``points`` has shape (P, k, D)."""
    basis, amps = state.sector(sector)
    return sector_wavefunction(basis, amps, state.spec, points, chunk)


def sector_wavefunction(basis: SectorBasis, amps, spec: ManifoldSpec, points, chunk: int = 8192) -> np.ndarray:
    k = basis.n
    amps = np.asarray(amps, float)
    if k == 0:
        P = len(points) if np.ndim(points) >= 1 else 1
        return np.full(P, amps[0] if len(amps) else 0.0)
    pts = np.asarray(points, float)
    if pts.ndim == 2 and k == 1:
        pts = pts[:, None, :]
    if pts.ndim != 3 or pts.shape[1] != k or pts.shape[2] != spec.dim:
        raise ConfigurationError(f"points must have shape (P, {k}, {spec.dim})")
    nz = np.nonzero(amps)[0]
    by_id = basis.modes_by_id
    ids = sorted({mid for i in nz for mid, _ in basis.states[i].occupations})
    column = {mid: j for j, mid in enumerate(ids)}
    labels = np.asarray([by_id[mid].label for mid in ids])
    F = [_eigenfunction_values(spec, labels, spec.reduce(pts[:, i, :])) for i in range(k)]
    idx = np.asarray([[column[mid] for mid in basis.states[i].mode_list()] for i in nz], dtype=np.int64).reshape(-1, k)
    norm = np.asarray(
        [1.0 / math.sqrt(math.factorial(k) * math.prod(math.factorial(c) for _, c in basis.states[i].occupations)) for i in nz]
    )
    coeff = amps[nz] * norm
    out = np.zeros(pts.shape[0])
    perms = list(itertools.permutations(range(k)))
    for start in range(0, len(nz), chunk):
        sl = slice(start, start + chunk)
        for perm in perms:
            prod = F[0][:, idx[sl, perm[0]]].copy()
            for i in range(1, k):
                prod *= F[i][:, idx[sl, perm[i]]]
            out += prod @ coeff[sl]
    return out


def configuration_grid(spec: ManifoldSpec, k: int, count: int = 256, seed: int = 0) -> np.ndarray:
    """Deterministic sample of k-particle configurations, shape (P, k, D).

    k = 1 uses ``count`` points of the sample grid, k = 2 the product of two
    sqrt(count)-point grids, and k >= 3 seeded uniform samples.
    """
    if k == 0:
        return np.zeros((1, 0, spec.dim))
    if k == 1:
        return sample_grid(spec, count)[:, None, :]
    if k == 2:
        per = int(math.ceil(math.sqrt(count)))
        g = sample_grid(spec, per)
        if len(g) * len(g) < count:
            g = sample_grid(spec, per + 1)
        a, b = np.meshgrid(np.arange(len(g)), np.arange(len(g)), indexing="ij")
        return np.stack([g[a.ravel()], g[b.ravel()]], axis=1)
    rng = np.random.default_rng(seed)
    if spec.is_torus:
        return rng.uniform(0, 1, size=(count, k, spec.dim)) * np.asarray(spec.lengths)
    z = rng.uniform(-1, 1, size=(count, k))
    phi = rng.uniform(0, 2 * math.pi, size=(count, k))
    return np.stack([np.arccos(z), phi], axis=-1)


@dataclass
class PositivityReport:
    passed: bool
    sectors: dict = field(default_factory=dict)
    semigroup: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "sectors": self.sectors, "semigroup": self.semigroup}


def positivity_certificate(state: TwoSectorState, grids: dict | None = None, margin: float = 0.0, count: int = 256, seed: int = 0) -> PositivityReport:
    """Sampled strict positivity of both sectors after a per-sector sign fix.

    A sector passes when min > margin * max over its grid (min > 0 for the
    default margin). A sector whose amplitudes vanish identically (the
    (n+1) part at lambda = 0) is not part of the state and is reported as
    vanishing. Violations are reported, not raised.
    """
    grids = dict(grids or {})
    report = PositivityReport(True)
    for name, basis in (("n", state.basis_n), ("n+1", state.basis_np1)):
        if not np.any(state.sector(name)[1]):
            report.sectors[name] = {"configurations": 0, "vanishing": True, "passed": name != "n"}
            report.passed &= name != "n"
            continue
        pts = grids.get(name)
        if pts is None:
            pts = configuration_grid(state.spec, basis.n, count, seed)
        vals = position_wavefunction(state, name, pts)
        sign = 1.0 if vals.mean() >= 0 else -1.0
        vals = sign * vals
        i = int(np.argmin(vals))
        ok = bool(vals[i] > margin * vals.max()) if margin > 0 else bool(vals[i] > 0)
        report.sectors[name] = {
            "configurations": int(len(vals)),
            "sign": sign,
            "min": float(vals[i]),
            "max": float(vals.max()),
            "argmin": np.asarray(pts[i]).tolist(),
            "passed": ok,
        }
        report.passed &= ok
    return report


def semigroup_position_kernel(op: PrincipalOperator, E: float, t: float, points) -> np.ndarray:
    """Kernel of exp(-t Phi(E)) between sample points, for the one-boson sector."""
    if op.basis.n != 1:
        raise ConfigurationError("the position-space semigroup check is defined for n = 1")
    w, V = np.linalg.eigh(op.phi(E).entries)
    by_id = op.basis.modes_by_id
    labels = np.asarray([by_id[st.occupations[0][0]].label for st in op.basis.states])
    F = _eigenfunction_values(op.params.spec, labels, op.params.spec.reduce(np.asarray(points, float)))
    G = F @ V
    # shift by omega_0 for range; positivity is unaffected by the positive factor
    return (G * np.exp(-t * (w - w[0]))) @ G.T * math.exp(-t * w[0])


def semigroup_positivity(op: PrincipalOperator, E: float, ts=(0.5, 1.0, 2.0), points=None, count: int = 256) -> dict:
    if points is None:
        points = sample_grid(op.params.spec, count)
    out = {}
    for t in ts:
        K = semigroup_position_kernel(op, E, t / op.params.m, points)
        out[repr(float(t))] = {"min": float(K.min()), "max": float(K.max()), "passed": bool(K.min() > 0)}
    return out


def write_wavefunction_csv(points, values, spec: ManifoldSpec, fh) -> None:
    """One row per configuration: coordinates of each particle, then the value."""
    pts = np.asarray(points, float)
    if pts.ndim == 2:
        pts = pts[:, None, :]
    k = pts.shape[1]
    coord = ["x", "y", "z"][: spec.dim] if spec.is_torus else ["theta", "phi"]
    unit = "(length)" if spec.is_torus else "(rad)"
    header = [f"{c}{i + 1} {unit}" for i in range(k) for c in coord] + ["value"]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for p, v in zip(pts, values):
        writer.writerow([repr(float(x)) for x in p.ravel()] + [repr(float(v))])
