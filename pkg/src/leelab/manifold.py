"""Exact Laplace-Beltrami spectral data for flat tori and the round 2-sphere.

Eigenfunctions use a real orthonormal basis (cos/sin Fourier modes on tori,
real spherical harmonics on the sphere), so every operator built on top of
them is real symmetric.

Heat kernels follow the convention

    K_t(x, y) = sum_sigma f_sigma(x) f_sigma(y) exp(-t sigma / 2m),

i.e. the kernel of exp(t Laplacian / 2m). The one-particle rest mass factor
exp(-t m) is never folded in here.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConfigurationError, DomainError, UnsupportedError

KINDS = ("torus2", "torus3", "sphere2")

# relative slack when comparing eigenvalues against a cutoff
_SIGMA_RTOL = 1e-12


@dataclass(frozen=True)
class ManifoldSpec:
    """A supported compact manifold.

    ``lengths`` holds the torus side lengths, ``radius`` the sphere radius.
    """

    kind: str
    lengths: tuple[float, ...] = ()
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unsupported manifold kind {self.kind!r}; expected one of {KINDS}")
        if self.kind.startswith("torus"):
            want = 2 if self.kind == "torus2" else 3
            lengths = tuple(float(x) for x in self.lengths)
            if len(lengths) != want:
                raise ConfigurationError(f"{self.kind} needs {want} side lengths, got {len(lengths)}")
            if any(not (x > 0) for x in lengths):
                raise ConfigurationError("torus side lengths must be positive")
            object.__setattr__(self, "lengths", lengths)
        else:
            if not (self.radius > 0):
                raise ConfigurationError("sphere radius must be positive")
            object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def torus2(cls, L1: float = 2 * math.pi, L2: float = 2 * math.pi) -> "ManifoldSpec":
        return cls("torus2", (L1, L2))

    @classmethod
    def torus3(cls, L1: float = 2 * math.pi, L2: float = 2 * math.pi, L3: float = 2 * math.pi) -> "ManifoldSpec":
        return cls("torus3", (L1, L2, L3))

    @classmethod
    def sphere2(cls, R: float = 1.0) -> "ManifoldSpec":
        return cls("sphere2", radius=R)

    @property
    def is_torus(self) -> bool:
        return self.kind.startswith("torus")

    @property
    def dim(self) -> int:
        return 3 if self.kind == "torus3" else 2

    @property
    def volume(self) -> float:
        if self.is_torus:
            return float(np.prod(self.lengths))
        return 4.0 * math.pi * self.radius**2

    @property
    def ricci_lower(self) -> float:
        """kappa in Ric >= -kappa g. Zero for flat tori and for the round sphere."""
        return 0.0

    def reduce(self, x: Sequence[float]) -> np.ndarray:
        """Map coordinates into the fundamental domain.

        Tori use periodic coordinates in [0, L_i). The sphere uses
        (polar angle theta in [0, pi], azimuth phi in [0, 2 pi)).
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ConfigurationError(f"{self.kind} points need {self.dim} coordinates")
        if self.is_torus:
            return np.mod(x, np.asarray(self.lengths))
        theta = np.mod(x[..., 0], 2 * math.pi)
        phi = x[..., 1]
        flip = theta > math.pi
        theta = np.where(flip, 2 * math.pi - theta, theta)
        phi = np.mod(np.where(flip, phi + math.pi, phi), 2 * math.pi)
        return np.stack([theta, phi], axis=-1)

    def to_dict(self) -> dict:
        if self.is_torus:
            return {"kind": self.kind, "lengths": list(self.lengths)}
        return {"kind": self.kind, "radius": self.radius}


@dataclass(frozen=True)
class Mode:
    """One real orthonormal Laplace-Beltrami eigenfunction.

    Torus labels are ``(k_1, ..., k_D, parity)`` with parity 0 for cosine and
    1 for sine; sphere labels are ``(l, m)`` with real-harmonic index m.
    """

    id: int
    sigma: float
    label: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ModeTable:
    """Array view of the modes with sigma <= sigma_max, sorted canonically."""

    spec: ManifoldSpec
    sigma_max: float
    sigma: np.ndarray
    labels: np.ndarray  # (M, width) integer labels
    _modes: list = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.sigma)

    @property
    def modes(self) -> list[Mode]:
        if self._modes is None:
            object.__setattr__(
                self,
                "_modes",
                [Mode(i, float(s), tuple(int(v) for v in lab)) for i, (s, lab) in enumerate(zip(self.sigma, self.labels))],
            )
        return self._modes

    def values_at(self, points) -> np.ndarray:
        """Eigenfunction values, shape (n_points, n_modes)."""
        pts = np.atleast_2d(self.spec.reduce(points))
        return _eigenfunction_values(self.spec, self.labels, pts)


def _torus_lattice(spec: ManifoldSpec, sigma_max: float):
    L = np.asarray(spec.lengths)
    kmax = np.floor(L * math.sqrt(max(sigma_max, 0.0)) / (2 * math.pi) + 1e-9).astype(int)
    axes = [np.arange(-k, k + 1) for k in kmax]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(L))
    sig = ((2 * math.pi * grid / L) ** 2).sum(axis=1)
    keep = sig <= sigma_max * (1 + _SIGMA_RTOL) + _SIGMA_RTOL
    grid, sig = grid[keep], sig[keep]
    # canonical representative of +-k: first nonzero component positive
    nz = grid != 0
    first = np.argmax(nz, axis=1)
    lead = grid[np.arange(len(grid)), first]
    is_zero = ~nz.any(axis=1)
    half = lead > 0
    reps, rsig = grid[half], sig[half]
    labels = np.concatenate(
        [
            np.concatenate([grid[is_zero], np.zeros((is_zero.sum(), 1), int)], axis=1),
            np.concatenate([reps, np.zeros((len(reps), 1), int)], axis=1),
            np.concatenate([reps, np.ones((len(reps), 1), int)], axis=1),
        ]
    )
    sigmas = np.concatenate([sig[is_zero], rsig, rsig])
    return sigmas, labels


def _sphere_modes(spec: ManifoldSpec, sigma_max: float):
    R2 = spec.radius**2
    labels, sigmas = [], []
    l = 0
    while l * (l + 1) / R2 <= sigma_max * (1 + _SIGMA_RTOL) + _SIGMA_RTOL:
        for m in range(-l, l + 1):
            labels.append((l, m))
            sigmas.append(l * (l + 1) / R2)
        l += 1
    return np.asarray(sigmas, float), np.asarray(labels, int).reshape(-1, 2)


@lru_cache(maxsize=64)
def mode_table(spec: ManifoldSpec, sigma_max: float) -> ModeTable:
    if sigma_max < 0:
        raise DomainError("sigma_max must be >= 0")
    if spec.is_torus:
        sigmas, labels = _torus_lattice(spec, sigma_max)
    else:
        sigmas, labels = _sphere_modes(spec, sigma_max)
    keys = [labels[:, j] for j in range(labels.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys + [np.round(sigmas, 9)])
    sig, lab = sigmas[order], labels[order]
    sig.setflags(write=False)
    lab.setflags(write=False)
    return ModeTable(spec, float(sigma_max), sig, lab)


def enumerate_modes(spec: ManifoldSpec, sigma_max: float) -> list[Mode]:
    """All modes with sigma <= sigma_max, ascending in sigma, ties broken by label."""
    if not isinstance(spec, ManifoldSpec):
        raise ConfigurationError(f"expected a ManifoldSpec, got {type(spec).__name__}")
    return mode_table(spec, float(sigma_max)).modes


def _eigenfunction_values(spec: ManifoldSpec, labels: np.ndarray, pts: np.ndarray) -> np.ndarray:
    labels = np.atleast_2d(np.asarray(labels))
    if spec.is_torus:
        V = spec.volume
        L = np.asarray(spec.lengths)
        k = 2 * math.pi * labels[:, :-1] / L
        parity = labels[:, -1]
        const = ~(labels[:, :-1] != 0).any(axis=1)
        phase = pts @ k.T
        vals = np.where(parity == 1, np.sin(phase), np.cos(phase)) * math.sqrt(2.0 / V)
        return np.where(const, 1.0 / math.sqrt(V), vals)
    l, m = labels[:, 0], labels[:, 1]
    theta, phi = pts[:, 0:1], pts[:, 1:2]
    Y = special.sph_harm_y(l[None, :], np.abs(m)[None, :], theta, phi)
    sign = np.where(m % 2 == 0, 1.0, -1.0)
    real = np.where(
        m > 0,
        math.sqrt(2.0) * sign * Y.real,
        np.where(m < 0, math.sqrt(2.0) * sign * Y.imag, Y.real),
    )
    return real / spec.radius


def eigenfunction_at(spec: ManifoldSpec, mode: Mode, x) -> float:
    """Value of a real orthonormal eigenfunction at one point (units length^{-D/2})."""
    pts = np.atleast_2d(spec.reduce(x))
    return float(_eigenfunction_values(spec, np.asarray([mode.label]), pts)[0, 0])


# ---------------------------------------------------------------------------
# local spectral weights and Weyl tails


@lru_cache(maxsize=64)
def local_weights(spec: ManifoldSpec, sigma_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Distinct eigenvalues and the summed |f_sigma(a)|^2 over each eigenspace.

    Both supported manifolds are homogeneous, so the eigenspace sums do not
    depend on the point: shell lattice count / V on tori, (2l+1)/(4 pi R^2)
    on the sphere.
    """
    if spec.is_torus:
        L = np.asarray(spec.lengths)
        kmax = np.floor(L * math.sqrt(max(sigma_max, 0.0)) / (2 * math.pi) + 1e-9).astype(int)
        rest = [np.arange(-k, k + 1) for k in kmax[1:]]
        rest_sig = sum(np.meshgrid(*[(2 * math.pi * r / Li) ** 2 for r, Li in zip(rest, L[1:])], indexing="ij")).ravel()
        chunks = []
        for k1 in range(-kmax[0], kmax[0] + 1):
            s = (2 * math.pi * k1 / L[0]) ** 2 + rest_sig
            chunks.append(s[s <= sigma_max * (1 + _SIGMA_RTOL) + _SIGMA_RTOL])
        allsig = np.concatenate(chunks)
        uniq, counts = np.unique(np.round(allsig, 9), return_counts=True)
        return uniq, counts / spec.volume
    sig, lab = _sphere_modes(spec, sigma_max)
    ls = np.unique(lab[:, 0])
    return ls * (ls + 1) / spec.radius**2, (2 * ls + 1) / (4 * math.pi * spec.radius**2)


def weyl_density(spec: ManifoldSpec, sigma) -> np.ndarray:
    """Asymptotic density of sum |f_sigma(a)|^2 per unit sigma."""
    sigma = np.asarray(sigma, float)
    if spec.dim == 2:
        return np.full_like(sigma, 1.0 / (4 * math.pi))
    return np.sqrt(np.maximum(sigma, 0.0)) / (4 * math.pi**2)


def weyl_tail(spec: ManifoldSpec, sigma_max: float, summand: Callable[[float], float]) -> float:
    """Integral approximation of sum_{sigma > sigma_max} |f_sigma(a)|^2 summand(sigma)."""
    val, _ = integrate.quad(lambda s: float(weyl_density(spec, s)) * summand(s), sigma_max, np.inf, limit=200)
    return val


def heat_tail(spec: ManifoldSpec, t: float, m: float, sigma_max: float) -> float:
    """Weyl estimate of the heat-kernel mass omitted above sigma_max."""
    b = t / (2 * m)
    if spec.dim == 2:
        return math.exp(-b * sigma_max) / (4 * math.pi * b)
    X = sigma_max
    val = math.sqrt(X) * math.exp(-b * X) / b + math.sqrt(math.pi) / (2 * b**1.5) * math.erfc(math.sqrt(b * X))
    return val / (4 * math.pi**2)


# ---------------------------------------------------------------------------
# heat kernels


def default_sigma_max(t: float, m: float, digits: float = 40.0) -> float:
    """Cutoff where exp(-t sigma / 2m) has dropped below exp(-digits)."""
    return 2 * m * digits / t


def heat_kernel(spec, t, x, y, sigma_max=None, m=1.0, return_tail=False):
    """Truncated spectral heat kernel K_t(x, y).

    With ``return_tail`` the Weyl estimate of the omitted mass is returned as
    well; it bounds the truncation error on the diagonal.
    """
    if not t > 0:
        raise DomainError("heat kernel needs t > 0")
    if sigma_max is None:
        sigma_max = default_sigma_max(t, m)
    table = mode_table(spec, float(sigma_max))
    fx = table.values_at(x)[0]
    fy = table.values_at(y)[0]
    value = float(np.sum(fx * fy * np.exp(-t * table.sigma / (2 * m))))
    if return_tail:
        return value, heat_tail(spec, t, m, sigma_max)
    return value


def heat_kernel_diag(spec, t, a=None, m=1.0, sigma_max=None):
    """K_t(a, a), vectorized over t, from the eigenspace weights."""
    t_arr = np.atleast_1d(np.asarray(t, float))
    if np.any(t_arr <= 0):
        raise DomainError("heat kernel needs t > 0")
    if sigma_max is None:
        sigma_max = default_sigma_max(float(t_arr.min()), m)
    sig, w = local_weights(spec, float(sigma_max))
    out = np.exp(-np.outer(t_arr, sig) / (2 * m)) @ w
    return out if np.ndim(t) else float(out[0])


def euclidean_kernel_diag(t, m: float, dim: int):
    """(2m / 4 pi t)^{D/2}, the flat-space diagonal heat kernel."""
    return (2 * m / (4 * math.pi * np.asarray(t, float))) ** (dim / 2)


def heat_lower_bound(spec: ManifoldSpec, t, m: float = 1.0):
    """Comparison lower bound for kappa = 0 manifolds (flat tori only)."""
    if not spec.is_torus:
        raise UnsupportedError("heat-kernel lower bound is only available for flat tori (kappa = 0)")
    return euclidean_kernel_diag(t, m, spec.dim)


def heat_upper_bound(spec: ManifoldSpec, t, m: float, C: float):
    return 1.0 / spec.volume + C / (np.asarray(t, float) / (2 * m)) ** (spec.dim / 2)


def fit_upper_constant(spec: ManifoldSpec, m: float = 1.0, t_grid=None, sigma_max=None) -> float:
    """Smallest C with K_t(a,a) <= 1/V + C (t/2m)^{-D/2} over a t-grid.

    The grid maximum is refined with a bounded scalar search so the constant
    also holds between grid points.
    """
    if t_grid is None:
        t_grid = np.logspace(-2, 2, 81) / m
    t_grid = np.asarray(t_grid, float)
    if sigma_max is None:
        sigma_max = default_sigma_max(float(t_grid.min()), m)
    V, D = spec.volume, spec.dim

    def excess(t):
        return (heat_kernel_diag(spec, t, m=m, sigma_max=sigma_max) - 1.0 / V) * (t / (2 * m)) ** (D / 2)

    vals = excess(t_grid)
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = t_grid[max(i - 1, 0)], t_grid[min(i + 1, len(t_grid) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda lt: -float(excess(math.exp(lt))), bounds=(math.log(lo), math.log(hi)), method="bounded", options={"xatol": 1e-10})
        best = max(best, -float(res.fun))
    return best


def heat_kernel_diag_bounds(spec, t, a=None, m=1.0, C=None):
    """(lower, upper) bounds on K_t(a, a). The upper constant is fitted when not given."""
    lower = heat_lower_bound(spec, t, m)
    if C is None:
        C = fit_upper_constant(spec, m)
    return lower, heat_upper_bound(spec, t, m, C)


# ---------------------------------------------------------------------------
# quadrature grids and export


def quadrature_grid(spec: ManifoldSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights integrating products of low modes exactly.

    Tori: uniform n^D grid (exact for trigonometric polynomials of degree < n).
    Sphere: n Gauss-Legendre nodes in cos(theta) times 2n azimuths.
    """
    if spec.is_torus:
        axes = [np.arange(n) * L / n for L in spec.lengths]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.dim)
        return pts, np.full(len(pts), spec.volume / len(pts))
    x, wx = np.polynomial.legendre.leggauss(n)
    phi = np.arange(2 * n) * math.pi / n
    th = np.arccos(x)
    T, P = np.meshgrid(th, phi, indexing="ij")
    W = np.outer(wx, np.full(2 * n, math.pi / n)) * spec.radius**2
    return np.stack([T.ravel(), P.ravel()], axis=1), W.ravel()


def sample_grid(spec: ManifoldSpec, n: int) -> np.ndarray:
    """Deterministic n-point sample of the manifold for positivity checks."""
    if spec.is_torus:
        per = max(int(round(n ** (1.0 / spec.dim))), 1)
        axes = [(np.arange(per) + 0.5) * L / per for L in spec.lengths]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.dim)
        return pts
    # Fibonacci lattice, including both poles
    i = np.arange(n)
    z = 1 - 2 * i / max(n - 1, 1)
    theta = np.arccos(np.clip(z, -1, 1))
    phi = np.mod(i * math.pi * (3 - math.sqrt(5)), 2 * math.pi)
    return np.stack([theta, phi], axis=1)


def write_modes_csv(modes: Iterable[Mode], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["id", "sigma (1/length^2)", "label"])
    for mode in modes:
        writer.writerow([mode.id, repr(float(mode.sigma)), " ".join(str(v) for v in mode.label)])
