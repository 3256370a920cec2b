"""Symmetric n-boson sector bases over a truncated pool of one-particle modes.

A basis state is an occupation multiset. Its position wavefunction is the
permutation sum of one-particle eigenfunction products scaled by
1/sqrt(n! prod_i n_i!), which makes every basis state unit-normalized.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, DomainError
from .manifold import Mode

DEFAULT_MAX_DIM = 250_000


@dataclass(frozen=True, order=True)
class OccupationState:
    """Occupation multiset stored as sorted ``(mode_id, count)`` pairs."""

    occupations: tuple[tuple[int, int], ...]
    n: int = field(compare=False)
    S: float = field(compare=False)

    @property
    def key(self) -> tuple[tuple[int, int], ...]:
        return self.occupations

    def count(self, mode_id: int) -> int:
        for mid, c in self.occupations:
            if mid == mode_id:
                return c
        return 0

    def mode_list(self) -> list[int]:
        """Mode ids with multiplicity, e.g. ((3, 2), (5, 1)) -> [3, 3, 5]."""
        return [mid for mid, c in self.occupations for _ in range(c)]

    def __repr__(self) -> str:
        occ = ",".join(f"{mid}^{c}" if c > 1 else str(mid) for mid, c in self.occupations)
        return f"|{occ}>"


VACUUM = OccupationState((), 0, 0.0)


def make_state(mode_ids: Iterable[int], sigmas: dict[int, float]) -> OccupationState:
    counts: dict[int, int] = {}
    for mid in mode_ids:
        counts[mid] = counts.get(mid, 0) + 1
    occ = tuple(sorted(counts.items()))
    S = math.fsum(sigmas[mid] * c for mid, c in occ)
    return OccupationState(occ, sum(counts.values()), S)


def h0_eigenvalue(state: OccupationState, m: float) -> float:
    """Free energy S/2m + n m of a basis state."""
    return state.S / (2 * m) + state.n * m


def _shift(state: OccupationState, mode: Mode, delta: int) -> OccupationState | None:
    counts = dict(state.occupations)
    new = counts.get(mode.id, 0) + delta
    if new < 0:
        return None
    if new == 0:
        counts.pop(mode.id, None)
    else:
        counts[mode.id] = new
    occ = tuple(sorted(counts.items()))
    S = state.S + delta * mode.sigma
    if not occ:
        S = 0.0
    return OccupationState(occ, state.n + delta, S)


def annihilate(state: OccupationState, mode: Mode) -> tuple[OccupationState | None, float]:
    """a_sigma |state> = sqrt(n_sigma) |state - e_sigma>; absent modes give (None, 0)."""
    c = state.count(mode.id)
    if c == 0:
        return None, 0.0
    return _shift(state, mode, -1), math.sqrt(c)


def create(state: OccupationState, mode: Mode) -> tuple[OccupationState, float]:
    """a_sigma^dagger |state> = sqrt(n_sigma + 1) |state + e_sigma>."""
    return _shift(state, mode, +1), math.sqrt(state.count(mode.id) + 1)


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Ordered, immutable basis of one boson-number sector.

    ``energy_cutoff`` is None for bases built as a creation closure rather
    than by an energy cutoff.
    """

    states: tuple[OccupationState, ...]
    n: int
    mode_pool: tuple[Mode, ...]
    energy_cutoff: float | None
    m: float
    index: dict = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "index", {s.key: i for i, s in enumerate(self.states)})

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i: int) -> OccupationState:
        return self.states[i]

    @property
    def dim(self) -> int:
        return len(self.states)

    def lookup(self, state: OccupationState | None) -> int | None:
        if state is None:
            return None
        return self.index.get(state.key)

    def h0(self) -> np.ndarray:
        return np.array([h0_eigenvalue(s, self.m) for s in self.states])

    def laplacian_sums(self) -> np.ndarray:
        return np.array([s.S for s in self.states])

    @property
    def modes_by_id(self) -> dict[int, Mode]:
        return {md.id: md for md in self.mode_pool}


def _sort_states(states: Iterable[OccupationState]) -> tuple[OccupationState, ...]:
    return tuple(sorted(states, key=lambda s: (round(s.S, 9), s.key)))


def enumerate_sector(
    mode_pool: Sequence[Mode],
    n: int,
    energy_cutoff: float,
    m: float,
    max_dim: int = DEFAULT_MAX_DIM,
) -> SectorBasis:
    """Every n-boson occupation multiset over ``mode_pool`` with h0 <= energy_cutoff.

    Ordering is ascending h0, then canonical key.
    """
    if n < 0:
        raise DomainError("boson number must be >= 0")
    pool = tuple(sorted(mode_pool, key=lambda md: (md.sigma, md.label)))
    sigmas = {md.id: md.sigma for md in pool}
    budget = 2 * m * (energy_cutoff - n * m)
    tol = 1e-12 * max(1.0, abs(budget))
    if budget < -tol:
        return SectorBasis((), n, pool, energy_cutoff, m)
    if n == 0:
        return SectorBasis((VACUUM,), 0, pool, energy_cutoff, m)

    found: list[OccupationState] = []
    chosen: list[int] = []

    def rec(start: int, left: int, used: float):
        for i in range(start, len(pool)):
            s = pool[i].sigma
            # remaining bosons sit at sigma >= s, so the cheapest completion costs left*s
            if used + left * s > budget + tol:
                break
            chosen.append(pool[i].id)
            if left == 1:
                found.append(make_state(chosen, sigmas))
                if len(found) > max_dim:
                    raise CapacityError(f"sector dimension exceeds the configured limit {max_dim}")
            else:
                rec(i, left - 1, used + s)
            chosen.pop()

    rec(0, n, 0.0)
    return SectorBasis(_sort_states(found), n, pool, energy_cutoff, m)


def creation_closure(basis: SectorBasis, pool: Sequence[Mode], max_dim: int = DEFAULT_MAX_DIM) -> SectorBasis:
    """All (n+1)-boson states a^dagger_tau |s> with s in ``basis`` and tau in ``pool``.

    This is exactly the set of intermediate states reached by one creation,
    so Schur complements and residues computed over it are free of
    sector-mismatch truncation error.
    """
    pool = tuple(sorted(pool, key=lambda md: (md.sigma, md.label)))
    seen: dict = {}
    for s in basis.states:
        for md in pool:
            new, _ = create(s, md)
            if new.key not in seen:
                seen[new.key] = new
                if len(seen) > max_dim:
                    raise CapacityError(f"closure dimension exceeds the configured limit {max_dim}")
    merged = {md.id: md for md in basis.mode_pool}
    merged.update({md.id: md for md in pool})
    all_modes = tuple(sorted(merged.values(), key=lambda md: (md.sigma, md.label)))
    return SectorBasis(_sort_states(seen.values()), basis.n + 1, all_modes, None, basis.m)


def write_basis_csv(basis: SectorBasis, fh) -> None:
    m = basis.m
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["index", "occupations", "S (1/length^2)", "h0 (m)"])
    for i, s in enumerate(basis.states):
        occ = " ".join(f"{mid}:{c}" for mid, c in s.occupations)
        writer.writerow([i, occ, repr(float(s.S)), repr(float(h0_eigenvalue(s, m) / m))])
