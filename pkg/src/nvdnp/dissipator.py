"""Jump operators from the optical/ISC rate table and Liouvillian assembly.

Vectorization is column stacking throughout: ``vec(A rho B) = (B^T kron A) vec(rho)``,
i.e. ``vec(rho) = rho.reshape(-1, order="F")``.  Hamiltonians are in linear
frequency (MHz), so the commutator carries 2*pi and time is in microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .hamiltonian import HamiltonianSet
from .spin import M_VALUES, BasisIndex, Manifold, basis_of, dimension, flat_index

RECOMBINATION_MODES = ("uniform", "ms0")


@dataclass(frozen=True)
class RateModel:
    """Transition rates in MHz; ``w`` and ``epsilon`` are dimensionless.

    ``pump_leakage`` mirrors the spin-non-conserving radiative family in the
    optical pump.  ``recombination`` sets how NV0 returns to the ground
    triplet: equally into the three m_s ("uniform") or only into m_s = 0.
    """

    gamma_rad: float = 63.0
    gamma_isc0: float = 12.0
    gamma_iscpm: float = 80.0
    gamma_s0: float = 3.3
    gamma_spm: float = 2.4
    epsilon: float = 0.01
    w: float = 1.0
    gamma_ion: float = 0.0
    pump_leakage: bool = True
    recombination: str = "uniform"

    def __post_init__(self):
        for name in ("gamma_rad", "gamma_isc0", "gamma_iscpm", "gamma_s0", "gamma_spm",
                     "epsilon", "w", "gamma_ion"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if self.recombination not in RECOMBINATION_MODES:
            raise ValueError(f"recombination must be one of {RECOMBINATION_MODES}")


@dataclass(frozen=True)
class Jump:
    source: BasisIndex
    target: BasisIndex
    rate: float


@dataclass(frozen=True)
class JumpSet:
    jumps: tuple[Jump, ...]
    dim: int

    def __len__(self):
        return len(self.jumps)

    def __iter__(self):
        return iter(self.jumps)


def build_jumps(r: RateModel, dim: int | None = None) -> JumpSet:
    """Enumerate every nonzero incoherent channel, for each nuclear projection.

    ``dim`` defaults to 24 when ionization is on and 21 otherwise; a 24-level
    space may be requested explicitly with ``gamma_ion = 0``.
    """
    if dim is None:
        dim = dimension(r.gamma_ion > 0)
    if r.gamma_ion > 0 and dim != dimension(True):
        raise ValueError("ionization requires the 24-level space")
    G, E, S, N = Manifold.GROUND, Manifold.EXCITED, Manifold.SINGLET, Manifold.NV0
    out = []

    def add(src, dst, rate):
        if rate > 0:
            out.append(Jump(src, dst, rate))

    for mi in M_VALUES:
        for ms in M_VALUES:
            for ms2 in M_VALUES:
                if ms == ms2:
                    decay = r.gamma_rad
                    pump = r.w * r.gamma_rad
                else:
                    decay = r.epsilon * r.gamma_rad
                    pump = r.w * decay if r.pump_leakage else 0.0
                add(BasisIndex(E, ms, mi), BasisIndex(G, ms2, mi), decay)
                add(BasisIndex(G, ms, mi), BasisIndex(E, ms2, mi), pump)
            add(BasisIndex(E, ms, mi), BasisIndex(S, None, mi),
                r.gamma_isc0 if ms == 0 else r.gamma_iscpm)
            add(BasisIndex(S, None, mi), BasisIndex(G, ms, mi),
                r.gamma_s0 if ms == 0 else r.gamma_spm)
        if r.gamma_ion > 0:
            for ms in M_VALUES:
                add(BasisIndex(E, ms, mi), BasisIndex(N, None, mi), r.gamma_ion)
            if r.recombination == "uniform":
                for ms in M_VALUES:
                    add(BasisIndex(N, None, mi), BasisIndex(G, ms, mi), r.gamma_ion / 3.0)
            else:
                add(BasisIndex(N, None, mi), BasisIndex(G, 0, mi), r.gamma_ion)
    return JumpSet(tuple(out), dim)


def jump_operator(j: Jump, dim: int) -> sp.csr_array:
    m = flat_index(j.target, dim)
    n = flat_index(j.source, dim)
    return sp.csr_array(([math.sqrt(j.rate)], ([m], [n])), shape=(dim, dim))


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def coherent_superoperator(h: HamiltonianSet) -> sp.csr_array:
    eye = sp.identity(h.dim, dtype=complex, format="csr")
    hs = sp.csr_array(h.h_total)
    return sp.csr_array(-2j * math.pi * (sp.kron(eye, hs) - sp.kron(hs.T, eye)))


def dissipative_superoperator(jumps: JumpSet) -> sp.csr_array:
    """Sum of ``conj(L) kron L - (I kron L^dag L + (L^dag L)^T kron I) / 2`` over jumps.

    For ``L = sqrt(G) |m><n|`` the three terms reduce to a population transfer
    n -> m and a damping of row and column n, which are written directly.
    """
    d = jumps.dim
    rows, cols, vals = [], [], []
    span = np.arange(d)
    for j in jumps:
        m = flat_index(j.target, d)
        n = flat_index(j.source, d)
        rows.append([m + m * d])
        cols.append([n + n * d])
        vals.append([j.rate])
        # L^dag L rho: row n of rho; rho L^dag L: column n of rho
        for pos in (n + span * d, span + n * d):
            rows.append(pos)
            cols.append(pos)
            vals.append(np.full(d, -0.5 * j.rate))
    if not rows:
        return sp.csr_array((d * d, d * d), dtype=complex)
    mat = sp.coo_array((np.concatenate(vals).astype(complex),
                        (np.concatenate(rows), np.concatenate(cols))), shape=(d * d, d * d))
    return sp.csr_array(mat)


@dataclass(frozen=True)
class Liouvillian:
    """Sparse generator acting on column-stacked density matrices (1/us)."""

    matrix: sp.csr_array
    dim: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.dim)

    @cached_property
    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def _pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        labels = np.array([basis_of(i, self.dim).manifold.value for i in range(self.dim)])
        rows, cols = np.meshgrid(np.arange(self.dim), np.arange(self.dim), indexing="ij")
        # column-stacked position of (i, j) is i + j * dim
        return labels[rows], labels[cols], rows + cols * self.dim

    @cached_property
    def sector(self) -> np.ndarray:
        """Vectorized indices of coherences inside a single manifold.

        No coherent or jump term couples different manifolds, so these indices
        span an invariant subspace containing every block-diagonal state.
        """
        left, right, flat = self._pairs
        return np.sort(flat[left == right])

    @cached_property
    def blocks(self) -> tuple[np.ndarray, ...]:
        """Invariant index sets: the sector, then one per ordered pair of distinct manifolds.

        Jumps only move populations, so a coherence between two different
        manifolds never feeds anything but itself and its own block.
        """
        left, right, flat = self._pairs
        present = sorted(set(left[:, 0].tolist()))
        out = [self.sector]
        for a in present:
            for b in present:
                if a != b:
                    out.append(np.sort(flat[(left == a) & (right == b)]))
        return tuple(out)

    @cached_property
    def sector_dense(self) -> np.ndarray:
        return self.block_dense(0)

    def block_dense(self, k: int) -> np.ndarray:
        key = ("block", k)
        if key not in self._cache:
            idx = self.blocks[k]
            self._cache[key] = self.matrix[idx][:, idx].toarray()
        return self._cache[key]

    def trace_residual(self) -> float:
        """max |vec(I)^T L|, zero for a trace-preserving generator."""
        row = vec(np.eye(self.dim)) @ self.matrix
        return float(np.max(np.abs(row)))


def assemble_liouvillian(h: HamiltonianSet, jumps: JumpSet) -> Liouvillian:
    if h.dim != jumps.dim:
        raise ValueError(f"dimension mismatch: Hamiltonian {h.dim}, jumps {jumps.dim}")
    mat = coherent_superoperator(h) + dissipative_superoperator(jumps)
    return Liouvillian(sp.csr_array(mat), h.dim)
