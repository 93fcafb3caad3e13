"""Time propagation, steady states and the pump / RF-swap / pump sequence."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .dissipator import Liouvillian, RateModel, assemble_liouvillian, build_jumps, unvec, vec
from .hamiltonian import FieldConfig, SystemParams, build_hamiltonian
from .spin import Manifold, dimension, index

HERMITIAN_TOL = 1e-9
TRACE_TOL = 1e-9
POSITIVITY_TOL = -1e-8
RELAX_TIME_US = 1.0


class InvariantError(RuntimeError):
    """A propagated or solved state left the physical density-matrix set."""


class DegenerateSteadyStateError(RuntimeError):
    """The generator has more than one stationary state."""


def check_state(rho: np.ndarray) -> None:
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if herm > HERMITIAN_TOL:
        raise InvariantError(f"state not Hermitian (deviation {herm:.3g})")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvariantError(f"trace {tr:.12g} differs from 1")
    lam = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    if lam < POSITIVITY_TOL:
        raise InvariantError(f"negative eigenvalue {lam:.3g}")


@dataclass(frozen=True)
class DensityState:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        check_state(rho)
        rho.flags.writeable = False
        object.__setattr__(self, "rho", rho)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityState":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_populations(cls, pops: dict[int, float], dim: int) -> "DensityState":
        rho = np.zeros((dim, dim), dtype=complex)
        for i, p in pops.items():
            rho[i, i] = p
        return cls(rho)


@dataclass(frozen=True)
class PolarizationTrace:
    times: np.ndarray
    p_plus1: np.ndarray
    p_zero: np.ndarray
    p_minus1: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        arrs = [np.asarray(a, dtype=float) for a in (self.p_plus1, self.p_zero, self.p_minus1)]
        total = arrs[0] + arrs[1] + arrs[2]
        if np.any(np.abs(total - 1.0) > 1e-6):
            raise InvariantError("population triple does not sum to 1")
        for a in arrs:
            if np.any(a < -1e-9) or np.any(a > 1 + 1e-9):
                raise InvariantError("relative population outside [0, 1]")
        object.__setattr__(self, "times", t)
        for name, a in zip(("p_plus1", "p_zero", "p_minus1"), arrs):
            object.__setattr__(self, name, a)

    def component(self, name: str) -> np.ndarray:
        return {"plus1": self.p_plus1, "zero": self.p_zero, "minus1": self.p_minus1}[name]


def _finish(v: np.ndarray, dim: int) -> DensityState:
    rho = unvec(v, dim)
    return DensityState(0.5 * (rho + rho.conj().T))


def _trace_row(L: Liouvillian) -> np.ndarray:
    return vec(np.eye(L.dim)).astype(complex)[L.sector]


def _propagator(L: Liouvillian, dt: float, block: int) -> np.ndarray:
    cache = L._cache.setdefault(("expm", block), {})
    key = round(dt, 12)
    u = cache.get(key)
    if u is None:
        u = sla.expm(L.block_dense(block) * dt)
        if block == 0:
            # project out the round-off trace defect so long step chains stay normalized
            tr = _trace_row(L)
            u -= np.outer(tr / (tr @ tr), tr @ u - tr)
        if len(cache) > 64:
            cache.clear()
        cache[key] = u
    return u


def propagate_many(L: Liouvillian, rho0: DensityState, times: Sequence[float]) -> list[DensityState]:
    """States at each of ``times`` (us, nondecreasing, >= 0) starting from ``rho0``.

    The generator splits into invariant blocks (intra-manifold sector plus one
    block per pair of manifolds), each exponentiated on its own; blocks where
    the state is zero are skipped.  Consecutive gaps reuse cached step
    exponentials, so a uniform grid costs one exponential per block.
    """
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be nondecreasing and >= 0")
    if rho0.dim != L.dim:
        raise ValueError(f"state dimension {rho0.dim} does not match generator {L.dim}")
    v_full = vec(rho0.rho)
    active = [k for k, idx in enumerate(L.blocks) if k == 0 or np.any(v_full[idx] != 0)]
    parts = {k: v_full[L.blocks[k]] for k in active}
    out = []
    prev = 0.0
    for t in times:
        dt = t - prev
        if dt > 0:
            parts = {k: _propagator(L, dt, k) @ v for k, v in parts.items()}
        prev = t
        full = np.zeros(L.dim * L.dim, dtype=complex)
        for k, v in parts.items():
            full[L.blocks[k]] = v
        out.append(_finish(full, L.dim))
    return out


def propagate(L: Liouvillian, rho0: DensityState, t: float) -> DensityState:
    """exp(L t) applied to ``rho0``; ``t`` in microseconds."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return rho0
    return propagate_many(L, rho0, [t])[0]


def steady_state(L: Liouvillian, check_unique: bool = True) -> DensityState:
    """Unit-trace kernel of ``L`` from a bordered linear system.

    The equation for rho_00 is replaced by the trace condition.  With
    ``check_unique`` the two slowest decay rates are inspected and a second
    stationary mode raises :class:`DegenerateSteadyStateError`.
    """
    idx = L.sector
    a = L.sector_dense.copy()
    d = L.dim
    trace_row = np.zeros(idx.size, dtype=complex)
    diag_pos = np.arange(d) * (d + 1)
    trace_row[np.searchsorted(idx, diag_pos)] = 1.0
    if check_unique:
        rates = np.sort(np.abs(np.linalg.eigvals(a).real))
        if rates[1] <= 1e-6:
            raise DegenerateSteadyStateError(
                f"generator has a degenerate kernel (second slowest rate {rates[1]:.3g}/us)")
    a[0, :] = trace_row
    rhs = np.zeros(idx.size, dtype=complex)
    rhs[0] = 1.0
    try:
        x = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSteadyStateError("bordered steady-state system is singular") from exc
    full = np.zeros(d * d, dtype=complex)
    full[idx] = x
    return _finish(full, d)


def populations(rho: DensityState) -> tuple[float, float, float]:
    """Relative nuclear populations (m_i = +1, 0, -1) within ground m_s = 0."""
    d = rho.dim
    diag = np.real(np.diag(rho.rho))
    p = np.array([diag[index(Manifold.GROUND, 0, mi, d)] for mi in (1, 0, -1)])
    total = p.sum()
    if total <= 1e-12:
        raise ValueError("no ground m_s = 0 population to normalize")
    p = p / total
    return float(p[0]), float(p[1]), float(p[2])


def apply_pi_swap(rho: DensityState) -> DensityState:
    """Ideal RF pi pulse exchanging |0,+1>_g and |0,0>_g."""
    d = rho.dim
    perm = np.arange(d)
    a = index(Manifold.GROUND, 0, 1, d)
    b = index(Manifold.GROUND, 0, 0, d)
    perm[a], perm[b] = b, a
    return DensityState(rho.rho[np.ix_(perm, perm)])


def build_liouvillian(p: SystemParams, f: FieldConfig, r: RateModel,
                      ionization: bool | None = None) -> Liouvillian:
    """Hamiltonian plus jumps for one parameter point."""
    if ionization is None:
        ionization = r.gamma_ion > 0
    h = build_hamiltonian(p, f, ionization=ionization)
    return assemble_liouvillian(h, build_jumps(r, dimension(ionization)))


def prepare_initial_state(p: SystemParams, f: FieldConfig, r: RateModel,
                          relax_time: float = RELAX_TIME_US,
                          ionization: bool | None = None) -> DensityState:
    """Pumped steady state, dark relaxation, then the RF swap."""
    pumped = build_liouvillian(p, f, r, ionization)
    dark = build_liouvillian(p, f, replace(r, w=0.0), ionization)
    rho = steady_state(pumped)
    if relax_time > 0:
        rho = propagate(dark, rho, relax_time)
    return apply_pi_swap(rho)


def dnp_sequence(p: SystemParams, f: FieldConfig, r: RateModel, t_grid: Sequence[float],
                 relax_time: float = RELAX_TIME_US,
                 ionization: bool | None = None) -> PolarizationTrace:
    """Relative ground m_s = 0 nuclear populations versus pumping time after the swap."""
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0:
        raise ValueError("t_grid must not be empty")
    if t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing and >= 0")
    pumped = build_liouvillian(p, f, r, ionization)
    dark = build_liouvillian(p, f, replace(r, w=0.0), ionization)
    rho = steady_state(pumped)
    if relax_time > 0:
        rho = propagate(dark, rho, relax_time)
    rho = apply_pi_swap(rho)
    pops = np.array([populations(s) for s in propagate_many(pumped, rho, t)])
    return PolarizationTrace(t, pops[:, 0], pops[:, 1], pops[:, 2])
