import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from nvdnp.dissipator import RateModel, assemble_liouvillian, build_jumps
from nvdnp.estimation import calibrate_field, fit_exponential
from nvdnp.evolution import DensityState, apply_pi_swap
from nvdnp.hamiltonian import (FieldConfig, SystemParams, build_hamiltonian,
                               ground_electronic_hamiltonian, ground_transition_frequencies,
                               solve_cubic)
from nvdnp.spin import Manifold, basis_of, embed

fields = st.floats(0, 600)
angles = st.floats(0, 90)
small_angles = st.floats(0, 5)
couplings = st.floats(-60, 0)
seeds = st.integers(0, 2**32 - 1)
SETTINGS = settings(max_examples=40, deadline=None)


def hermitian(rng, n=3):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a + a.conj().T


@SETTINGS
@given(seeds)
def test_embeddings_hermitian_and_orthogonal(seed):
    rng = np.random.default_rng(seed)
    g = embed(hermitian(rng), hermitian(rng), Manifold.GROUND)
    e = embed(hermitian(rng), hermitian(rng), Manifold.EXCITED)
    assert np.allclose(g, g.conj().T) and np.allclose(e, e.conj().T)
    assert np.allclose(g @ e, 0)


@SETTINGS
@given(fields, angles, couplings)
def test_hamiltonian_hermitian(b, theta, c):
    h = build_hamiltonian(SystemParams(c_perp=c), FieldConfig(b, theta)).h_total
    assert np.max(np.abs(h - h.conj().T)) <= 1e-10 * max(1.0, np.max(np.abs(h)))


@SETTINGS
@given(fields, couplings)
def test_aligned_excited_block_conserves_projection(b, c):
    h = build_hamiltonian(SystemParams(c_perp=c), FieldConfig(b, 0)).block(Manifold.EXCITED)
    tot = np.array([basis_of(i).m_s + basis_of(i).m_i for i in range(9, 18)])
    assert np.all(h[tot[:, None] != tot[None, :]] == 0)


@SETTINGS
@given(st.floats(0, 899), angles)
def test_cubic_matches_electronic_eigenvalues(b, theta):
    p = SystemParams()
    ev = np.sort(np.linalg.eigvalsh(ground_electronic_hamiltonian(p, FieldConfig(b, theta))))
    roots = solve_cubic(p, b, theta)
    assert np.max(np.abs(ev - roots)) <= 1e-8
    assert abs(roots.sum() - 2 * p.d_g) <= 1e-8 * 2 * p.d_g


@SETTINGS
@given(fields, small_angles, couplings, st.floats(0, 2), st.sampled_from([0.0, 10.0]), seeds)
def test_liouvillian_preserves_trace_and_hermiticity(b, theta, c, w, g, seed):
    r = RateModel(w=w, gamma_ion=g)
    h = build_hamiltonian(SystemParams(c_perp=c), FieldConfig(b, theta), ionization=g > 0)
    L = assemble_liouvillian(h, build_jumps(r))
    assert L.trace_residual() <= 1e-9
    rho = hermitian(np.random.default_rng(seed), L.dim)
    out = L.apply(rho)
    assert np.max(np.abs(out - out.conj().T)) <= 1e-10 * np.max(np.abs(out))


@settings(max_examples=60, deadline=None)
@given(st.floats(100, 600), st.floats(0.2, 5))
def test_calibration_round_trip(b, theta):
    p = SystemParams()
    f = calibrate_field(*ground_transition_frequencies(p, FieldConfig(b, theta)), p)
    assert abs(f.b - b) <= 0.05 and abs(f.theta - theta) <= 0.02


@SETTINGS
@given(st.floats(0.2, 1), st.floats(0.05, 0.8), st.floats(0.3, 8))
def test_exponential_fit_recovers_parameters(p0, a, tau):
    t = np.linspace(0, 5 * tau, 40)
    fit = fit_exponential(t, p0 - a * np.exp(-t / tau))
    assert abs(fit.tau - tau) <= 1e-6 * tau and abs(fit.p0 - p0) <= 1e-8


@SETTINGS
@given(seeds)
def test_pi_swap_involution(seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((21, 3)) + 1j * rng.standard_normal((21, 3))
    rho = v @ v.conj().T
    state = DensityState(rho / np.trace(rho).real)
    assert np.allclose(apply_pi_swap(apply_pi_swap(state)).rho, state.rho, atol=1e-15)
