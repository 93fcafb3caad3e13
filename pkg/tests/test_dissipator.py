import numpy as np
import pytest
import scipy.sparse as sp

from nvdnp.dissipator import (RateModel, assemble_liouvillian, build_jumps,
                              coherent_superoperator, dissipative_superoperator, jump_operator,
                              unvec, vec)
from nvdnp.hamiltonian import FieldConfig, SystemParams, build_hamiltonian
from nvdnp.spin import basis_of

P = SystemParams()
F = FieldConfig(348, 1.5)


def random_hermitian(d, rng):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (a + a.conj().T) / 2


def test_rate_defaults():
    r = RateModel()
    assert (r.gamma_rad, r.gamma_isc0, r.gamma_iscpm, r.gamma_s0, r.gamma_spm) == (63, 12, 80, 3.3, 2.4)
    assert (r.epsilon, r.w, r.gamma_ion) == (0.01, 1, 0)
    with pytest.raises(ValueError):
        RateModel(w=-1)
    with pytest.raises(ValueError):
        RateModel(recombination="other")


def test_jump_counts():
    assert len(build_jumps(RateModel())) == 72
    js = build_jumps(RateModel(epsilon=0, w=0))
    assert len(js) == 27
    assert all(j.source.manifold.name in ("EXCITED", "SINGLET") for j in js)
    assert len(build_jumps(RateModel(gamma_ion=10))) == 72 + 3 * (3 + 3)


def test_jumps_conserve_nuclear_spin_and_leave_manifold():
    js = build_jumps(RateModel(gamma_ion=5))
    for j in js:
        a, b = j.source, j.target
        assert a.m_i == b.m_i
        assert a.manifold != b.manifold


def test_ms0_recombination_option():
    js = build_jumps(RateModel(gamma_ion=5, recombination="ms0"))
    back = [j for j in js if j.source.manifold.name == "NV0"]
    assert len(back) == 3 and all(j.target.m_s == 0 for j in back)


def test_vectorization_convention():
    rng = np.random.default_rng(0)
    a, rho, b = (rng.standard_normal((4, 4)) for _ in range(3))
    assert np.allclose(np.kron(b.T, a) @ vec(rho), vec(a @ rho @ b))
    assert np.allclose(unvec(vec(rho), 4), rho)


def test_dissipator_matches_kron_formula():
    js = build_jumps(RateModel(gamma_ion=3))
    d = js.dim
    eye = sp.identity(d, format="csr")
    ref = sp.csr_array((d * d, d * d), dtype=complex)
    for j in js:
        l = jump_operator(j, d)
        ld = (l.conj().T @ l)
        ref = ref + sp.kron(l.conj(), l) - 0.5 * (sp.kron(eye, ld) + sp.kron(ld.T, eye))
    diff = (dissipative_superoperator(js) - ref).toarray()
    assert np.max(np.abs(diff)) < 1e-12


def test_trace_preservation():
    L = assemble_liouvillian(build_hamiltonian(P, F), build_jumps(RateModel()))
    assert L.trace_residual() <= 1e-9


def test_pure_commutator_limit():
    rng = np.random.default_rng(1)
    h = build_hamiltonian(P, F)
    L = assemble_liouvillian(h, build_jumps(RateModel(epsilon=0, w=0, gamma_rad=0, gamma_isc0=0,
                                                      gamma_iscpm=0, gamma_s0=0, gamma_spm=0)))
    rho = random_hermitian(21, rng)
    expected = -2j * np.pi * (h.h_total @ rho - rho @ h.h_total)
    got = L.apply(rho)
    assert np.linalg.norm(got - expected) <= 1e-10 * np.linalg.norm(expected)


def test_hermiticity_preserved():
    rng = np.random.default_rng(2)
    L = assemble_liouvillian(build_hamiltonian(P, FieldConfig(200, 40)), build_jumps(RateModel(w=0.3)))
    out = L.apply(random_hermitian(21, rng))
    assert np.max(np.abs(out - out.conj().T)) < 1e-10 * np.max(np.abs(out))


def test_linearity_of_assembly():
    h, js = build_hamiltonian(P, F), build_jumps(RateModel())
    total = assemble_liouvillian(h, js).matrix
    parts = coherent_superoperator(h) + dissipative_superoperator(js)
    assert abs(total - parts).max() == 0


def test_unique_stationary_eigenvalue():
    L = assemble_liouvillian(build_hamiltonian(P, F), build_jumps(RateModel()))
    ev = np.linalg.eigvals(L.dense)
    assert np.all(ev.real <= 1e-9)
    assert np.sum(np.abs(ev.real) <= 1e-9) == 1


def test_ionization_space_reduces_to_baseline():
    r = RateModel()
    small = assemble_liouvillian(build_hamiltonian(P, F), build_jumps(r, 21)).dense
    big = assemble_liouvillian(build_hamiltonian(P, F, ionization=True), build_jumps(r, 24)).dense
    keep = [a + 24 * b for b in range(21) for a in range(21)]
    assert np.max(np.abs(big[np.ix_(keep, keep)] - small)) <= 1e-12


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        assemble_liouvillian(build_hamiltonian(P, F), build_jumps(RateModel(gamma_ion=1)))


def test_blocks_partition_and_decouple():
    L = assemble_liouvillian(build_hamiltonian(P, F, ionization=True),
                             build_jumps(RateModel(gamma_ion=4)))
    label = np.full(L.dim ** 2, -1)
    for k, idx in enumerate(L.blocks):
        assert np.all(label[idx] == -1)
        label[idx] = k
    assert np.all(label >= 0)
    coo = L.matrix.tocoo()
    assert np.all(label[coo.row] == label[coo.col])
