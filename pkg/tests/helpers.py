"""Shared test utilities: random POVMs and a curved-Fisher test family."""

import numpy as np

from clocklab import estimation, quantum


def haar_random_unitary(dim, rng):
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def haar_projective_povm(dim, rng):
    """Rank-one projective measurement onto a Haar-random basis."""
    u = haar_random_unitary(dim, rng)
    return quantum.Povm(tuple(np.outer(u[:, i], u[:, i].conj()) for i in range(dim)))


def random_psd_povm(dim, n_effects, rng):
    """Generic informationally-unstructured POVM: random PSD parts A_i
    normalized to completeness via S^(-1/2) A_i S^(-1/2)."""
    parts = []
    for _ in range(n_effects):
        g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        parts.append(g @ g.conj().T)
    total = np.sum(parts, axis=0)
    w, v = np.linalg.eigh(total)
    inv_sqrt = v @ np.diag(1.0 / np.sqrt(w)) @ v.conj().T
    effects = tuple(inv_sqrt @ a @ inv_sqrt for a in parts)
    return quantum.Povm(effects)


def curved_mean_map(phis):
    """Mean map with d(mean)/dphi = sqrt(1 + phi^2)."""
    phis = np.asarray(phis, dtype=float)
    return 0.5 * (phis * np.sqrt(1.0 + phis**2) + np.arcsinh(phis))


def curved_gaussian_family(f0):
    """Gaussian family whose Fisher information is f0 * (1 + phi^2)."""
    return estimation.gaussian_mean_map_family(curved_mean_map, 1.0 / f0)


def mixed_qubit_family(bloch_x):
    """Qubit with Bloch vector (bloch_x, 0, 0) rotating about z; QFI = bloch_x^2."""
    rho0 = 0.5 * (quantum.IDENTITY2 + bloch_x * quantum.SIGMA_X)
    return quantum.hamiltonian_family(0.5 * quantum.SIGMA_Z, rho0)


def mixed_ghz_family(n_spins, weight):
    """GHZ state mixed with white noise, evolving under the collective spin."""
    dim = 2**n_spins
    ghz = quantum.ghz_state(n_spins)
    rho0 = weight * quantum.projector(ghz) + (1.0 - weight) * np.eye(dim) / dim
    return quantum.hamiltonian_family(quantum.collective_sz(n_spins), rho0)
