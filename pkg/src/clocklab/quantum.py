"""Quantum reference families and their Fisher information.

Finite-dimensional families are density matrices rho(phi) with the
symmetric-logarithmic-derivative (SLD) Fisher information; POVMs induce
classical outcome distributions tr(rho * effect). The continuous family
is the Gaussian wave packet whose squared wavefunction is a normal density
with mean phi, measured in position.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

DEGENERACY_TOL = 1e-12   # eigenvalue-pair cutoff for the SLD support block
HERMITICITY_TOL = 1e-10


def projector(ket):
    """Rank-1 density matrix |ket><ket| (normalizes the input)."""
    v = np.asarray(ket, dtype=complex).ravel()
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot project a zero vector")
    v = v / norm
    return np.outer(v, v.conj())


def plus_state(n_spins=1):
    """Product state |+>^n as a ket."""
    if n_spins < 1:
        raise ValueError("n_spins must be >= 1")
    dim = 2**n_spins
    return np.full(dim, 1.0 / math.sqrt(dim), dtype=complex)


def ghz_state(n_spins):
    """(|0...0> + |1...1>)/sqrt(2) as a ket."""
    if n_spins < 1:
        raise ValueError("n_spins must be >= 1")
    ket = np.zeros(2**n_spins, dtype=complex)
    ket[0] = ket[-1] = 1.0 / math.sqrt(2.0)
    return ket


def collective_sz(n_spins):
    """Sum of single-spin sigma_z operators (diagonal in the product basis)."""
    if n_spins < 1:
        raise ValueError("n_spins must be >= 1")
    diag = np.array(
        [n_spins - 2 * bin(i).count("1") for i in range(2**n_spins)],
        dtype=complex,
    )
    return np.diag(diag)


@dataclass(frozen=True)
class QuantumFamily:
    """Finite-dimensional state family rho(phi).

    Parameters
    ----------
    dimension : int
        Hilbert-space dimension.
    state : callable
        phi -> density matrix (complex ndarray).
    state_derivative : callable, optional
        phi -> d rho / d phi. When absent and no generator is set, the
        derivative falls back to central differences.
    generator : ndarray, optional
        Hamiltonian H when the family is exp(-i phi H) rho0 exp(i phi H);
        then the derivative is the analytic commutator -i[H, rho].
    initial_state : ndarray, optional
        rho(0), kept for the energy-variance shortcut.
    """

    dimension: int
    state: Callable
    state_derivative: Optional[Callable] = None
    generator: Optional[np.ndarray] = None
    initial_state: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GaussianWavefunctionFamily:
    """Pure Gaussian wave packets on the line.

    The wavefunction is real with |psi_phi(x)|^2 = N(phi, 1/fisher_info),
    so position measurement reproduces the full quantum Fisher
    information.
    """

    fisher_info: float

    def __post_init__(self):
        if not self.fisher_info > 0:
            raise ValueError("fisher_info must be > 0")

    def wavefunction(self, x, phi):
        f0 = self.fisher_info
        x = np.asarray(x, dtype=float)
        return (f0 / (2.0 * math.pi)) ** 0.25 * np.exp(-f0 * (x - phi) ** 2 / 4.0)


@dataclass(frozen=True)
class PositionMeasurement:
    """Marker for the position POVM of the continuous family."""


@dataclass(frozen=True)
class Povm:
    """Finite POVM: positive effects that decompose the identity."""

    effects: tuple
    labels: Optional[tuple] = None

    def __post_init__(self):
        effects = tuple(np.asarray(e, dtype=complex) for e in self.effects)
        if not effects:
            raise ValueError("POVM needs at least one effect")
        dim = effects[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for e in effects:
            if e.shape != (dim, dim):
                raise ValueError("effects must be square and equally sized")
            if np.linalg.norm(e - e.conj().T, 2) > HERMITICITY_TOL:
                raise ValueError("effects must be Hermitian")
            if np.linalg.eigvalsh(e).min() < -1e-12:
                raise ValueError("effects must be positive semidefinite")
            total += e
        if np.linalg.norm(total - np.eye(dim), 2) > 1e-10:
            raise ValueError("effects must sum to the identity")
        object.__setattr__(self, "effects", effects)
        labels = self.labels
        if labels is None:
            labels = tuple(range(len(effects)))
        if len(labels) != len(effects):
            raise ValueError("labels must match effects")
        object.__setattr__(self, "labels", tuple(labels))


def hamiltonian_family(hamiltonian, initial):
    """Unitary family exp(-i phi H) rho0 exp(i phi H).

    Parameters
    ----------
    hamiltonian : ndarray
        Hermitian generator H.
    initial : ndarray
        Initial ket (1-D) or density matrix (2-D).
    """
    H = np.asarray(hamiltonian, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("hamiltonian must be square")
    if np.linalg.norm(H - H.conj().T, 2) > HERMITICITY_TOL:
        raise ValueError("hamiltonian must be Hermitian")
    init = np.asarray(initial, dtype=complex)
    rho0 = projector(init) if init.ndim == 1 else init.copy()
    _validate_state(rho0)
    energies, basis = np.linalg.eigh(H)
    rho0_e = basis.conj().T @ rho0 @ basis

    def state(phi):
        phases = np.exp(-1j * phi * energies)
        rot = phases[:, None] * rho0_e * phases.conj()[None, :]
        return basis @ rot @ basis.conj().T

    def state_derivative(phi):
        rho = state(phi)
        return -1j * (H @ rho - rho @ H)

    return QuantumFamily(
        dimension=H.shape[0],
        state=state,
        state_derivative=state_derivative,
        generator=H,
        initial_state=rho0,
    )


def ramsey_excited_probability(interrogation_time, omega0, phi):
    """Excited-state probability cos^2(T omega0 phi / 2).

    Phase convention: phi = 0 returns the qubit to the measurement basis
    deterministically (probability 1).
    """
    phi = np.asarray(phi, dtype=float)
    return np.cos(0.5 * interrogation_time * omega0 * phi) ** 2


def ramsey_family(interrogation_time, omega0):
    """Qubit Ramsey family with its excited/ground projective measurement.

    The family is exp(-i T omega0 phi sigma_z / 2) acting on |+>, measured
    in the {|+>, |->} basis; labels are 1.0 (excited) and 0.0 (ground).

    Returns
    -------
    (QuantumFamily, Povm)
    """
    if not interrogation_time > 0 or not omega0 > 0:
        raise ValueError("interrogation_time and omega0 must be > 0")
    generator = 0.5 * interrogation_time * omega0 * SIGMA_Z
    plus = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
    minus = np.array([1.0, -1.0], dtype=complex) / math.sqrt(2.0)
    family = hamiltonian_family(generator, plus)
    povm = Povm(effects=(projector(plus), projector(minus)), labels=(1.0, 0.0))
    return family, povm


def _validate_state(rho):
    if np.linalg.norm(rho - rho.conj().T, 2) > HERMITICITY_TOL:
        raise ValueError("state must be Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-10:
        raise ValueError("state must have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-12:
        raise ValueError("state must be positive semidefinite")


def _derivative(family, phi):
    if family.state_derivative is not None:
        return np.asarray(family.state_derivative(phi), dtype=complex)
    if family.generator is not None:
        rho = family.state(phi)
        H = family.generator
        return -1j * (H @ rho - rho @ H)
    h = max(1e-6, 1e-6 * abs(phi))
    return (
        np.asarray(family.state(phi + h), dtype=complex)
        - np.asarray(family.state(phi - h), dtype=complex)
    ) / (2.0 * h)


def _sld(family, phi):
    """State, eigen-decomposition and SLD matrix in the eigenbasis."""
    rho = np.asarray(family.state(phi), dtype=complex)
    _validate_state(rho)
    drho = _derivative(family, phi)
    w, basis = np.linalg.eigh(rho)
    r = basis.conj().T @ drho @ basis
    denom = w[:, None] + w[None, :]
    support = denom > DEGENERACY_TOL
    bad = ~support & (np.abs(r) > 1e-8 * max(1.0, np.linalg.norm(r)))
    if np.any(bad):
        raise RuntimeError(
            f"SLD singular at phi={phi}: eigenvalue pair below "
            f"{DEGENERACY_TOL} carries a nonzero state derivative"
        )
    sld = np.zeros_like(r)
    sld[support] = 2.0 * r[support] / denom[support]
    return rho, w, basis, sld


def qfi(family, phi=0.0):
    """Quantum (SLD) Fisher information of a family at phi.

    The SLD is solved in the eigenbasis of rho; matrix elements on
    eigenvalue pairs below the degeneracy tolerance are set to zero (the
    kernel block is arbitrary and does not enter the information).
    """
    if isinstance(family, GaussianWavefunctionFamily):
        # Pure-state information 4(<dpsi|dpsi> - |<psi|dpsi>|^2) of the
        # Gaussian packet: dpsi = (f0/2)(x - phi) psi, so the first term is
        # (f0^2/4) Var(x) = f0/4 and the overlap term vanishes.
        return family.fisher_info
    _, w, _, sld = _sld(family, phi)
    return float(np.sum(w[:, None] * np.abs(sld) ** 2).real)


def qfi_hamiltonian(family):
    """Energy-variance form 4(tr(H^2 P) - tr(H P)^2) for pure unitary families."""
    if family.generator is None or family.initial_state is None:
        raise ValueError("family must carry a generator and an initial state")
    rho0 = family.initial_state
    purity = float(np.trace(rho0 @ rho0).real)
    if abs(purity - 1.0) > 1e-10:
        raise ValueError("energy-variance form requires a pure initial state")
    H = family.generator
    mean = float(np.trace(H @ rho0).real)
    second = float(np.trace(H @ H @ rho0).real)
    return 4.0 * (second - mean**2)


def qfi_scaled(family, tau, phi=0.0):
    """Fisher information of the reparameterized family rho(tau * phi).

    Computed by building the scaled family and evaluating its information,
    which equals tau^2 F(tau phi).
    """
    if isinstance(family, GaussianWavefunctionFamily):
        # scaled packet is the location family with mean tau*phi
        return tau**2 * family.fisher_info
    scaled = QuantumFamily(
        dimension=family.dimension,
        state=lambda p: family.state(tau * p),
        state_derivative=(
            None
            if family.state_derivative is None
            else lambda p: tau * np.asarray(family.state_derivative(tau * p))
        ),
        generator=None if family.generator is None else tau * family.generator,
        initial_state=family.initial_state,
    )
    return qfi(scaled, phi)


def classical_fisher_of_povm(family, povm, phi=0.0):
    """Fisher information of the outcome distribution tr(rho(phi) effect)."""
    if isinstance(family, GaussianWavefunctionFamily):
        if not isinstance(povm, PositionMeasurement):
            raise ValueError("continuous family supports position measurement")
        # location family N(phi, 1/f0)
        return family.fisher_info
    rho = np.asarray(family.state(phi), dtype=complex)
    _validate_state(rho)
    drho = _derivative(family, phi)
    total = 0.0
    for effect in povm.effects:
        p = float(np.trace(rho @ effect).real)
        if p <= 1e-14:
            continue
        dp = float(np.trace(drho @ effect).real)
        total += dp * dp / p
    return total


def sld_spectral_povm(family, phi=0.0):
    """Projective measurement onto the SLD eigenbasis (saturates the QFI)."""
    _, _, basis, sld = _sld(family, phi)
    sld_full = basis @ sld @ basis.conj().T
    values, vectors = np.linalg.eigh(sld_full)
    effects = tuple(
        np.outer(vectors[:, i], vectors[:, i].conj()) for i in range(len(values))
    )
    return Povm(effects=effects, labels=tuple(float(v) for v in values))


def sample_outcome(family, povm, phi, rng, size=None):
    """Draw measurement outcomes from tr(rho(phi) effect).

    Finite families sample the categorical distribution over effect
    labels; the continuous family with position measurement samples
    Normal(phi, 1/fisher_info). Probabilities failing to sum to 1 within
    1e-10 raise a model error.
    """
    if isinstance(family, GaussianWavefunctionFamily):
        if not isinstance(povm, PositionMeasurement):
            raise ValueError("continuous family supports position measurement")
        sd = 1.0 / math.sqrt(family.fisher_info)
        out = rng.normal(phi, sd, size)
        return float(out) if size is None else out
    rho = np.asarray(family.state(phi), dtype=complex)
    _validate_state(rho)
    probs = np.array(
        [float(np.trace(rho @ e).real) for e in povm.effects], dtype=float
    )
    probs[np.abs(probs) < 1e-14] = np.maximum(probs[np.abs(probs) < 1e-14], 0.0)
    if probs.min() < -1e-12:
        raise RuntimeError(f"negative outcome probability {probs.min()!r}")
    probs = np.maximum(probs, 0.0)
    if abs(probs.sum() - 1.0) > 1e-10:
        raise RuntimeError(
            f"outcome probabilities sum to {probs.sum()!r}, not 1"
        )
    idx = rng.choice(len(probs), size=size, p=probs / probs.sum())
    labels = np.asarray(povm.labels, dtype=float)
    out = labels[idx]
    return float(out) if size is None else out
