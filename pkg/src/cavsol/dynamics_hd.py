"""Two- and three-dimensional dynamics in the dressed recoil basis.

Component ordering for a d-dimensional scheme (d + 3 components):

    0        |down, p>
    1        symmetric up state  (sum over all 2^d recoil states)
    2..d+1   single-axis antisymmetric states A_1 .. A_d
    d+2      decoupled remainder (A_3 = xz in 2D, one inert representative in 3D)

Bare up states are ordered by their recoil signs ``itertools.product((+1, -1),
repeat=d)``, i.e. ++, +-, -+, -- in 2D.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from cavsol import kernels
from cavsol.core import UNITS, check_step, max_frequency
from cavsol.dynamics1d import Trajectory

DOWN, SYM = 0, 1


def _signs(d):
    return np.array(list(itertools.product((1.0, -1.0), repeat=d)))


def bare_transform(d):
    """Orthonormal (2^d x 2^d) map from bare up states to the dressed up states.

    Rows: symmetric, the d single-axis antisymmetric combinations, then the
    remaining parity combinations (pairs, triple).
    """
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    s = _signs(d)
    rows = [np.ones(2**d)]
    rows += [s[:, i] for i in range(d)]
    for order in range(2, d + 1):
        for combo in itertools.combinations(range(d), order):
            rows.append(np.prod(s[:, combo], axis=1))
    return np.array(rows) / math.sqrt(2**d)


def dressed_basis_transform(bare):
    """Map 2^d bare up amplitudes (last axis) to {sym, A_1, .., A_d, rest}.

    The 2D matrix is symmetric and orthogonal, so applying it twice gives the
    identity.
    """
    bare = np.asarray(bare)
    n = bare.shape[-1]
    d = {4: 2, 8: 3}.get(n)
    if d is None:
        raise ValueError(f"expected 4 or 8 bare components, got {n}")
    return bare @ bare_transform(d).T


def dressed_to_bare(psi):
    """Bare up amplitudes (n, 2^d) from dressed amplitudes (n, d + 3).

    In 3D only one of the four uncoupled combinations is carried; it is
    mapped onto the first of them and the others are taken as empty.
    """
    psi = np.asarray(psi)
    d = psi.shape[-1] - 3
    T = bare_transform(d)
    up = np.zeros(psi.shape[:-1] + (2**d,), dtype=np.complex128)
    up[..., : d + 2] = psi[..., 1:]
    return up @ T


@dataclass(frozen=True)
class CouplingMatrixHD:
    dimension: int
    matrix: np.ndarray
    chiN: float

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)


def _offdiag_pattern(d, full_doppler=False):
    """(row, col, momentum axis) triples of the Doppler couplings (upper triangle)."""
    pat = [(SYM, 2 + i, i) for i in range(d)]
    if full_doppler:
        if d != 2:
            raise ValueError("full_doppler is only available in 2D")
        last = d + 2
        pat += [(2, last, 1), (3, last, 0)]
    return pat


def build_coupling_matrix(p, chiN, dimension=None, full_doppler=False):
    """The (d+3)x(d+3) dressed-basis energy matrix at momentum ``p``.

    Excludes the common kinetic term |p|^2/2M. ``full_doppler`` adds the
    A_1-A_3 and A_2-A_3 couplings that the exact 2D transform also produces;
    they only affect energies at fourth order in p.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    d = p.size if dimension is None else dimension
    if d not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3 (got {d})")
    if p.size != d:
        raise ValueError(f"momentum has {p.size} components; dimension {d} needs {d}")
    m = d + 3
    H = np.zeros((m, m))
    H[DOWN, SYM] = H[SYM, DOWN] = 0.5 * chiN
    for r, c, ax in _offdiag_pattern(d, full_doppler):
        H[r, c] = H[c, r] = UNITS.k * p[ax] / UNITS.mass
    return CouplingMatrixHD(d, H, float(chiN))


def ground_energy(p, chiN):
    """Closed-form lowest eigenvalue -sqrt((chiN/2)^2 + sum (k p_i/M)^2)."""
    p = np.asarray(p, dtype=float)
    return -np.sqrt((0.5 * chiN) ** 2 + np.sum((UNITS.k * p / UNITS.mass) ** 2, axis=-1))


def ground_band(p, chiN):
    """Ground-band energy including the common dispersion |p|^2 / 2M."""
    p = np.asarray(p, dtype=float)
    return ground_energy(p, chiN) + np.sum(p**2, axis=-1) / (2.0 * UNITS.mass * UNITS.hbar)


def initial_state_hd(ensemble):
    """(|down> + |sym>)/sqrt(2) at every point, as prepared by a pi/2 pulse."""
    d = ensemble.dimension
    psi = np.zeros((ensemble.size, d + 3), dtype=np.complex128)
    psi[:, DOWN] = psi[:, SYM] = 1.0 / math.sqrt(2.0)
    return psi


def _hamiltonian_hd(ensemble, full_doppler=False):
    pts = ensemble.points
    n, d = pts.shape
    m = d + 3
    common = np.sum(pts**2, axis=1) / (2.0 * UNITS.mass * UNITS.hbar)
    cols = [common] * m
    rows = list(range(m))
    cs = list(range(m))
    for r, c, ax in _offdiag_pattern(d, full_doppler):
        v = UNITS.k * pts[:, ax] / UNITS.mass
        cols += [v, v]
        rows += [r, c]
        cs += [c, r]
    return np.stack(cols, axis=1), np.array(rows), np.array(cs)


def derivative_hd(psi, ensemble, chiN, full_doppler=False):
    """d psi/dt of the dressed-basis mean-field equations."""
    hv, rows, cols = _hamiltonian_hd(ensemble, full_doppler)
    return kernels.derivative(psi, hv, rows, cols, ensemble.weights, chiN=chiN,
                              a=DOWN, b=SYM)


def evolve_hd(psi0, ensemble, chiN, t_final, dt, *, sample_every=None, n_samples=None,
              full_doppler=False, backend=None, t0=0.0):
    """Integrate the dressed-basis equations with the shared RK4 kernel.

    The down-sym coupling is chiN * C with C = sum_n w_n conj(psi_sym) psi_down;
    Doppler couplings and the common dispersion are fixed per point.
    """
    psi0 = np.asarray(psi0, dtype=np.complex128)
    d = ensemble.dimension
    if psi0.shape != (ensemble.size, d + 3):
        raise ValueError(f"state must have shape {(ensemble.size, d + 3)}, got {psi0.shape}")
    n_steps = max(1, int(round(t_final / dt))) if t_final > 0 else 0
    h = t_final / n_steps if n_steps else dt
    ham = _hamiltonian_hd(ensemble, full_doppler)
    diag = ham[0][:, : d + 3]
    check_step(h, max_frequency(diag, chiN, 0.0, d * np.max(np.abs(ensemble.points))))
    if sample_every is None:
        sample_every = max(1, n_steps // (n_samples or 100)) if n_steps else 1
    steps, samples = kernels.integrate(psi0, ham, ensemble.weights, chiN=chiN,
                                       a=DOWN, b=SYM, n_steps=n_steps, dt=h,
                                       sample_every=sample_every, backend=backend)
    return Trajectory(t0 + steps * h, samples)


def magnetization_hd(psi, weights):
    """Weighted population difference (total up) - (down)."""
    pop = np.abs(psi) ** 2
    return np.sum(weights * (pop[..., 1:].sum(axis=-1) - pop[..., 0]), axis=-1) / 2.0


def mean_field_energy_hd(psi, ensemble, chiN, full_doppler=False):
    hv, rows, cols = _hamiltonian_hd(ensemble, full_doppler)
    single = np.sum(ensemble.weights[:, None] * hv * np.real(
        np.conj(psi[..., rows]) * psi[..., cols]), axis=(-2, -1))
    c = np.sum(ensemble.weights * np.conj(psi[..., SYM]) * psi[..., DOWN], axis=-1)
    return single + chiN * np.abs(c) ** 2


@dataclass(frozen=True)
class NaiveDispersion:
    """Quadratic form of the single-recoil 2D scheme about p = 0.

    ``coefficients`` C satisfies E(p) ~ E(0) + p^T C p; the p_x p_z
    coefficient of the expansion is ``2 C[0, 1]``.
    """

    chiN: float
    k_vec: tuple
    coefficients: np.ndarray

    @property
    def cross_coefficient(self):
        return 2.0 * self.coefficients[0, 1]

    @property
    def hessian_eigenvalues(self):
        return np.linalg.eigvalsh(2.0 * self.coefficients)


def naive_2d_dispersion(p, chiN, k_vec=(1.0, 1.0)):
    """Energy of the two-state 2D scheme with momentum transfer k_vec.

    Follows the branch occupied by the equal superposition of the two recoil
    states: the lower one for chiN < 0, the upper one for chiN > 0,

    E = sgn(chiN)/2 sqrt(chiN^2 + ((k_x p_x + k_z p_z)/M)^2) + |p|^2/2M.

    chiN = 0 is taken as the lower branch.
    """
    p = np.asarray(p, dtype=float)
    kp = p @ np.asarray(k_vec, dtype=float) / UNITS.mass
    sign = 1.0 if chiN > 0 else -1.0
    return sign * 0.5 * np.sqrt(chiN**2 + kp**2) + np.sum(p**2, axis=-1) / (2.0 * UNITS.mass * UNITS.hbar)


def naive_quadratic_form(chiN, k_vec=(1.0, 1.0)):
    """Second-order expansion of :func:`naive_2d_dispersion` (chiN != 0)."""
    if chiN == 0:
        raise ValueError("the expansion requires chiN != 0")
    K = np.asarray(k_vec, dtype=float)
    C = (0.5 / (UNITS.mass * UNITS.hbar)) * np.eye(2) + np.outer(K, K) / (
        4.0 * UNITS.mass**2 * chiN)
    return NaiveDispersion(float(chiN), tuple(K), C)
