"""One-dimensional two-branch mean-field dynamics and its analytics.

Each ensemble point ``p_n`` carries a spinor over the branches
``|p - hbar k>`` (down) and ``|p + hbar k>`` (up), written in the frame moving
with the mean momentum and rotating with the Zeeman splitting. The equations
of motion are

    i d psi_down/dt = w_down psi_down + (chiN C + Omega/2) psi_up
    i d psi_up/dt   = w_up psi_up     + (chiN C* + Omega/2) psi_down

with ``C = sum_m w_m conj(psi_up(p_m)) psi_down(p_m)`` an ensemble average and
``w_{down,up}(p) = p^2/2M -/+ k p / M``.
"""

import math
from dataclasses import dataclass

import numpy as np

from cavsol import kernels
from cavsol.core import E_R, TAU, UNITS, check_step, max_frequency

DOWN, UP = 0, 1


@dataclass
class SpinorField1D:
    psi_down: np.ndarray
    psi_up: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.psi_down = np.asarray(self.psi_down, dtype=np.complex128)
        self.psi_up = np.asarray(self.psi_up, dtype=np.complex128)
        if self.psi_down.shape != self.psi_up.shape:
            raise ValueError("branch arrays must have equal shapes")

    @classmethod
    def from_array(cls, arr, time=0.0):
        return cls(arr[:, DOWN].copy(), arr[:, UP].copy(), time)

    def as_array(self):
        return np.stack([self.psi_down, self.psi_up], axis=1)

    @property
    def size(self):
        return self.psi_down.size

    def norms(self):
        return np.abs(self.psi_down) ** 2 + np.abs(self.psi_up) ** 2


@dataclass
class Trajectory:
    """Sampled states ``psi`` with shape (n_times, n_points, n_components)."""

    times: np.ndarray
    psi: np.ndarray

    def __len__(self):
        return self.times.size

    def field(self, i):
        return SpinorField1D.from_array(self.psi[i], float(self.times[i]))

    @property
    def final(self):
        return self.psi[-1]


def initial_state(ensemble, theta=math.pi / 2, phi=0.0):
    """Bragg-pulse state cos(theta/2)|down> + e^{i phi} sin(theta/2)|up>."""
    n = ensemble.size
    down = np.full(n, math.cos(theta / 2), dtype=np.complex128)
    up = np.full(n, math.sin(theta / 2) * np.exp(1j * phi), dtype=np.complex128)
    return SpinorField1D(down, up)


def branch_frequencies(points, chiN=0.0, theta_frame=None, k_vec=None):
    """Single-particle frequencies of the down and up branches per point.

    ``k_vec`` is the momentum transfer between the branches (2k along the
    axis in 1D). A ``theta_frame`` adds the rotating-frame term
    -chiN cos(theta) S_Z that keeps the collective field stationary.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if k_vec is None:
        k_vec = np.zeros(points.shape[1])
        k_vec[0] = 2.0 * UNITS.k
    k_vec = np.asarray(k_vec, dtype=float)
    common = np.sum(points**2, axis=1) / (2.0 * UNITS.mass * UNITS.hbar)
    half_split = points @ k_vec / (2.0 * UNITS.mass)
    if theta_frame is not None:
        half_split = half_split - 0.5 * chiN * math.cos(theta_frame)
    return common - half_split, common + half_split


def _hamiltonian(ensemble, chiN, theta_frame, k_vec=None):
    wd, wu = branch_frequencies(ensemble.points, chiN, theta_frame, k_vec)
    hvals = np.stack([wd, wu], axis=1)
    return hvals, np.array([0, 1]), np.array([0, 1])


def _check_lengths(field, ensemble):
    if field.size != ensemble.size:
        raise ValueError(f"field has {field.size} points but the ensemble has "
                         f"{ensemble.size}")


def derivative(field, ensemble, chiN, theta_frame=None, omega=0.0):
    """Right-hand side ``i dpsi/dt`` of the mean-field equations.

    Returns a :class:`SpinorField1D` holding ``(i dpsi_down/dt, i dpsi_up/dt)``.
    """
    _check_lengths(field, ensemble)
    hvals, rows, cols = _hamiltonian(ensemble, chiN, theta_frame)
    d = kernels.derivative(field.as_array(), hvals, rows, cols,
                           ensemble.weights, chiN, omega)
    return SpinorField1D.from_array(1j * d, field.time)


def drive_flatband_derivative(field, ensemble, Omega):
    """Same as :func:`derivative` with the exchange replaced by a fixed drive
    ``Omega/2`` coupling down and up (no self-consistency)."""
    return derivative(field, ensemble, 0.0, None, omega=Omega)


def pi_pulse(psi, phase=0.0, a=DOWN, b=UP):
    """Instantaneous pi rotation about the equatorial axis (cos phase, sin phase, 0).

    Works on arrays of shape (n, m) acting on components ``a`` (down) and
    ``b`` (up); the other components are untouched.
    """
    out = np.array(psi, dtype=np.complex128, copy=True)
    d, u = psi[:, a], psi[:, b]
    out[:, b] = -1j * np.exp(1j * phase) * d
    out[:, a] = -1j * np.exp(-1j * phase) * u
    return out


def evolve(field, ensemble, chiN, t_final, dt, *, omega=0.0, theta_frame=None,
           sample_every=None, n_samples=None, echo_times=(), echo_phase=0.0,
           k_vec=None, backend=None):
    """Integrate the mean-field equations with fixed-step RK4.

    Parameters
    ----------
    field : SpinorField1D
        Initial state.
    ensemble : MomentumEnsemble
    chiN : float
        Exchange strength chi N (natural units).
    t_final, dt : float
        Duration and step in natural time units. The step is adjusted down so
        that ``t_final`` is hit exactly.
    omega : float
        Fixed transverse drive (the non-interacting reference arm).
    theta_frame : float, optional
        Integrate in the frame rotating at -chiN cos(theta) about Z.
    sample_every, n_samples : int, optional
        Sampling stride in steps, or the approximate number of samples.
    echo_times : sequence of float
        Times of instantaneous pi pulses about the axis set by ``echo_phase``.
    k_vec : array_like, optional
        Branch momentum transfer; defaults to 2k along the first axis.

    Returns
    -------
    Trajectory
    """
    _check_lengths(field, ensemble)
    n_steps = max(1, int(round(t_final / dt))) if t_final > 0 else 0
    h = t_final / n_steps if n_steps else dt
    ham = _hamiltonian(ensemble, chiN, theta_frame, k_vec)
    check_step(h, max_frequency(ham[0], chiN, omega))
    if sample_every is None:
        sample_every = max(1, n_steps // (n_samples or 100)) if n_steps else 1
    pulses = {}
    for t in echo_times:
        s = int(round(t / h))
        pulses[s] = lambda psi: pi_pulse(psi, echo_phase)
    steps, samples = kernels.integrate(
        field.as_array(), ham, ensemble.weights, chiN=chiN, omega=omega,
        n_steps=n_steps, dt=h, sample_every=sample_every, pulses=pulses,
        backend=backend)
    return Trajectory(field.time + steps * h, samples)


def collective_bilinear(psi, weights, a=DOWN, b=UP):
    """C = sum_n w_n conj(psi_b) psi_a; accepts (n, m) or (t, n, m) arrays."""
    return np.sum(weights * np.conj(psi[..., b]) * psi[..., a], axis=-1)


def magnetization(psi, weights):
    """Weighted S_Z per atom, sum_n w_n (|psi_up|^2 - |psi_down|^2)/2."""
    pops = np.abs(psi) ** 2
    up = pops[..., UP:].sum(axis=-1)
    return 0.5 * np.sum(weights * (up - pops[..., DOWN]), axis=-1)


def point_norms(psi):
    return np.sum(np.abs(psi) ** 2, axis=-1)


def mean_field_energy(psi, ensemble, chiN, theta_frame=None, k_vec=None, omega=0.0):
    """sum_n w_n [w_down |psi_down|^2 + w_up |psi_up|^2] + chiN |C|^2 + omega Re C."""
    wd, wu = branch_frequencies(ensemble.points, chiN, theta_frame, k_vec)
    w = ensemble.weights
    kin = np.sum(w * (wd * np.abs(psi[..., DOWN]) ** 2
                      + wu * np.abs(psi[..., UP]) ** 2), axis=-1)
    c = collective_bilinear(psi, w)
    return kin + chiN * np.abs(c) ** 2 + omega * c.real


def closed_form_solution(p, chiN, t_d):
    """Locked-regime amplitudes after time ``t_d`` from the equal superposition.

    The exchange is replaced by the static transverse field chiN/2, for which
    the two-level problem is solved exactly.
    """
    p = np.asarray(p, dtype=float)
    kp = 2.0 * UNITS.k * p / UNITS.mass
    rabi = np.sqrt(kp**2 + chiN**2)
    phase = np.exp(-1j * p**2 * t_d / (2.0 * UNITS.mass * UNITS.hbar))
    c = np.cos(0.5 * t_d * rabi)
    s = np.sin(0.5 * t_d * rabi)
    # sin(x)/x form keeps rabi -> 0 finite
    sinc = np.where(rabi > 0, s / np.where(rabi > 0, rabi, 1.0), 0.5 * t_d)
    down = phase * (c + 1j * (kp - chiN) * sinc) / math.sqrt(2.0)
    up = phase * (c - 1j * (kp + chiN) * sinc) / math.sqrt(2.0)
    return down, up


@dataclass
class DispersionCurve:
    p_values: np.ndarray
    energies: np.ndarray
    effective_mass: float
    c_s: float
    curvature: np.ndarray
    fitted_c2: float
    fitted_mass: float
    linear_coefficient: float


def branch_energy(p, chiN, theta=math.pi / 2):
    """Energy of the dressed branch occupied by the initial Bloch vector.

    E_p = sgn(chiN)/2 sqrt((chiN sin th)^2 + (2kp/M - chiN cos th)^2) + p^2/2M,
    which equals chiN/2 at p = 0 for either sign of chiN.
    """
    p = np.asarray(p, dtype=float)
    sgn = 1.0 if chiN >= 0 else -1.0
    a = chiN * math.sin(theta)
    u = 2.0 * UNITS.k * p / UNITS.mass - chiN * math.cos(theta)
    return 0.5 * sgn * np.sqrt(a**2 + u**2) + p**2 / (2.0 * UNITS.mass * UNITS.hbar)


def branch_curvature(p, chiN, theta=math.pi / 2):
    """Analytic second derivative d^2 E_p / dp^2."""
    p = np.asarray(p, dtype=float)
    sgn = 1.0 if chiN >= 0 else -1.0
    a2 = (chiN * math.sin(theta)) ** 2
    u = 2.0 * UNITS.k * p / UNITS.mass - chiN * math.cos(theta)
    f = np.sqrt(a2 + u**2)
    kk = (2.0 * UNITS.k / UNITS.mass) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        second = np.where(f > 0, 0.5 * sgn * kk * a2 / f**3, 0.0)
    return second + 1.0 / (UNITS.mass * UNITS.hbar)


def effective_mass(chiN, theta=math.pi / 2):
    """M* = M / (1 + 4 E_R sin^2(theta) / chiN); infinite on the flat band."""
    if chiN == 0:
        return UNITS.mass
    denom = 1.0 + 4.0 * E_R * math.sin(theta) ** 2 / chiN
    if abs(denom) < 1e-14:
        return math.inf
    return UNITS.mass / denom


def dispersion(p_values, chiN, theta=math.pi / 2, fit_window=0.1):
    """Dressed-branch dispersion with analytic and fitted effective mass.

    The quadratic coefficient is read off an even-order (degree 4) polynomial
    fit over ``|p| <= fit_window`` so that the quartic remainder does not leak
    into it.
    """
    p_values = np.asarray(p_values, dtype=float)
    energies = branch_energy(p_values, chiN, theta)
    pf = np.linspace(-fit_window, fit_window, 201) * UNITS.k * UNITS.hbar
    coef = np.polynomial.polynomial.polyfit(pf, branch_energy(pf, chiN, theta), 4)
    c2 = float(coef[2])
    m_star = effective_mass(chiN, theta)
    c_s = math.sqrt(abs(chiN / (2.0 * m_star))) if math.isfinite(m_star) else 0.0
    return DispersionCurve(
        p_values=p_values,
        energies=energies,
        effective_mass=m_star,
        c_s=c_s,
        curvature=branch_curvature(p_values, chiN, theta),
        fitted_c2=c2,
        fitted_mass=(1.0 / (2.0 * c2)) if c2 != 0 else math.inf,
        linear_coefficient=float(coef[1]),
    )


def exchange_spectrum(n_atoms, chi=1.0):
    """Exact eigen-decomposition of chi S+ S- on the 2^N product basis.

    Returns ``(energies, total_spin, magnetization)`` per eigenvector, with S
    read off the S^2 expectation value. Small N only (dense 2^N matrices).
    """
    if n_atoms > 12:
        raise ValueError("exact diagonalization is limited to N <= 12")
    if chi == 0:
        raise ValueError("chi must be non-zero to resolve the spin manifolds")
    sp = np.array([[0.0, 1.0], [0.0, 0.0]])
    sz = np.diag([0.5, -0.5])
    eye = np.eye(2)

    def embed(op, site):
        out = np.array([[1.0]])
        for j in range(n_atoms):
            out = np.kron(out, op if j == site else eye)
        return out

    Sp = sum(embed(sp, j) for j in range(n_atoms))
    Sz = sum(embed(sz, j) for j in range(n_atoms))
    Sm = Sp.T
    H = chi * Sp @ Sm
    S2 = Sp @ Sm + Sz @ Sz - Sz
    # Sz is diagonal and conserved: diagonalize per magnetization block
    mz = np.diag(Sz)
    energies, spins, mags = [], [], []
    for m in np.unique(mz):
        idx = np.flatnonzero(mz == m)
        vals, vecs = np.linalg.eigh(H[np.ix_(idx, idx)])
        s2 = np.einsum("ij,ik,kj->j", vecs, S2[np.ix_(idx, idx)], vecs)
        energies.extend(vals)
        spins.extend(0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * np.clip(s2, 0, None))))
        mags.extend([m] * idx.size)
    order = np.argsort(energies, kind="stable")
    return (np.asarray(energies)[order], np.round(np.asarray(spins)[order] * 2) / 2,
            np.asarray(mags)[order])


def dicke_energy(S, M, chi=1.0):
    """chi (S(S+1) - M^2 + M), the exchange energy of a Dicke state |S, M>."""
    return chi * (S * (S + 1) - M**2 + M)


def tau_units(t):
    return np.asarray(t) / TAU
