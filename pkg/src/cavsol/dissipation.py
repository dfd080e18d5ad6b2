"""Collective Bloch equations for the dual-pump cavity scheme.

Two pumps generate exchange interactions chi_1, chi_2 together with
collective decay channels of rates Gamma_1 (jump operator S_-) and Gamma_2
(jump operator S_+). In mean field the spin vector obeys

    dS_X/dt =  2 chi S_Z S_Y - (G1 + G2)/2 S_X + (G2 - G1) S_Z S_X
    dS_Y/dt = -2 chi S_Z S_X - (G1 + G2)/2 S_Y + (G2 - G1) S_Z S_Y
    dS_Z/dt = -(G1 + G2) S_Z - (G2 - G1)(S_X^2 + S_Y^2)

with chi = chi_1 + chi_2 = chiN / N. The terms proportional to G2 - G1 are the
collectively enhanced superradiant drift; they vanish for balanced pumps.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CavityParams:
    """Cavity and pump parameters (all in frequency units)."""

    g: float
    Delta0: float
    kappa: float
    alpha_sq_1: float
    alpha_sq_2: float
    Delta1: float
    Delta2: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0 (got {self.kappa})")
        if self.alpha_sq_1 < 0 or self.alpha_sq_2 < 0:
            raise ValueError("intracavity photon numbers must be >= 0")
        if self.Delta0 == 0:
            raise ValueError("Delta0 must be non-zero")


def _rate(c, alpha_sq, delta):
    return (c.g**2 / (4.0 * c.Delta0)) ** 2 * alpha_sq * c.kappa / (delta**2 + (c.kappa / 2.0) ** 2)


def gamma_rates(c):
    """Collective decay rates (Gamma_1, Gamma_2) of the two pump channels."""
    return _rate(c, c.alpha_sq_1, c.Delta1), _rate(c, c.alpha_sq_2, c.Delta2)


@dataclass(frozen=True)
class CollectiveBloch:
    S_X: float
    S_Y: float
    S_Z: float
    N_atoms: int

    @classmethod
    def from_angles(cls, n_atoms, theta, phi=0.0):
        """Fully polarized state on the Bloch sphere of radius N/2."""
        r = 0.5 * n_atoms
        return cls(r * math.sin(theta) * math.cos(phi), r * math.sin(theta) * math.sin(phi),
                   r * math.cos(theta), n_atoms)

    def as_array(self):
        return np.array([self.S_X, self.S_Y, self.S_Z])

    @property
    def length(self):
        return float(np.linalg.norm(self.as_array()))

    @property
    def transverse(self):
        return math.hypot(self.S_X, self.S_Y)

    def is_contracted(self, tol=1e-9):
        return self.length**2 <= (0.5 * self.N_atoms) ** 2 + tol


def _check_rates(Gamma1, Gamma2):
    if Gamma1 < 0 or Gamma2 < 0:
        raise ValueError(f"decay rates must be >= 0 (got {Gamma1}, {Gamma2})")


def _rhs(s, chi, g1, g2):
    x, y, z = s
    gs = g1 + g2
    gd = g2 - g1
    return np.array([
        2.0 * chi * z * y - 0.5 * gs * x + gd * z * x,
        -2.0 * chi * z * x - 0.5 * gs * y + gd * z * y,
        -gs * z - gd * (x * x + y * y),
    ])


def bloch_derivative(s, chiN, Gamma1, Gamma2):
    """Time derivative of the collective spin, returned as a CollectiveBloch."""
    _check_rates(Gamma1, Gamma2)
    chi = chiN / s.N_atoms
    dx, dy, dz = _rhs(s.as_array(), chi, Gamma1, Gamma2)
    return CollectiveBloch(float(dx), float(dy), float(dz), s.N_atoms)


@dataclass
class BlochTrajectory:
    times: np.ndarray
    spins: np.ndarray
    N_atoms: int

    @property
    def S_X(self):
        return self.spins[:, 0]

    @property
    def S_Y(self):
        return self.spins[:, 1]

    @property
    def S_Z(self):
        return self.spins[:, 2]

    @property
    def transverse(self):
        return np.hypot(self.spins[:, 0], self.spins[:, 1])

    @property
    def length(self):
        return np.linalg.norm(self.spins, axis=1)

    def to_dict(self):
        return {"N_atoms": self.N_atoms, "t": self.times.tolist(),
                "S_X": self.S_X.tolist(), "S_Y": self.S_Y.tolist(), "S_Z": self.S_Z.tolist()}


def evolve_bloch(s0, chiN, Gamma1, Gamma2, t_final, dt, sample_every=1):
    """Fixed-step RK4 integration of :func:`bloch_derivative`."""
    _check_rates(Gamma1, Gamma2)
    if not dt > 0 or t_final < 0:
        raise ValueError("need dt > 0 and t_final >= 0")
    n_steps = max(1, int(round(t_final / dt))) if t_final > 0 else 0
    h = t_final / n_steps if n_steps else dt
    chi = chiN / s0.N_atoms
    s = s0.as_array()
    times, out = [0.0], [s.copy()]
    for step in range(1, n_steps + 1):
        k1 = _rhs(s, chi, Gamma1, Gamma2)
        k2 = _rhs(s + 0.5 * h * k1, chi, Gamma1, Gamma2)
        k3 = _rhs(s + 0.5 * h * k2, chi, Gamma1, Gamma2)
        k4 = _rhs(s + h * k3, chi, Gamma1, Gamma2)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(s)):
            from cavsol.kernels import NumericalAbort
            raise NumericalAbort(f"Bloch integration diverged at step {step}")
        if step % sample_every == 0 or step == n_steps:
            times.append(step * h)
            out.append(s.copy())
    return BlochTrajectory(np.array(times), np.array(out), s0.N_atoms)


def fit_decay_rate(t, y):
    """Rate of y ~ A exp(-rate t) from a linear least-squares fit to log y."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = y > 0
    if mask.sum() < 2:
        raise ValueError("need at least two positive samples")
    slope, _ = np.polyfit(t[mask], np.log(y[mask]), 1)
    return -float(slope)


def superradiant_drift(n_atoms, Gamma1, Gamma2, chiN=0.0):
    """Initial dS_Z/dt for an equatorial fully polarized state."""
    s = CollectiveBloch.from_angles(n_atoms, math.pi / 2)
    return bloch_derivative(s, chiN, Gamma1, Gamma2).S_Z
