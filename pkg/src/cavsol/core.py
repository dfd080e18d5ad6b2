"""Units, simulation parameters and thermal momentum ensembles.

Everything runs in natural units hbar = M = k = 1, so the recoil energy is
E_R = 1/2, the recoil velocity hbar k / M is 1, and the optimal exchange
strength is chi_opt N = -4 E_R = -2. Times are quoted either in these units or
in multiples of ``TAU = 2 pi / |chi_opt N| = pi``.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np


@dataclass(frozen=True)
class UnitSystem:
    hbar: float = 1.0
    mass: float = 1.0
    k: float = 1.0

    @property
    def recoil_energy(self):
        return self.hbar * self.k**2 / (2.0 * self.mass)

    @property
    def recoil_velocity(self):
        return self.hbar * self.k / self.mass

    @property
    def tau(self):
        """Characteristic time 2 pi / |chi_opt N|."""
        return 2.0 * math.pi / (4.0 * self.recoil_energy / self.hbar)


UNITS = UnitSystem()
E_R = UNITS.recoil_energy
TAU = UNITS.tau


class LockedRegimeWarning(UserWarning):
    """The exchange gap does not dominate the Doppler spread of the ensemble."""


def chi_opt(theta=math.pi / 2, n_atoms=1):
    """Optimal exchange strength chi_opt(theta) = -4 E_R sin^2(theta) / N.

    With ``n_atoms=1`` the return value is the product chi_opt N.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    return -4.0 * E_R * math.sin(theta) ** 2 / n_atoms


def doppler_scale(sigma_p):
    """The Doppler spread 2 k sigma_p / M that the gap has to dominate."""
    return 2.0 * UNITS.k * sigma_p / UNITS.mass


def locked_regime_ok(chiN, sigma_p, factor=10.0):
    return abs(chiN) >= factor * doppler_scale(sigma_p)


@dataclass(frozen=True)
class SimulationParams:
    """Physical and numerical settings of one run.

    ``p_span`` is the grid half-width in units of ``sigma_p``; ``dt`` and
    ``t_final`` are in units of ``TAU``.
    """

    chiN: float = -2.0
    sigma_p: float = 0.05
    theta: float = math.pi / 2
    n_momentum: int = 201
    p_span: float = 5.0
    dt: float = 1e-3
    t_final: float = 30.0
    dimension: int = 1
    seed: int = 0
    mode: str = "grid"

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise ValueError("; ".join(errors))

    def validation_errors(self):
        errs = []
        if not self.sigma_p > 0:
            errs.append(f"sigma_p must be > 0 (got {self.sigma_p})")
        if not isinstance(self.n_momentum, (int, np.integer)) or isinstance(self.n_momentum, bool):
            errs.append("n_momentum must be an integer")
        elif self.n_momentum < 3:
            errs.append(f"n_momentum must be >= 3 (got {self.n_momentum})")
        elif self.n_momentum % 2 == 0 and self.mode == "grid":
            errs.append(f"n_momentum must be odd so that p=0 is a grid node "
                        f"(got {self.n_momentum})")
        if not self.p_span > 0:
            errs.append(f"p_span must be > 0 (got {self.p_span})")
        if not self.dt > 0:
            errs.append(f"dt must be > 0 (got {self.dt})")
        if self.t_final < 0:
            errs.append(f"t_final must be >= 0 (got {self.t_final})")
        if self.dimension not in (1, 2, 3):
            errs.append(f"dimension must be 1, 2 or 3 (got {self.dimension})")
        if self.mode not in ("grid", "montecarlo"):
            errs.append(f"mode must be 'grid' or 'montecarlo' (got {self.mode!r})")
        if not 0.0 <= self.theta <= math.pi:
            errs.append(f"theta must lie in [0, pi] (got {self.theta})")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            errs.append("seed must be a non-negative integer")
        return errs

    @property
    def dt_natural(self):
        return self.dt * TAU

    @property
    def t_final_natural(self):
        return self.t_final * TAU

    @property
    def p_max(self):
        return self.p_span * self.sigma_p

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return SimulationParams(**d)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def check_locked_regime(self, chiN=None):
        """Warn when |chiN| < 10 * 2 k sigma_p / M; returns the validity flag."""
        chiN = self.chiN if chiN is None else chiN
        ok = locked_regime_ok(chiN, self.sigma_p)
        if not ok:
            warnings.warn(
                f"|chiN|={abs(chiN):.4g} is below 10 x 2k sigma_p/M="
                f"{10 * doppler_scale(self.sigma_p):.4g}; locked-regime analytics "
                "are unreliable", LockedRegimeWarning, stacklevel=2)
        return ok


def max_frequency(omega_diag, chiN=0.0, omega=0.0, offdiag=0.0):
    """Upper bound on the per-point frequencies entering the stability guard."""
    return (float(np.max(np.abs(omega_diag))) + float(np.max(np.abs(offdiag), initial=0.0))
            + 0.5 * abs(chiN) + 0.5 * abs(omega))


def check_step(dt, wmax, limit=0.05):
    if dt * wmax > limit:
        raise ValueError(
            f"time step too large: dt * max frequency = {dt * wmax:.3g} > {limit} "
            f"(use dt <= {limit / wmax:.3g})")


@dataclass(frozen=True)
class MomentumEnsemble:
    """Momenta ``points`` (shape (n, d)) with probability ``weights``.

    In grid mode ``shape`` records the per-axis node count and the points are
    ordered as ``np.meshgrid(..., indexing="ij")`` flattened.
    """

    points: np.ndarray
    weights: np.ndarray
    mode: str = "grid"
    shape: tuple = field(default=())
    spacing: float = float("nan")

    @property
    def dimension(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    def axis(self, i=0):
        """1D node array along axis ``i`` (grid mode only)."""
        if self.mode != "grid":
            raise ValueError("axis nodes are only defined for grid ensembles")
        n = self.shape[i]
        half = (n - 1) // 2
        return self.spacing * np.arange(-half, half + 1)


def build_ensemble(params):
    """Build the Gaussian-weighted momentum ensemble described by ``params``."""
    if not params.sigma_p > 0:
        raise ValueError("sigma_p must be > 0")
    n, d = params.n_momentum, params.dimension
    if n < 3:
        raise ValueError("n_momentum must be >= 3")
    if params.mode == "grid":
        if n % 2 == 0:
            raise ValueError("n_momentum must be odd in grid mode")
        half = (n - 1) // 2
        dp = params.p_max / half
        axis = dp * np.arange(-half, half + 1)
        g = np.exp(-axis**2 / (2.0 * params.sigma_p**2))
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        wmesh = np.ones([n] * d)
        for i in range(d):
            wmesh = wmesh * g.reshape([n if j == i else 1 for j in range(d)])
        w = wmesh.ravel()
        w = w / w.sum()
        return MomentumEnsemble(points, w, "grid", (n,) * d, dp)
    rng = np.random.default_rng(params.seed)
    points = rng.normal(0.0, params.sigma_p, size=(n, d))
    w = np.full(n, 1.0 / n)
    return MomentumEnsemble(points, w, "montecarlo", (n,))


def single_point_ensemble(p=0.0):
    """A one-point ensemble carrying all weight at momentum ``p``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return MomentumEnsemble(p.reshape(1, -1), np.ones(1), "grid", (1,) * p.size, 1.0)
