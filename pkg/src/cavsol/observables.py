"""Position-space densities, Gaussian width fits and interferometric contrast."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from cavsol import dynamics1d as d1
from cavsol.core import TAU, UNITS, build_ensemble, chi_opt, locked_regime_ok

_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class DensityProfile:
    """Branch density on a tensor-product position grid.

    ``grids`` holds one 1D coordinate array per axis and ``density`` has
    shape ``tuple(g.size for g in grids)``.
    """

    grids: tuple
    density: np.ndarray
    branch: str = "down"
    time: float = 0.0
    population: float = float("nan")

    @property
    def z(self):
        return self.grids[0]

    def integral(self):
        out = self.density
        for g in reversed(self.grids):
            out = _trapz(out, g, axis=-1)
        return float(out)

    def marginal(self, axis):
        """Density integrated over every axis except ``axis``."""
        out = self.density
        for ax in reversed(range(len(self.grids))):
            if ax != axis:
                out = _trapz(out, self.grids[ax], axis=ax)
        return out


def default_z_grid(sigma_p, t_final=0.0, n_points=2048, drift=True):
    """Symmetric grid spanning 40 sigma_z(0) plus the ballistic drift 2 hbar k t / M."""
    sigma_z0 = UNITS.hbar / (2.0 * sigma_p)
    span = 40.0 * sigma_z0 + (2.0 * UNITS.recoil_velocity * t_final if drift else 0.0)
    return np.linspace(-span / 2, span / 2, n_points)


def _phase_matrix(nodes, grid):
    return np.exp(1j * np.outer(nodes, grid) / UNITS.hbar)


def _component_amplitudes(psi, ensemble, branch):
    """Momentum-space amplitude arrays (one per rendered sub-branch)."""
    m = psi.shape[-1]
    if branch == "down":
        return [psi[:, 0]]
    if branch != "up":
        raise ValueError("branch must be 'down' or 'up'")
    if m == 2:
        return [psi[:, 1]]
    # higher-dimensional schemes: render each bare recoil state separately
    from cavsol.dynamics_hd import dressed_to_bare
    return list(dressed_to_bare(psi).T)


def position_amplitude(amps, ensemble, grids):
    """A(r) = (dp/2pi)^{d/2} sum_n sqrt(w_n) psi(p_n) exp(i p_n . r / hbar)."""
    if ensemble.mode != "grid":
        raise ValueError("position-space synthesis needs a grid ensemble")
    d = ensemble.dimension
    grids = tuple(np.asarray(g, dtype=float) for g in grids)
    if len(grids) != d:
        raise ValueError(f"need {d} position grid(s), got {len(grids)}")
    dp = ensemble.spacing
    period = 2.0 * math.pi * UNITS.hbar / dp
    for g in grids:
        if g[-1] - g[0] >= period:
            raise ValueError(f"position grid span {g[-1] - g[0]:.4g} exceeds the "
                             f"synthesis period 2 pi hbar/dp = {period:.4g}")
    coef = (np.sqrt(ensemble.weights) * amps).reshape(ensemble.shape)
    coef = coef * (dp / (2.0 * math.pi * UNITS.hbar)) ** (d / 2.0)
    out = coef
    for ax in range(d):
        mat = _phase_matrix(ensemble.axis(ax), grids[ax])
        out = np.tensordot(out, mat, axes=([0], [0]))
    return out


def position_density(field, ensemble, z_grid, branch="down", time=None,
                     min_capture=0.999):
    """Density of one branch, rendered without interference between branches.

    ``field`` is a :class:`~cavsol.dynamics1d.SpinorField1D` or an amplitude
    array of shape (n_points, n_components). ``z_grid`` is a 1D array (1D
    ensembles) or a tuple of per-axis arrays.
    """
    if isinstance(field, d1.SpinorField1D):
        psi, t = field.as_array(), field.time
    else:
        psi, t = np.asarray(field), 0.0
    if time is not None:
        t = time
    grids = (z_grid,) if np.ndim(z_grid) == 1 and not isinstance(z_grid, tuple) else tuple(z_grid)
    rho = 0.0
    population = 0.0
    for amps in _component_amplitudes(psi, ensemble, branch):
        rho = rho + np.abs(position_amplitude(amps, ensemble, grids)) ** 2
        population += float(np.sum(ensemble.weights * np.abs(amps) ** 2))
    prof = DensityProfile(grids, np.asarray(rho), branch, float(t), population)
    if population > 1e-12:
        captured = prof.integral() / population
        if captured < min_capture:
            spans = [g[-1] - g[0] for g in grids]
            raise ValueError(
                f"position grid captures only {captured:.4%} of the {branch} branch "
                f"at t={t:.4g}; suggested span >= {2.0 * max(spans):.4g}")
    return prof


def combined_density(field, ensemble, z_grid):
    """1D density including the interference fringes between the two branches."""
    psi = field.as_array() if isinstance(field, d1.SpinorField1D) else np.asarray(field)
    z = np.asarray(z_grid)
    k = UNITS.k
    a_down = position_amplitude(psi[:, 0], ensemble, (z,)) * np.exp(-1j * k * z)
    a_up = position_amplitude(psi[:, 1], ensemble, (z,)) * np.exp(1j * k * z)
    return np.abs(a_down + a_up) ** 2


@dataclass
class FitResult:
    """Gaussian fit parameters.

    ``residual_norm`` is the scale-free misfit ||model - rho|| / ||rho||, so
    profiles of different heights compare by shape; ``absolute_residual``
    keeps the raw L2 norm. ``history`` lists ``residual_norm`` after every
    accepted iteration.
    """

    amplitude: float
    center: float
    sigma: float
    residual_norm: float
    converged: bool
    absolute_residual: float = float("nan")
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def reliable(self):
        """Converged and the Gaussian describes the data to within 5 %."""
        return self.converged and self.residual_norm < 0.05


def levenberg_marquardt(residual, jacobian, x0, scale=None, max_iter=100, tol=1e-8):
    """Damped Gauss-Newton minimisation of ||residual(x)||^2.

    Steps that do not decrease the residual are rejected and the damping is
    raised; convergence is a relative parameter update below ``tol``
    (relative to ``scale``, default ``|x|``).

    Returns ``(x, converged, history, iterations)`` where ``history`` lists
    the residual norms of accepted iterates.
    """
    x = np.asarray(x0, dtype=float)
    r = residual(x)
    cost = float(r @ r)
    history = [math.sqrt(cost)]
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jacobian(x)
        g = J.T @ r
        A = J.T @ J
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        accepted = False
        for _ in range(30):
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            xn = x + step
            rn = residual(xn)
            cn = float(rn @ rn)
            if np.isfinite(cn) and cn <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            return x, False, history, it
        ref = np.abs(x) if scale is None else np.asarray(scale(x), dtype=float)
        rel = np.max(np.abs(step) / np.maximum(ref, 1e-300))
        x, r, cost = xn, rn, cn
        history.append(math.sqrt(cost))
        lam = max(lam / 10.0, 1e-12)
        if rel < tol:
            return x, True, history, it
    return x, False, history, max_iter


def _moments(z, rho):
    mass = _trapz(rho, z)
    if not mass > 0:
        raise ValueError("density must have positive integral")
    mean = _trapz(z * rho, z) / mass
    var = _trapz((z - mean) ** 2 * rho, z) / mass
    return mass, mean, math.sqrt(max(var, 1e-300))


def fit_gaussian(profile, z=None):
    """Fit A exp(-(z - z0)^2 / 2 sigma^2) to a 1D density.

    Accepts a 1D :class:`DensityProfile` or ``(rho, z)`` arrays. The fit
    starts from the density moments; on failure the moment values are
    returned with ``converged=False``.
    """
    if isinstance(profile, DensityProfile):
        if len(profile.grids) != 1:
            raise ValueError("use fit_gaussian_2d for multi-dimensional profiles")
        z, rho = profile.z, profile.density
    else:
        rho = np.asarray(profile, dtype=float)
        z = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(rho < -1e-15 * np.max(np.abs(rho))):
        raise ValueError("density must be finite and non-negative")
    mass, mean, sd = _moments(z, rho)
    amp0 = mass / (math.sqrt(2.0 * math.pi) * sd)
    norm = float(np.linalg.norm(rho))

    def model(x):
        return x[0] * np.exp(-((z - x[1]) ** 2) / (2.0 * x[2] ** 2))

    def residual(x):
        return model(x) - rho

    def jacobian(x):
        e = np.exp(-((z - x[1]) ** 2) / (2.0 * x[2] ** 2))
        u = z - x[1]
        return np.stack([e, x[0] * e * u / x[2] ** 2, x[0] * e * u**2 / x[2] ** 3], axis=1)

    x, ok, hist, its = levenberg_marquardt(
        residual, jacobian, [amp0, mean, sd],
        scale=lambda x: [abs(x[0]), abs(x[2]), abs(x[2])])
    rel = [h / norm for h in hist]
    if not ok or x[2] == 0:
        return FitResult(amp0, mean, sd, rel[0], False, hist[0], its, rel)
    return FitResult(float(x[0]), float(x[1]), abs(float(x[2])), rel[-1], True,
                     hist[-1], its, rel)


@dataclass
class FitResult2D:
    amplitude: float
    center: tuple
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    absolute_residual: float = float("nan")

    @property
    def sigmas(self):
        """Axis-aligned rms widths (sqrt of the covariance diagonal)."""
        return tuple(np.sqrt(np.diag(self.covariance)))

    @property
    def principal_sigmas(self):
        """Rms widths along the covariance eigen-directions (ascending)."""
        return tuple(np.sqrt(np.linalg.eigvalsh(self.covariance)))


def fit_gaussian_2d(profile):
    """Fit a full-covariance 2D Gaussian to a 2D density profile."""
    x, z = profile.grids
    rho = profile.density
    X, Z = np.meshgrid(x, z, indexing="ij")
    mass = profile.integral()
    mx = _trapz(_trapz(X * rho, z, axis=1), x) / mass
    mz = _trapz(_trapz(Z * rho, z, axis=1), x) / mass
    cxx = _trapz(_trapz((X - mx) ** 2 * rho, z, axis=1), x) / mass
    czz = _trapz(_trapz((Z - mz) ** 2 * rho, z, axis=1), x) / mass
    cxz = _trapz(_trapz((X - mx) * (Z - mz) * rho, z, axis=1), x) / mass
    cov0 = np.array([[cxx, cxz], [cxz, czz]])
    # parameters: amplitude, centers, inverse-covariance entries
    inv0 = np.linalg.inv(cov0)
    amp0 = mass / (2.0 * math.pi * math.sqrt(np.linalg.det(cov0)))
    xf, zf, rf = X.ravel(), Z.ravel(), rho.ravel()
    norm = float(np.linalg.norm(rf))

    def parts(p):
        u, v = xf - p[1], zf - p[2]
        q = p[3] * u * u + 2.0 * p[4] * u * v + p[5] * v * v
        return u, v, np.exp(-0.5 * q)

    def residual(p):
        return p[0] * parts(p)[2] - rf

    def jacobian(p):
        u, v, e = parts(p)
        ae = p[0] * e
        return np.stack([
            e,
            ae * (p[3] * u + p[4] * v),
            ae * (p[4] * u + p[5] * v),
            -0.5 * ae * u * u,
            -ae * u * v,
            -0.5 * ae * v * v,
        ], axis=1)

    p0 = [amp0, mx, mz, inv0[0, 0], inv0[0, 1], inv0[1, 1]]
    sc = math.sqrt(max(cxx, czz))
    p, ok, hist, _ = levenberg_marquardt(
        residual, jacobian, p0,
        scale=lambda p: [abs(p[0]), sc, sc, abs(p[3]), math.sqrt(abs(p[3] * p[5])), abs(p[5])])
    inv = np.array([[p[3], p[4]], [p[4], p[5]]])
    if not ok or np.any(np.linalg.eigvalsh(inv) <= 0):
        return FitResult2D(amp0, (mx, mz), cov0, hist[0] / norm, False, hist[0])
    return FitResult2D(float(p[0]), (float(p[1]), float(p[2])), np.linalg.inv(inv),
                       hist[-1] / norm, True, hist[-1])


@dataclass
class WidthSeries:
    times: np.ndarray
    sigma: dict
    center: dict
    amplitude: dict
    residual: dict
    converged: dict

    def ratio(self, branch="down"):
        s = np.asarray(self.sigma[branch])
        return s / s[0]

    def to_dict(self):
        out = {"t": self.times.tolist(), "t_over_tau": (self.times / TAU).tolist()}
        for b in self.sigma:
            out[b] = {
                "sigma": np.asarray(self.sigma[b]).tolist(),
                "ratio": self.ratio(b).tolist(),
                "center": np.asarray(self.center[b]).tolist(),
                "amplitude": np.asarray(self.amplitude[b]).tolist(),
                "residual_norm": np.asarray(self.residual[b]).tolist(),
                "converged": [bool(c) for c in self.converged[b]],
            }
        return out


def width_series(trajectory, ensemble, z_grid, branches=("down", "up")):
    """Fitted Gaussian width of each branch at every sample time."""
    sig, cen, amp, res, conv = ({b: [] for b in branches} for _ in range(5))
    for i, t in enumerate(trajectory.times):
        for b in branches:
            f = fit_gaussian(position_density(trajectory.psi[i], ensemble, z_grid, b, t))
            sig[b].append(f.sigma)
            cen[b].append(f.center)
            amp[b].append(f.amplitude)
            res[b].append(f.residual_norm)
            conv[b].append(f.converged)
    return WidthSeries(np.asarray(trajectory.times), sig, cen, amp, res, conv)


def free_width_ratio(t, sigma_p, mass=UNITS.mass):
    """sqrt(1 + (sigma_p t / (M sigma_z0))^2) for a minimum-uncertainty packet."""
    sigma_z0 = UNITS.hbar / (2.0 * sigma_p)
    return np.sqrt(1.0 + (sigma_p * np.asarray(t) / (mass * sigma_z0)) ** 2)


@dataclass
class SweepResult:
    theta: float
    chi_grid: np.ndarray
    ratio: np.ndarray
    locked_valid: np.ndarray
    t_d: float
    branch: str = "down"

    @property
    def argmin(self):
        return float(self.chi_grid[int(np.argmin(self.ratio))])

    @property
    def step(self):
        return float(np.min(np.diff(np.sort(self.chi_grid))))

    def to_dict(self):
        return {
            "theta": self.theta,
            "t_d": self.t_d,
            "branch": self.branch,
            "chiN": self.chi_grid.tolist(),
            "width_ratio": self.ratio.tolist(),
            "locked_valid": [bool(v) for v in self.locked_valid],
            "argmin_chiN": self.argmin,
            "predicted_chiN": chi_opt(self.theta),
        }


def _terminal_ratio(args):
    chiN, theta, params, t_d, z_grid, branch, sigma0, backend = args
    ens = build_ensemble(params)
    init = d1.initial_state(ens, theta)
    dt = params.dt_natural
    n_steps = max(1, int(round(t_d / dt)))
    tr = d1.evolve(init, ens, chiN, t_d, dt, theta_frame=theta,
                   sample_every=n_steps, backend=backend)
    fit = fit_gaussian(position_density(tr.final, ens, z_grid, branch, t_d))
    return fit.sigma / sigma0


def sweep_width_vs_chi(theta, chi_grid, t_d=30.0 * TAU, params=None, branch="down",
                       z_grid=None, workers=1, backend=None):
    """Terminal normalized width sigma_z(t_d)/sigma_z(0) for each chiN.

    Each point runs in the frame rotating at -chiN cos(theta); sweep points
    are independent and may be dispatched to a process pool.
    """
    from cavsol.core import SimulationParams
    params = params or SimulationParams()
    params = params.replace(theta=theta, dimension=1, mode="grid")
    chi_grid = np.asarray(chi_grid, dtype=float)
    ens = build_ensemble(params)
    if z_grid is None:
        z_grid = default_z_grid(params.sigma_p, t_d)
    init = d1.initial_state(ens, theta)
    sigma0 = fit_gaussian(position_density(init, ens, z_grid, branch)).sigma
    jobs = [(float(c), theta, params, t_d, z_grid, branch, sigma0, backend) for c in chi_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            ratios = list(pool.map(_terminal_ratio, jobs))
    else:
        ratios = [_terminal_ratio(j) for j in jobs]
    valid = np.array([locked_regime_ok(c, params.sigma_p) for c in chi_grid])
    return SweepResult(theta, chi_grid, np.asarray(ratios), valid, t_d, branch)


@dataclass
class ContrastSeries:
    times: np.ndarray
    contrast: np.ndarray
    population: np.ndarray
    overlap: np.ndarray
    echo: bool
    label: str = ""

    def to_dict(self):
        return {
            "label": self.label,
            "echo": self.echo,
            "t": self.times.tolist(),
            "t_over_tau": (self.times / TAU).tolist(),
            "contrast": self.contrast.tolist(),
            "population": self.population.tolist(),
            "overlap_re": self.overlap.real.tolist(),
            "overlap_im": self.overlap.imag.tolist(),
        }


def arm_overlap(psi_a, psi_b, weights):
    """sum_n w_n <psi_a(p_n) | psi_b(p_n)> over all components."""
    return np.sum(weights * np.sum(np.conj(psi_a) * psi_b, axis=-1), axis=-1)


def _phase_referenced(psi_a, psi_b, weights, center):
    ov = arm_overlap(psi_a, psi_b, weights)
    ref = np.sum(np.conj(psi_a[..., center, :]) * psi_b[..., center, :], axis=-1)
    return ov * np.exp(-1j * np.angle(ref))


def interferometer_sequence(params, chiN_arm, Omega_arm=None, echo=False,
                            n_samples=30, arm_b="exchange", backend=None):
    """Two-arm detection sequence: drive soliton (arm A) against arm B.

    Arm A evolves under the fixed drive ``Omega_arm`` (default chi_opt N);
    arm B under the exchange with ``chiN_arm`` (or the same drive when
    ``arm_b="drive"``). Contrast is |sum_n w_n <psi_A|psi_B>|. With ``echo``
    every sample time T is an independent sequence with pi pulses on both
    arms at T/2.
    """
    if Omega_arm is None:
        Omega_arm = chi_opt(math.pi / 2)
    ens = build_ensemble(params.replace(dimension=1))
    init = d1.initial_state(ens, params.theta)
    dt = params.dt_natural
    T = params.t_final_natural
    center = int(np.argmin(np.abs(ens.points[:, 0])))
    b_kw = dict(omega=Omega_arm) if arm_b == "drive" else dict()
    b_chi = 0.0 if arm_b == "drive" else chiN_arm

    def run(duration, samples):
        n_steps = max(1, int(round(duration / dt)))
        every = max(1, n_steps // samples)
        ech = (duration / 2.0,) if echo else ()
        ta = d1.evolve(init, ens, 0.0, duration, dt, omega=Omega_arm,
                       sample_every=every, echo_times=ech, backend=backend)
        tb = d1.evolve(init, ens, b_chi, duration, dt, sample_every=every,
                       echo_times=ech, backend=backend, **b_kw)
        return ta, tb

    if not echo:
        ta, tb = run(T, n_samples)
        times, pa, pb = ta.times, ta.psi, tb.psi
    else:
        times = np.linspace(0.0, T, n_samples + 1)
        pa, pb = [init.as_array()], [init.as_array()]
        for t in times[1:]:
            ta, tb = run(t, 1)
            pa.append(ta.final)
            pb.append(tb.final)
        pa, pb = np.stack(pa), np.stack(pb)
    ov = arm_overlap(pa, pb, ens.weights)
    ref = _phase_referenced(pa, pb, ens.weights, center)
    label = f"{arm_b}:{chiN_arm:g}" if arm_b == "exchange" else f"drive:{Omega_arm:g}"
    return ContrastSeries(np.asarray(times), np.abs(ov), 0.5 * (1.0 + ref.real), ov,
                          bool(echo), label)
