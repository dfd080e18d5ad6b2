"""Named experiments that reproduce the figure data sets and write result bundles."""

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cavsol import dissipation as ds
from cavsol import dynamics1d as d1
from cavsol import dynamics_hd as hd
from cavsol import observables as ob
from cavsol.core import TAU, SimulationParams, build_ensemble, chi_opt, locked_regime_ok
from cavsol.export import (CODE_VERSION, UNIT_NOTES, csv_meta, params_hash, sha256_file,
                           write_csv, write_json)

CHI_OPT = chi_opt()


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    param_defaults: dict
    options: dict
    locked_analytics: bool = False


REGISTRY = {
    e.name: e
    for e in [
        Experiment("fig2", "1D width series and densities for chiN in {0, chi_opt, -chi_opt}",
                   {"t_final": 30.0},
                   {"chi_values": None, "n_samples": 30, "z_points": 1024}, True),
        Experiment("fig3", "terminal width ratio over a (theta, chiN) grid",
                   {"t_final": 30.0},
                   {"theta_values": [math.pi / 4, math.pi / 2, 3 * math.pi / 4],
                    "chi_min": -4.0, "chi_max": 0.0, "n_chi": 41, "branch": "down"}, True),
        Experiment("fig4", "2D dressed-basis soliton widths and the single-recoil control",
                   {"t_final": 100.0, "n_momentum": 41, "dimension": 2},
                   {"chi_values": None, "n_samples": 10, "grid_points": 128,
                    "naive_control": True, "naive_t_final": 30.0, "naive_chiN": None,
                    "k_vec": [1.0, 1.0]}),
        Experiment("detect", "interferometric contrast for the drive/exchange arm pairs",
                   {"t_final": 30.0},
                   {"echo": True, "n_samples": 15}),
        Experiment("dissipation", "collective Bloch trajectories with pump-induced decay",
                   {},
                   {"n_atoms": 1000, "gamma_fractions": [1e-3, 1e-2],
                    "theta_values": [math.pi / 2, math.pi / 3], "decay_times": 3.0,
                    "steps_per_decay": 2000, "scaling_n_atoms": [100, 1000, 10000]}),
        Experiment("dispersion", "dressed-branch dispersion, effective mass and c_s tables",
                   {},
                   {"p_max": 0.5, "n_p": 201, "chi_values": None}, True),
    ]
}


@dataclass
class ExperimentSpec:
    name: str
    params: SimulationParams = field(default_factory=SimulationParams)
    overrides: tuple = ()
    output_dir: str = "results"
    options: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.name not in REGISTRY:
            raise ValueError(f"unknown experiment {self.name!r}; choose from "
                             f"{', '.join(sorted(REGISTRY))}")
        exp = REGISTRY[self.name]
        unknown = set(self.options) - set(exp.options)
        if unknown:
            raise ValueError(f"unknown option(s) for {self.name}: {', '.join(sorted(unknown))}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def option(self, key):
        return self.options.get(key, REGISTRY[self.name].options[key])

    def resolved_options(self):
        out = dict(REGISTRY[self.name].options)
        out.update(self.options)
        return out

    @property
    def bundle_dir(self):
        return Path(self.output_dir) / self.name


@dataclass
class ResultBundle:
    directory: Path
    files: dict
    manifest_path: Path
    summary: dict


def default_params(name, **changes):
    d = dict(REGISTRY[name].param_defaults)
    d.update(changes)
    return SimulationParams(**d)


def _tag(x):
    return f"{x:+.4f}".replace("+", "p").replace("-", "m").replace(".", "_")


def _chi_values(spec, default):
    v = spec.option("chi_values")
    return [float(c) for c in (default if v is None else v)]


def _run_fig2(spec, out):
    p = spec.params
    ens = build_ensemble(p.replace(dimension=1))
    init = d1.initial_state(ens, p.theta)
    t_final = p.t_final_natural
    z_fit = ob.default_z_grid(p.sigma_p, t_final)
    z_map = ob.default_z_grid(p.sigma_p, t_final, n_points=int(spec.option("z_points")))
    rows, summary, files = [], {}, []
    for chi in _chi_values(spec, [0.0, CHI_OPT, -CHI_OPT]):
        tr = d1.evolve(init, ens, chi, t_final, p.dt_natural, theta_frame=p.theta,
                       n_samples=int(spec.option("n_samples")))
        ws = ob.width_series(tr, ens, z_fit)
        free = ob.free_width_ratio(tr.times, p.sigma_p)
        for b in ("down", "up"):
            ratio = ws.ratio(b)
            for i, t in enumerate(tr.times):
                rows.append([chi, t, t / TAU, b, ws.sigma[b][i], ratio[i], free[i],
                             ws.center[b][i], ws.residual[b][i], ws.converged[b][i]])
        summary[f"chiN={chi:g}"] = {
            "max_ratio_down": float(np.max(ws.ratio("down"))),
            "final_ratio_down": float(ws.ratio("down")[-1]),
            "final_residual_down": float(ws.residual["down"][-1]),
            "locked_valid": locked_regime_ok(chi, p.sigma_p) if chi != 0 else None,
        }
        dens = []
        for i, t in enumerate(tr.times):
            rd = ob.position_density(tr.psi[i], ens, z_map, "down", t).density
            ru = ob.position_density(tr.psi[i], ens, z_map, "up", t).density
            dens.extend([t, z, a, b] for z, a, b in zip(z_map, rd, ru))
        name = f"density_chi_{_tag(chi)}.csv"
        write_csv(out / name, ["t", "z", "rho_down", "rho_up"], dens,
                  csv_meta(p.to_dict(), chiN=chi))
        files.append(name)
    write_csv(out / "widths.csv",
              ["chiN", "t", "t_over_tau", "branch", "sigma", "ratio", "free_ratio",
               "center", "residual_norm", "converged"], rows, csv_meta(p.to_dict()))
    return ["widths.csv"] + files, summary


def _run_fig3(spec, out):
    p = spec.params
    grid = np.linspace(float(spec.option("chi_min")), float(spec.option("chi_max")),
                       int(spec.option("n_chi")))
    rows, opt_rows, summary = [], [], {}
    for th in spec.option("theta_values"):
        th = float(th)
        res = ob.sweep_width_vs_chi(th, grid, p.t_final_natural, p,
                                    branch=spec.option("branch"), workers=spec.workers)
        for c, r, v in zip(res.chi_grid, res.ratio, res.locked_valid):
            rows.append([th, c, r, v])
        pred = chi_opt(th)
        within = abs(res.argmin - pred) <= res.step * (1 + 1e-9)
        opt_rows.append([th, res.argmin, pred, res.step, within])
        summary[f"theta={th:.6g}"] = {"argmin_chiN": res.argmin, "predicted_chiN": pred,
                                      "grid_step": res.step, "within_one_step": within}
    meta = csv_meta(p.to_dict())
    write_csv(out / "width_ratio.csv", ["theta", "chiN", "width_ratio", "locked_valid"],
              rows, meta)
    write_csv(out / "optimal.csv", ["theta", "argmin_chiN", "predicted_chiN",
                                    "grid_step", "within_one_step"], opt_rows, meta)
    return ["width_ratio.csv", "optimal.csv"], summary


def fit_hd_widths(psi, ens, grids):
    """Full-covariance Gaussian fit of the 2D down-branch density."""
    prof = ob.position_density(psi, ens, grids, "down")
    return ob.fit_gaussian_2d(prof)


def hd_grid(sigma_p, n_points):
    half = 20.0 * 0.5 / sigma_p
    g = np.linspace(-half, half, n_points)
    return (g, g)


def _run_fig4(spec, out):
    p = spec.params
    if p.dimension != 2:
        raise ValueError("fig4 renders 2D densities; set dimension = 2")
    ens = build_ensemble(p)
    grids = hd_grid(p.sigma_p, int(spec.option("grid_points")))
    init = hd.initial_state_hd(ens)
    f0 = fit_hd_widths(init, ens, grids)
    s0 = np.array(f0.sigmas)
    rows, summary, files = [], {}, []
    for chi in _chi_values(spec, [CHI_OPT, 0.0]):
        tr = hd.evolve_hd(init, ens, chi, p.t_final_natural, p.dt_natural,
                          n_samples=int(spec.option("n_samples")))
        for i, t in enumerate(tr.times):
            f = fit_hd_widths(tr.psi[i], ens, grids)
            sx, sz = np.array(f.sigmas) / s0
            free = ob.free_width_ratio(t, p.sigma_p)
            rows.append([chi, t, t / TAU, f.sigmas[0], f.sigmas[1], sx, sz, free, f.converged])
        summary[f"chiN={chi:g}"] = {"final_ratio_x": float(sx), "final_ratio_z": float(sz)}
        prof = ob.position_density(tr.final, ens, grids, "down", tr.times[-1])
        X, Z = np.meshgrid(*grids, indexing="ij")
        name = f"density2d_chi_{_tag(chi)}.csv"
        write_csv(out / name, ["x", "z", "rho_down"],
                  zip(X.ravel(), Z.ravel(), prof.density.ravel()),
                  csv_meta(p.to_dict(), chiN=chi, t=tr.times[-1]))
        files.append(name)
    write_csv(out / "widths2d.csv", ["chiN", "t", "t_over_tau", "sigma_x", "sigma_z",
                                     "ratio_x", "ratio_z", "free_ratio", "converged"],
              rows, csv_meta(p.to_dict()))
    files.insert(0, "widths2d.csv")
    if spec.option("naive_control"):
        nc = naive_control(p, spec.option("k_vec"), spec.option("naive_chiN"),
                           float(spec.option("naive_t_final")) * TAU,
                           int(spec.option("grid_points")))
        coef_rows = [[c, *naive_row(c, spec.option("k_vec"))]
                     for c in np.linspace(-4.0, -0.25, 16)]
        write_csv(out / "naive_coefficients.csv",
                  ["chiN", "C_xx", "C_zz", "C_xz", "cross_coefficient", "expected_cross"],
                  coef_rows, csv_meta(p.to_dict()))
        files.append("naive_coefficients.csv")
        summary["naive_control"] = nc
    return files, summary


def naive_row(chiN, k_vec):
    q = hd.naive_quadratic_form(chiN, k_vec)
    kx, kz = q.k_vec
    return [q.coefficients[0, 0], q.coefficients[1, 1], q.coefficients[0, 1],
            q.cross_coefficient, kx * kz / (2.0 * chiN)]


def naive_control(p, k_vec=(1.0, 1.0), chiN=None, t_final=30.0 * TAU, grid_points=128):
    """Evolve the single-recoil 2D scheme and report the width anisotropy.

    The default chiN = -|K|^2 / 2M flattens the band along K, the best the
    scheme can do; the perpendicular direction keeps the bare mass.
    """
    K = np.asarray(k_vec, dtype=float)
    if chiN is None:
        chiN = -float(K @ K) / 2.0
    ens = build_ensemble(p.replace(dimension=2))
    grids = hd_grid(p.sigma_p, grid_points)
    init = d1.initial_state(ens, math.pi / 2)
    tr = d1.evolve(init, ens, chiN, t_final, p.dt_natural, k_vec=K, n_samples=1)
    f0 = ob.fit_gaussian_2d(ob.position_density(tr.psi[0], ens, grids, "down"))
    f1 = ob.fit_gaussian_2d(ob.position_density(tr.final, ens, grids, "down"))
    s = np.array(f1.principal_sigmas)
    return {"chiN": chiN, "k_vec": K.tolist(), "t_final": t_final,
            "initial_principal_sigmas": list(f0.principal_sigmas),
            "final_principal_sigmas": s.tolist(),
            "axis_ratio": float(s.max() / s.min()),
            "cross_coefficient": hd.naive_quadratic_form(chiN, K).cross_coefficient}


DETECT_CASES = (("drive", None), ("exchange", CHI_OPT), ("exchange", 0.0), ("exchange", -CHI_OPT))


def _run_detect(spec, out):
    p = spec.params
    rows, summary = [], {}
    for arm_b, chi in DETECT_CASES:
        cs = ob.interferometer_sequence(p, 0.0 if chi is None else chi, CHI_OPT,
                                        echo=bool(spec.option("echo")),
                                        n_samples=int(spec.option("n_samples")), arm_b=arm_b)
        for t, c, pop in zip(cs.times, cs.contrast, cs.population):
            rows.append([cs.label, t, t / TAU, c, pop])
        summary[cs.label] = {"final_contrast": float(cs.contrast[-1]),
                             "min_contrast": float(cs.contrast.min())}
    c = {k: v["final_contrast"] for k, v in summary.items()}
    summary["ordering_holds"] = (c[f"exchange:{CHI_OPT:g}"] > c["exchange:0"]
                                 > c[f"exchange:{-CHI_OPT:g}"])
    write_csv(out / "contrast.csv", ["case", "t", "t_over_tau", "contrast", "population"],
              rows, csv_meta(p.to_dict(), echo=bool(spec.option("echo"))))
    return ["contrast.csv"], summary


def _run_dissipation(spec, out):
    p = spec.params
    n = int(spec.option("n_atoms"))
    rows, files, summary = [], [], {}
    for frac in spec.option("gamma_fractions"):
        gamma = float(frac) * abs(CHI_OPT)
        t_final = float(spec.option("decay_times")) / gamma
        dt = 1.0 / (gamma * float(spec.option("steps_per_decay")))
        for th in spec.option("theta_values"):
            s0 = ds.CollectiveBloch.from_angles(n, float(th))
            tr = ds.evolve_bloch(s0, p.chiN, gamma, gamma, t_final, dt,
                                 sample_every=int(spec.option("steps_per_decay")) // 20)
            rt = ds.fit_decay_rate(tr.times, tr.transverse)
            rz = ds.fit_decay_rate(tr.times, np.abs(tr.S_Z)) if abs(s0.S_Z) > 1e-12 else float("nan")
            rows.append([gamma, th, rt, rz, rt / gamma, rz / gamma])
            name = f"bloch_gamma_{frac:g}_theta_{float(th):.4f}.json"
            write_json(out / name, tr.to_dict())
            files.append(name)
    drift = []
    for m in spec.option("scaling_n_atoms"):
        unbal = ds.superradiant_drift(int(m), 0.0, 1e-3)
        drift.append([m, unbal, unbal / (0.5 * m), ds.superradiant_drift(int(m), 1e-3, 1e-3)])
    write_csv(out / "rates.csv", ["Gamma", "theta", "fit_transverse", "fit_SZ",
                                  "transverse_over_Gamma", "SZ_over_Gamma"], rows,
              csv_meta(p.to_dict(), n_atoms=n))
    write_csv(out / "drift_scaling.csv", ["N", "dSZ_dt_unbalanced", "dsz_dt_normalized", "dSZ_dt_balanced"], drift,
              csv_meta(p.to_dict()))
    summary["max_rate_error"] = max(
        max(abs(r[4] - 1.0), abs(r[5] - 2.0) if math.isfinite(r[5]) else 0.0) for r in rows)
    return ["rates.csv", "drift_scaling.csv"] + files, summary


def _run_dispersion(spec, out):
    p = spec.params
    pv = np.linspace(-float(spec.option("p_max")), float(spec.option("p_max")),
                     int(spec.option("n_p")))
    chis = _chi_values(spec, [p.chiN])
    rows, mrows = [], []
    for chi in chis:
        curve = d1.dispersion(pv, chi, p.theta)
        for q, e, c in zip(pv, curve.energies, curve.curvature):
            rows.append([chi, q, e, c])
        mrows.append([chi, p.theta, curve.effective_mass, curve.c_s, curve.fitted_c2,
                      curve.fitted_mass, curve.linear_coefficient])
    meta = csv_meta(p.to_dict())
    write_csv(out / "dispersion.csv", ["chiN", "p", "energy", "curvature"], rows, meta)
    write_csv(out / "mass.csv", ["chiN", "theta", "M_star", "c_s", "fitted_c2",
                                 "fitted_mass", "linear_coefficient"], mrows, meta)
    centre = int(np.argmin(np.abs(pv)))
    summary = {f"chiN={c:g}": {"curvature_p0": float(rows[i * pv.size + centre][3]),
                               "fitted_c2": float(mrows[i][4])} for i, c in enumerate(chis)}
    return ["dispersion.csv", "mass.csv"], summary


RUNNERS = {"fig2": _run_fig2, "fig3": _run_fig3, "fig4": _run_fig4, "detect": _run_detect,
           "dissipation": _run_dissipation, "dispersion": _run_dispersion}


def manifest_dict(spec, files, summary):
    return {
        "experiment": spec.name,
        "params": spec.params.to_dict(),
        "params_hash": params_hash(spec.params.to_dict()),
        "options": spec.resolved_options(),
        "overrides": [list(o) for o in spec.overrides],
        "units": UNIT_NOTES,
        "code_version": CODE_VERSION,
        "files": files,
        "summary": summary,
    }


def run_experiment(spec):
    """Run ``spec`` and write its bundle to ``<output_dir>/<name>/``."""
    out = spec.bundle_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PermissionError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    names, summary = RUNNERS[spec.name](spec, out)
    files = {n: sha256_file(out / n) for n in names}
    man = write_json(out / "manifest.json", manifest_dict(spec, files, summary))
    return ResultBundle(out, files, man, summary)


def spec_from_manifest(path, output_dir=None):
    """Rebuild the :class:`ExperimentSpec` recorded in a manifest."""
    import json
    m = json.loads(Path(path).read_text(encoding="utf-8"))
    defaults = REGISTRY[m["experiment"]].options
    opts = {k: v for k, v in m["options"].items() if k in defaults}
    if output_dir is None:
        output_dir = str(Path(path).resolve().parent.parent)
    return ExperimentSpec(m["experiment"], SimulationParams(**m["params"]),
                          tuple(tuple(o) for o in m["overrides"]), output_dir, opts)
