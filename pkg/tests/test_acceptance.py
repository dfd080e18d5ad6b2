"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line with the
measured figures before asserting. Run just this file with

    pytest -s tests/test_acceptance.py
"""

import math
import os
import time

import numpy as np
import pytest

from cavsol import dissipation as ds
from cavsol import dynamics1d as d1
from cavsol import dynamics_hd as hd
from cavsol import observables as ob
from cavsol.core import E_R, TAU, SimulationParams, build_ensemble, chi_opt
from cavsol.experiments import default_params, fit_hd_widths, hd_grid, naive_control

CHI_OPT = chi_opt()
WORKERS = min(8, os.cpu_count() or 1)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_01_flat_band(report):
    t0 = time.perf_counter()
    curve = d1.dispersion(np.linspace(-0.1, 0.1, 201), -4.0 * E_R, fit_window=0.1)
    elapsed = time.perf_counter() - t0
    limit = 1e-3 * 0.5  # 1e-3 / (2 M hbar)
    ok = abs(curve.fitted_c2) < limit and elapsed < 1.0
    report(1, ok, f"|c2| = {abs(curve.fitted_c2):.2e} (< {limit:g}), {elapsed:.3f} s")
    assert ok


@pytest.mark.slow
def test_02_soliton_width(report):
    t0 = time.perf_counter()
    p = default_params("fig2")
    assert p.sigma_p == 0.05
    ens = build_ensemble(p)
    init = d1.initial_state(ens, p.theta)
    z = ob.default_z_grid(p.sigma_p, p.t_final_natural)
    out = {}
    for chi in (CHI_OPT, 0.0, -CHI_OPT):
        tr = d1.evolve(init, ens, chi, p.t_final_natural, p.dt_natural, theta_frame=p.theta,
                       n_samples=30)
        ws = ob.width_series(tr, ens, z)
        out[chi] = (tr.times, ws)
    t, ws = out[CHI_OPT]
    locked = max(ws.ratio("down").max(), ws.ratio("up").max())
    t, ws = out[0.0]
    free = ob.free_width_ratio(t, p.sigma_p)
    free_err = max(np.max(np.abs(ws.ratio(b) / free - 1)) for b in ("down", "up"))
    t, ws = out[-CHI_OPT]
    early = t <= 10 * TAU + 1e-9
    half = ob.free_width_ratio(t[early], p.sigma_p, mass=d1.effective_mass(-CHI_OPT))
    half_err = max(np.max(np.abs(ws.ratio(b)[early] / half - 1)) for b in ("down", "up"))
    elapsed = time.perf_counter() - t0
    ok = locked <= 1.05 and free_err <= 0.02 and half_err <= 0.05 and elapsed < 60
    report(2, ok, f"max ratio at chi_opt {locked:.4f} (<= 1.05); free-law error {free_err:.2%} "
                  f"(<= 2%); M/2 error to 10 tau {half_err:.2%} (<= 5%); {elapsed:.1f} s")
    assert ok


@pytest.mark.slow
def test_03_theta_scan(report):
    t0 = time.perf_counter()
    grid = np.linspace(-4.0, 0.0, 41)
    params = default_params("fig3")
    lines, ok = [], True
    for theta in (math.pi / 4, math.pi / 2, 3 * math.pi / 4):
        sw = ob.sweep_width_vs_chi(theta, grid, params=params, workers=WORKERS)
        target = chi_opt(theta)
        hit = abs(sw.argmin - target) <= sw.step + 1e-12
        ok &= bool(hit)
        lines.append(f"theta={theta:.3f}: argmin {sw.argmin:+.2f} vs {target:+.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    report(3, ok, f"{'; '.join(lines)} (step {grid[1] - grid[0]:.2f}); {elapsed:.0f} s")
    assert ok


def test_04_2d_eigenstructure(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    worst, a3 = 0.0, 0.0
    for _ in range(100):
        px, pz = rng.uniform(-1.0, 1.0, 2)
        chiN = rng.uniform(-4.0, 4.0)
        H = hd.build_coupling_matrix([px, pz], chiN)
        exact = -math.sqrt((chiN / 2) ** 2 + px**2 + pz**2)
        worst = max(worst, abs(H.eigenvalues()[0] - exact))
        a3 = max(a3, np.max(np.abs(H.matrix[4])), np.max(np.abs(H.matrix[:, 4])))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and a3 == 0.0 and elapsed < 1.0
    report(4, ok, f"max eigenvalue error {worst:.1e}; A_3 row/column max {a3:g}; {elapsed:.3f} s")
    assert ok


@pytest.mark.slow
def test_05_2d_soliton(report):
    t0 = time.perf_counter()
    p = default_params("fig4")
    ens = build_ensemble(p)
    grids = hd_grid(p.sigma_p, 128)
    init = hd.initial_state_hd(ens)
    s0 = np.array(fit_hd_widths(init, ens, grids).sigmas)
    tr = hd.evolve_hd(init, ens, CHI_OPT, p.t_final_natural, p.dt_natural, n_samples=1)
    sx, sz = np.array(fit_hd_widths(tr.final, ens, grids).sigmas) / s0
    tr0 = hd.evolve_hd(init, ens, 0.0, p.t_final_natural, p.dt_natural, n_samples=5)
    free_err = 0.0
    for t, psi in zip(tr0.times[1:], tr0.psi[1:]):
        r = np.array(fit_hd_widths(psi, ens, grids).sigmas) / s0
        free_err = max(free_err, np.max(np.abs(r / ob.free_width_ratio(t, p.sigma_p) - 1)))
    elapsed = time.perf_counter() - t0
    ok = (abs(sx - 1) <= 0.05 and abs(sz - 1) <= 0.05 and abs(sx / sz - 1) <= 0.02
          and free_err <= 0.02 and elapsed < 600)
    report(5, ok, f"chi_opt at 100 tau: sx* {sx:.4f}, sz* {sz:.4f} (5%, x/z within 2%); "
                  f"free-law error {free_err:.2%} (<= 2%); {elapsed:.0f} s")
    assert ok


def test_06_naive_negative_control(report):
    K_grid = [(1.0, 1.0), (1.0, 0.5), (0.7, 1.3), (2.0, -1.0)]
    chi_grid = [c for c in np.linspace(-4.0, 4.0, 33) if c != 0.0]
    worst, smallest = 0.0, math.inf
    for K in K_grid:
        for chi in chi_grid:
            q = hd.naive_quadratic_form(chi, K)
            expected = K[0] * K[1] / (2.0 * chi)
            worst = max(worst, abs(q.cross_coefficient - expected) / abs(expected))
            smallest = min(smallest, abs(q.cross_coefficient))
    nc = naive_control(default_params("fig4"), (1.0, 1.0), t_final=30 * TAU, grid_points=128)
    ok = worst <= 1e-12 and smallest > 0 and nc["axis_ratio"] > 1.1
    report(6, ok, f"cross term rel. error {worst:.1e} over {len(K_grid) * len(chi_grid)} points, "
                  f"min |cross| {smallest:.3f}; axis ratio at 30 tau {nc['axis_ratio']:.4f} (> 1.1)")
    assert ok


@pytest.mark.xfail(strict=True, reason="the self-consistent exchange field differs from the "
                   "static chiN/2 of the closed form by O(sigma_p^2); see README")
def test_07_closed_form_oracle(report):
    worst = {}
    for sigma_p in (0.01, 0.005, 0.001):
        ens = build_ensemble(SimulationParams(sigma_p=sigma_p, n_momentum=41))
        tr = d1.evolve(d1.initial_state(ens), ens, CHI_OPT, 30 * TAU, 1e-3 * TAU, n_samples=30)
        err = 0.0
        for t, psi in zip(tr.times, tr.psi):
            dn, up = d1.closed_form_solution(ens.points[:, 0], CHI_OPT, t)
            err = max(err, np.max(np.abs(psi[:, 0] - dn)), np.max(np.abs(psi[:, 1] - up)))
        worst[sigma_p] = err
    ok = all(e < 1e-5 for e in worst.values())
    report(7, ok, "max amplitude error " + ", ".join(
        f"{e:.1e} at sigma_p={s:g}" for s, e in worst.items()) + " (< 1e-5)")
    assert ok


def test_08_dicke_gap(report):
    n, chi = 4, 1.0
    evals, spins, mags = d1.exchange_spectrum(n, chi)
    worst = float(np.max(np.abs(evals - d1.dicke_energy(spins, mags, chi))))
    gaps = []
    for M in (-1, 0, 1):
        gaps.append(d1.dicke_energy(2, M, chi) - d1.dicke_energy(1, M, chi))
    gap_err = max(abs(g - n * chi) for g in gaps)
    ok = worst <= 1e-12 and gap_err <= 1e-12
    report(8, ok, f"spectrum error {worst:.1e}; gap N chi error {gap_err:.1e} (<= 1e-12)")
    assert ok


def _drift(values, times):
    v = np.asarray(values)
    return np.max(np.abs(v - v[0])) / max(times[-1] / TAU, 1.0)


@pytest.mark.slow
def test_09_conservation(report):
    p = default_params("fig2", n_momentum=101)
    ens = build_ensemble(p)
    init = d1.initial_state(ens, p.theta)
    worst = 0.0
    runs = [dict(chiN=c) for c in (CHI_OPT, 0.0, -CHI_OPT)] + [dict(chiN=0.0, omega=CHI_OPT)]
    for kw in runs:
        tr = d1.evolve(init, ens, kw["chiN"], 30 * TAU, p.dt_natural, omega=kw.get("omega", 0.0),
                       n_samples=30)
        norms = np.abs(tr.psi) ** 2
        worst = max(worst, _drift(norms.sum(axis=-1), tr.times),
                    _drift(d1.magnetization(tr.psi, ens.weights), tr.times),
                    _drift([d1.mean_field_energy(x, ens, kw["chiN"], omega=kw.get("omega", 0.0))
                            for x in tr.psi], tr.times))
    ens2 = build_ensemble(SimulationParams(sigma_p=0.05, n_momentum=21, dimension=2))
    psi0 = hd.initial_state_hd(ens2)
    tr = hd.evolve_hd(psi0, ens2, CHI_OPT, 10 * TAU, 1e-3 * TAU, n_samples=10)
    worst = max(worst, _drift((np.abs(tr.psi) ** 2).sum(axis=-1), tr.times),
                _drift(hd.magnetization_hd(tr.psi, ens2.weights), tr.times),
                _drift([hd.mean_field_energy_hd(x, ens2, CHI_OPT) for x in tr.psi], tr.times))
    u1 = 0.0
    for phi in (0.4, 2.0, 5.1):
        a = d1.evolve(init, ens, CHI_OPT, 10 * TAU, p.dt_natural).final
        b = d1.evolve(d1.initial_state(ens, p.theta, phi), ens, CHI_OPT, 10 * TAU,
                      p.dt_natural).final
        u1 = max(u1, np.max(np.abs(b[:, 0] - a[:, 0])),
                 np.max(np.abs(b[:, 1] - np.exp(1j * phi) * a[:, 1])))
        rot = psi0.copy()
        rot[:, 1:] *= np.exp(1j * phi)
        hb = hd.evolve_hd(rot, ens2, CHI_OPT, 2 * TAU, 1e-3 * TAU).final
        ha = hd.evolve_hd(psi0, ens2, CHI_OPT, 2 * TAU, 1e-3 * TAU).final
        u1 = max(u1, np.max(np.abs(hb[:, 0] - ha[:, 0])),
                 np.max(np.abs(hb[:, 1:] - np.exp(1j * phi) * ha[:, 1:])))
    ok = worst <= 1e-8 and u1 <= 1e-10
    report(9, ok, f"max drift per tau {worst:.1e} (<= 1e-8); U(1) covariance {u1:.1e} (<= 1e-10)")
    assert ok


def test_10_dissipation_rates(report):
    n_atoms, worst = 1000, 0.0
    for frac in (1e-3, 1e-2):
        gamma = frac * abs(CHI_OPT)
        s0 = ds.CollectiveBloch.from_angles(n_atoms, math.pi / 3)
        tr = ds.evolve_bloch(s0, CHI_OPT, gamma, gamma, 3.0 / gamma, 1.0 / (2000 * gamma),
                             sample_every=100)
        rt = ds.fit_decay_rate(tr.times, tr.transverse)
        rz = ds.fit_decay_rate(tr.times, np.abs(tr.S_Z))
        worst = max(worst, abs(rt / gamma - 1), abs(rz / (2 * gamma) - 1))
    ns = np.array([100, 1000, 10000])
    per_atom = np.array([ds.superradiant_drift(int(m), 0.0, 1e-3) / (0.5 * m) for m in ns])
    slope = np.polyfit(np.log(ns), np.log(np.abs(per_atom)), 1)[0]
    ok = worst <= 0.01 and abs(slope - 1) <= 0.01
    report(10, ok, f"max rate error {worst:.1e} (<= 1%); per-atom drift log-slope in N "
                   f"{slope:.4f} over N = 100..10000")
    assert ok


@pytest.mark.slow
def test_11_detection_ordering(report):
    p = default_params("detect")
    c = {}
    for chi in (CHI_OPT, 0.0, -CHI_OPT):
        c[chi] = ob.interferometer_sequence(p, chi, CHI_OPT, echo=True, n_samples=15)
    final = {k: float(v.contrast[-1]) for k, v in c.items()}
    floor = float(c[CHI_OPT].contrast.min())
    ok = final[CHI_OPT] > final[0.0] > final[-CHI_OPT] and floor >= 0.99
    report(11, ok, f"C(chi_opt) {final[CHI_OPT]:.5f} > C(0) {final[0.0]:.4f} > "
                   f"C(-chi_opt) {final[-CHI_OPT]:.4f}; min C(chi_opt) {floor:.5f} (>= 0.99)")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main(["-s", "-q", __file__]))
