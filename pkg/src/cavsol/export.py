"""Deterministic CSV/JSON writers and result manifests."""

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from cavsol.core import TAU, UNITS

CODE_VERSION = "0.1.0"

UNIT_NOTES = {
    "hbar": UNITS.hbar,
    "M": UNITS.mass,
    "k": UNITS.k,
    "E_R": UNITS.recoil_energy,
    "tau": TAU,
    "time": "natural units (t_over_tau columns give multiples of tau)",
    "momentum": "units of hbar k",
    "position": "units of 1/k",
    "energy": "units of hbar times natural frequency (E_R = 1/2)",
}


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def params_hash(params_dict):
    blob = json.dumps(_jsonable(params_dict), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv(path, header, rows, meta=None):
    """Write rows with round-trip float formatting and optional ``# key: value`` lines."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path):
    """Read a file written by :func:`write_csv`; returns (header, rows of str)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_json(path, obj):
    path = Path(path)
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def sha256_file(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def csv_meta(params_dict, **extra):
    meta = {"code_version": CODE_VERSION, "params_hash": params_hash(params_dict),
            "units": "hbar=M=k=1, E_R=0.5, tau=pi"}
    meta.update(extra)
    return meta


def write_trajectory_csv(path, trajectory, ensemble, params_dict=None, component_names=None):
    """Rows (t, p..., Re/Im of every component) per sample time and ensemble point."""
    psi = np.asarray(trajectory.psi)
    m = psi.shape[-1]
    d = ensemble.dimension
    names = component_names or (["down", "up"] if m == 2 else [f"c{i}" for i in range(m)])
    paxes = {1: ["p"], 2: ["p_x", "p_z"], 3: ["p_x", "p_y", "p_z"]}[d]
    header = ["t"] + paxes + [f"{part}_{n}" for n in names for part in ("re", "im")]

    def rows():
        for i, t in enumerate(trajectory.times):
            for n in range(ensemble.size):
                amp = psi[i, n]
                yield [t, *ensemble.points[n],
                       *[v for a in amp for v in (a.real, a.imag)]]

    return write_csv(path, header, rows(), csv_meta(params_dict or {}))


def write_density_csv(path, profiles, params_dict=None):
    """Branch densities on a shared grid: (z, rho_down, rho_up) or flattened 2D/3D.

    ``profiles`` maps a branch name to a :class:`~cavsol.observables.DensityProfile`.
    """
    first = next(iter(profiles.values()))
    grids = first.grids
    axes = ["z"] if len(grids) == 1 else ["x", "z"] if len(grids) == 2 else ["x", "y", "z"]
    mesh = np.meshgrid(*grids, indexing="ij")
    cols = [g.ravel() for g in mesh] + [p.density.ravel() for p in profiles.values()]
    header = axes + [f"rho_{b}" for b in profiles]
    meta = csv_meta(params_dict or {}, t=first.time,
                    populations=" ".join(f"{b}={p.population!r}" for b, p in profiles.items()))
    return write_csv(path, header, zip(*cols), meta)
