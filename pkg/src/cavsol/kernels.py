"""RK4 propagation kernel with a compiled core and a numpy fallback.

The kernel integrates, for every ensemble point ``i`` and component ``k``,

    i d psi[i, k]/dt = sum_q H[i, q] psi[i, col_q]   (rows[q] == k)
                       + g_a psi[i, b]   (k == a)
                       + g_b psi[i, a]   (k == b)

with the self-consistent coupling ``g_a = chiN * C + omega / 2`` and
``g_b = chiN * conj(C) + omega / 2``, where ``C = sum_i w_i conj(psi[i, b]) psi[i, a]``.
The single-particle matrix is stored sparsely: ``hvals[:, q]`` holds the entry
at ``(rows[q], cols[q])`` for every point.

The compiled extension ``cavsol._rk4`` is used when importable. Setting the
environment variable ``CAVSOL_PURE_PYTHON=1`` forces the numpy path.
"""

import os

import numpy as np

try:
    if os.environ.get("CAVSOL_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from cavsol._rk4 import rk4_propagate as _compiled_propagate
except ImportError:
    _compiled_propagate = None

BACKEND = "compiled" if _compiled_propagate is not None else "python"


class NumericalAbort(RuntimeError):
    """Raised when an integration produces non-finite amplitudes."""


def _py_derivative(psi, hvals, rows, cols, w, chiN, omega, a, b):
    n, m = psi.shape
    coll = np.sum(w * np.conj(psi[:, b]) * psi[:, a])
    out = np.zeros_like(psi)
    contrib = hvals * psi[:, cols]
    for k in range(m):
        sel = rows == k
        if sel.any():
            out[:, k] = contrib[:, sel].sum(axis=1)
    out[:, a] += (chiN * coll + 0.5 * omega) * psi[:, b]
    out[:, b] += (chiN * np.conj(coll) + 0.5 * omega) * psi[:, a]
    return -1j * out


def py_rk4_propagate(psi0, hvals, rows, cols, w, chiN, omega, a, b, dt,
                     n_steps, sample_every):
    """Pure numpy twin of the compiled propagator (same signature and output)."""
    psi = np.array(psi0, dtype=np.complex128, copy=True)
    n_samples = n_steps // sample_every + 1
    out = np.empty((n_samples,) + psi.shape, dtype=np.complex128)
    out[0] = psi
    s = 1
    args = (hvals, rows, cols, w, chiN, omega, a, b)
    for step in range(1, n_steps + 1):
        k1 = _py_derivative(psi, *args)
        k2 = _py_derivative(psi + 0.5 * dt * k1, *args)
        k3 = _py_derivative(psi + 0.5 * dt * k2, *args)
        k4 = _py_derivative(psi + dt * k3, *args)
        psi = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % sample_every == 0:
            if not np.all(np.isfinite(psi)):
                raise FloatingPointError(f"non-finite amplitude at step {step}")
            out[s] = psi
            s += 1
    return out


def derivative(psi, hvals, rows, cols, w, chiN=0.0, omega=0.0, a=0, b=1):
    """Return d psi/dt for the kernel equations (numpy, used outside the hot loop)."""
    hvals, rows, cols, w = _coerce(hvals, rows, cols, w)
    return _py_derivative(np.asarray(psi, dtype=np.complex128), hvals, rows,
                          cols, w, float(chiN), float(omega), int(a), int(b))


def _coerce(hvals, rows, cols, w):
    return (np.ascontiguousarray(hvals, dtype=np.float64),
            np.ascontiguousarray(rows, dtype=np.int32),
            np.ascontiguousarray(cols, dtype=np.int32),
            np.ascontiguousarray(w, dtype=np.float64))


def propagate(psi0, hvals, rows, cols, w, *, chiN=0.0, omega=0.0, a=0, b=1,
              dt, n_steps, sample_every=1, backend=None):
    """Integrate ``n_steps`` RK4 steps of size ``dt`` and return sampled states.

    Parameters
    ----------
    psi0 : ndarray, shape (n, m)
        Initial amplitudes.
    hvals, rows, cols : ndarray
        Sparse per-point single-particle matrix (see module docstring).
    w : ndarray, shape (n,)
        Ensemble weights entering the collective bilinear.
    chiN, omega : float
        Self-consistent exchange strength and fixed transverse drive.
    a, b : int
        Component indices coupled by the exchange/drive term.
    backend : {"compiled", "python", None}
        ``None`` picks the compiled kernel when available.

    Returns
    -------
    ndarray, shape (n_steps // sample_every + 1, n, m)
    """
    if n_steps < 0 or sample_every < 1:
        raise ValueError("n_steps must be >= 0 and sample_every >= 1")
    psi0 = np.ascontiguousarray(psi0, dtype=np.complex128)
    hvals, rows, cols, w = _coerce(hvals, rows, cols, w)
    if hvals.shape != (psi0.shape[0], rows.size) or rows.size != cols.size:
        raise ValueError("hvals must have shape (n_points, n_entries)")
    if backend is None:
        backend = BACKEND
    if backend == "compiled":
        if _compiled_propagate is None:
            raise RuntimeError("compiled kernel is not available")
        fn = _compiled_propagate
    elif backend == "python":
        fn = py_rk4_propagate
    else:
        raise ValueError(f"unknown backend {backend!r}")
    try:
        return fn(psi0, hvals, rows, cols, w, float(chiN), float(omega),
                  int(a), int(b), float(dt), int(n_steps), int(sample_every))
    except FloatingPointError as exc:
        raise NumericalAbort(
            f"integration diverged ({exc}); dt={dt:g}, chiN={chiN:g}") from exc


def integrate(psi0, ham, w, *, chiN=0.0, omega=0.0, a=0, b=1, n_steps, dt,
              sample_every=1, pulses=None, backend=None):
    """Run :func:`propagate` in segments, applying instantaneous pulses.

    ``ham`` is the ``(hvals, rows, cols)`` triple. ``pulses`` maps a step index
    to a callable ``psi -> psi`` applied after that step; a sample recorded at
    the same step shows the post-pulse state. Samples are taken at multiples
    of ``sample_every`` and at the final step.

    Returns ``(steps, samples)`` with ``steps`` the global step index of each
    sample.
    """
    hvals, rows, cols = ham
    pulses = dict(pulses or {})
    for s in pulses:
        if not 0 <= s <= n_steps:
            raise ValueError(f"pulse step {s} outside [0, {n_steps}]")
    kw = dict(chiN=chiN, omega=omega, a=a, b=b, dt=dt, backend=backend)
    se = int(sample_every)

    def advance(psi, run, every):
        return propagate(psi, hvals, rows, cols, w, n_steps=run,
                         sample_every=every, **kw)

    psi = np.ascontiguousarray(psi0, dtype=np.complex128)
    if 0 in pulses:
        psi = pulses[0](psi)
    steps, samples = [0], [psi]
    pos = 0
    for end in sorted({s for s in pulses if s > 0} | {n_steps}):
        while pos < end:
            nxt = (pos // se + 1) * se
            if nxt > end:
                psi = advance(psi, end - pos, end - pos)[-1]
                pos = end
            elif pos % se == 0:
                run = ((end - pos) // se) * se
                out = advance(psi, run, se)
                steps.extend(pos + j * se for j in range(1, out.shape[0]))
                samples.extend(out[1:])
                psi = out[-1]
                pos += run
            else:
                psi = advance(psi, nxt - pos, nxt - pos)[-1]
                pos = nxt
                steps.append(pos)
                samples.append(psi)
        if end in pulses:
            psi = pulses[end](psi)
            if steps[-1] == end:
                samples[-1] = psi
    if steps[-1] != n_steps:
        steps.append(n_steps)
        samples.append(psi)
    return np.asarray(steps), np.stack(samples)
