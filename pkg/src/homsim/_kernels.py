"""Hot trajectory-stepping kernels.

Two interchangeable backends produce the same record layout:

* "numba": per-trajectory @njit loops with early exit after the second
  click.  Compiled lazily, cached on disk, nogil so chunks parallelize on
  threads.
* "numpy": pure-numpy lock-step batch evolution of a whole chunk; selected
  automatically when numba is unavailable or the HOMSIM_DISABLE_NUMBA
  environment flag is set.

Both consume one pregenerated uniform per trajectory step (first-order
sampling) or four per trajectory (norm-threshold sampling), so a given
seed substream yields the same record regardless of chunking or worker
count within a backend.

State bookkeeping is norm-preserving: a collapse rescales J|psi> back to
the pre-jump norm instead of to unity.  The per-step hazard ra*dt/n2 is
scale invariant, so sampled records are unchanged, while the running norm
then satisfies  norm2(end) + sum over steps of (Pi_a+Pi_b) dt = 1  up to
integrator error, which is the accounting identity the tests check.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = "HOMSIM_DISABLE_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


HAVE_NUMBA = False
if not _numba_disabled():
    try:
        import numba

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover
        HAVE_NUMBA = False


def default_backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def available_backends() -> tuple:
    return ("numba", "numpy") if HAVE_NUMBA else ("numpy",)


# halvings in the dyadic step ladder used to locate threshold crossings;
# dt / 2**46 is far below any meaningful time resolution
LADDER_DEPTH = 46


def step_ladder(h_nh: np.ndarray, dt: float) -> np.ndarray:
    """Stack of exp(-i H dt / 2**k) for k = 0 .. LADDER_DEPTH."""
    from scipy.linalg import expm

    dim = h_nh.shape[0]
    out = np.empty((LADDER_DEPTH + 1, dim, dim), dtype=np.complex128)
    for k in range(LADDER_DEPTH + 1):
        out[k] = expm(-1j * (dt / 2.0**k) * h_nh)
    return out


# ---------------------------------------------------------------------------
# first-order per-step Bernoulli sampling
# ---------------------------------------------------------------------------

def _first_order_chunk(u2, u1, ja2, jb2, ja1, jb1, dt, uniforms,
                       times, dets, n_clicks, resid, consumed, max_p):
    """Per-trajectory stepping.

    One uniform per step decides jump-vs-no-jump and the detector at once:
    u < ra dt/n2 clicks 'a', u < (ra+rb) dt/n2 clicks 'b', else the state
    propagates by one step.  A click is recorded at the end of its step, so
    click times sit on the dt grid.
    """
    n_traj = uniforms.shape[0]
    n_steps = uniforms.shape[1]
    dim2 = u2.shape[0]
    dim1 = u1.shape[0]
    for b in range(n_traj):
        psi2 = np.zeros(dim2, dtype=np.complex128)
        psi2[0] = 1.0
        psi1 = np.zeros(dim1, dtype=np.complex128)
        stage = 2
        nc = 0
        n2 = 1.0
        cons = 0.0
        mp = 0.0
        for step in range(n_steps):
            if stage == 2:
                ya = ja2 @ psi2
                yb = jb2 @ psi2
                ra = np.sum(ya.real**2 + ya.imag**2)
                rb = np.sum(yb.real**2 + yb.imag**2)
            else:
                za = np.dot(ja1, psi1)
                zb = np.dot(jb1, psi1)
                ya = psi1  # unused; keeps types uniform
                yb = psi1
                ra = za.real**2 + za.imag**2
                rb = zb.real**2 + zb.imag**2
            p_tot = (ra + rb) * dt / n2
            if p_tot > mp:
                mp = p_tot
            cons += (ra + rb) * dt
            u = uniforms[b, step]
            if u < p_tot:
                det = 0 if u < ra * dt / n2 else 1
                times[b, nc] = (step + 1) * dt
                dets[b, nc] = det
                nc += 1
                if stage == 2:
                    r = ra if det == 0 else rb
                    scale = math.sqrt(n2 / r)
                    if det == 0:
                        for i in range(dim1):
                            psi1[i] = ya[i] * scale
                    else:
                        for i in range(dim1):
                            psi1[i] = yb[i] * scale
                    stage = 1
                else:
                    stage = 0
                    break
            else:
                if stage == 2:
                    psi2 = u2 @ psi2
                    n2 = np.sum(psi2.real**2 + psi2.imag**2)
                else:
                    psi1 = u1 @ psi1
                    n2 = np.sum(psi1.real**2 + psi1.imag**2)
        n_clicks[b] = nc
        resid[b] = n2
        consumed[b] = cons
        max_p[b] = mp


def _rows_norm2(x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", x.real, x.real) + np.einsum("ij,ij->i", x.imag, x.imag)


def _first_order_chunk_numpy(u2, u1, ja2, jb2, ja1, jb1, dt, uniforms,
                             times, dets, n_clicks, resid, consumed, max_p):
    """Lock-step batch version of the first-order kernel."""
    n_traj, n_steps = uniforms.shape
    psi2 = np.zeros((n_traj, u2.shape[0]), dtype=np.complex128)
    psi2[:, 0] = 1.0
    psi1 = np.zeros((n_traj, u1.shape[0]), dtype=np.complex128)
    stage = np.full(n_traj, 2, dtype=np.int8)
    n2 = np.ones(n_traj)
    u2t = np.ascontiguousarray(u2.T)
    u1t = np.ascontiguousarray(u1.T)
    ja2t = np.ascontiguousarray(ja2.T)
    jb2t = np.ascontiguousarray(jb2.T)
    for step in range(n_steps):
        fresh = np.zeros(n_traj, dtype=bool)  # collapsed 2->1 during this step
        idx2 = np.nonzero(stage == 2)[0]
        if idx2.size:
            s = psi2[idx2]
            ya = s @ ja2t
            yb = s @ jb2t
            ra = _rows_norm2(ya)
            rb = _rows_norm2(yb)
            m2 = n2[idx2]
            p_tot = (ra + rb) * dt / m2
            max_p[idx2] = np.maximum(max_p[idx2], p_tot)
            consumed[idx2] += (ra + rb) * dt
            u = uniforms[idx2, step]
            hit = u < p_tot
            det_a = u < ra * dt / m2
            prop = s[~hit] @ u2t
            psi2[idx2[~hit]] = prop
            n2[idx2[~hit]] = _rows_norm2(prop)
            if np.any(hit):
                rows = idx2[hit]
                r = np.where(det_a[hit], ra[hit], rb[hit])
                y = np.where(det_a[hit][:, None], ya[hit], yb[hit])
                psi1[rows] = y * np.sqrt(m2[hit] / r)[:, None]
                times[rows, 0] = (step + 1) * dt
                dets[rows, 0] = np.where(det_a[hit], 0, 1)
                stage[rows] = 1
                fresh[rows] = True
        idx1 = np.nonzero((stage == 1) & ~fresh)[0]
        if idx1.size:
            s = psi1[idx1]
            za = s @ ja1
            zb = s @ jb1
            ra = za.real**2 + za.imag**2
            rb = zb.real**2 + zb.imag**2
            m2 = n2[idx1]
            p_tot = (ra + rb) * dt / m2
            max_p[idx1] = np.maximum(max_p[idx1], p_tot)
            consumed[idx1] += (ra + rb) * dt
            u = uniforms[idx1, step]
            hit = u < p_tot
            det_a = u < ra * dt / m2
            prop = s[~hit] @ u1t
            psi1[idx1[~hit]] = prop
            n2[idx1[~hit]] = _rows_norm2(prop)
            if np.any(hit):
                rows = idx1[hit]
                times[rows, 1] = (step + 1) * dt
                dets[rows, 1] = np.where(det_a[hit], 0, 1)
                stage[rows] = 0
        if not np.any(stage > 0):
            break
    n_clicks[:] = 2 - stage
    resid[:] = n2


# ---------------------------------------------------------------------------
# norm-threshold (waiting-time) sampling
# ---------------------------------------------------------------------------

def _refine_crossing(ladder, psi, thr, t0, dt):
    """Walk the dyadic ladder from psi (norm2 > thr at t0) to the crossing."""
    t = t0
    cur = psi.copy()
    for k in range(1, ladder.shape[0]):
        trial = ladder[k] @ cur
        m2 = np.sum(trial.real**2 + trial.imag**2)
        if m2 > thr:
            cur = trial
            t = t + dt / 2.0**k
    return cur, t


def _threshold_chunk(lad2, lad1, ja2, jb2, ja1, jb1, dt, t_max, uniforms,
                     times, dets, n_clicks, resid, consumed, max_p):
    """Waiting-time sampling: integrate until norm2 hits a drawn threshold.

    uniforms holds (u_thr1, u_det1, u_thr2, u_det2) per trajectory; click
    times are continuous, resolved on the dyadic ladder.  The march may
    overshoot t_max by less than one step before censoring.
    """
    n_traj = uniforms.shape[0]
    dim2 = lad2.shape[1]
    dim1 = lad1.shape[1]
    u2 = lad2[0]
    u1 = lad1[0]
    for b in range(n_traj):
        psi2 = np.zeros(dim2, dtype=np.complex128)
        psi2[0] = 1.0
        psi1 = np.zeros(dim1, dtype=np.complex128)
        stage = 2
        nc = 0
        n2 = 1.0
        t = 0.0
        while stage > 0 and t < t_max - 1e-12:
            thr = uniforms[b, 2 * nc] * n2
            crossed = False
            while t < t_max - 1e-12:
                if stage == 2:
                    nxt = u2 @ psi2
                else:
                    nxt = u1 @ psi1
                m2 = np.sum(nxt.real**2 + nxt.imag**2)
                if m2 <= thr:
                    crossed = True
                    break
                if stage == 2:
                    psi2 = nxt
                else:
                    psi1 = nxt
                n2 = m2
                t += dt
            if not crossed:
                break
            if stage == 2:
                cur, tc = _refine_crossing(lad2, psi2, thr, t, dt)
                ya = ja2 @ cur
                yb = jb2 @ cur
                ra = np.sum(ya.real**2 + ya.imag**2)
                rb = np.sum(yb.real**2 + yb.imag**2)
            else:
                cur, tc = _refine_crossing(lad1, psi1, thr, t, dt)
                za = np.dot(ja1, cur)
                zb = np.dot(jb1, cur)
                ya = cur
                yb = cur
                ra = za.real**2 + za.imag**2
                rb = zb.real**2 + zb.imag**2
            det = 0 if uniforms[b, 2 * nc + 1] < ra / (ra + rb) else 1
            times[b, nc] = tc
            dets[b, nc] = det
            nc += 1
            n2 = thr
            if stage == 2:
                r = ra if det == 0 else rb
                scale = math.sqrt(thr / r)
                if det == 0:
                    for i in range(dim1):
                        psi1[i] = ya[i] * scale
                else:
                    for i in range(dim1):
                        psi1[i] = yb[i] * scale
                stage = 1
                t = tc
            else:
                stage = 0
        n_clicks[b] = nc
        resid[b] = n2
        consumed[b] = 1.0 - n2
        max_p[b] = 0.0


def _threshold_chunk_numpy(lad2, lad1, ja2, jb2, ja1, jb1, dt, t_max, uniforms,
                           times, dets, n_clicks, resid, consumed, max_p):
    """Lock-step batch version of the threshold kernel.

    Rows march together in steps of dt from their own segment start times;
    rows that cross their threshold are refined individually on the dyadic
    ladder (at most two refinements per trajectory).
    """
    n_traj = uniforms.shape[0]
    u2t = np.ascontiguousarray(lad2[0].T)
    u1t = np.ascontiguousarray(lad1[0].T)
    psi2 = np.zeros((n_traj, lad2.shape[1]), dtype=np.complex128)
    psi2[:, 0] = 1.0
    psi1 = np.zeros((n_traj, lad1.shape[1]), dtype=np.complex128)
    stage = np.full(n_traj, 2, dtype=np.int8)
    n2 = np.ones(n_traj)
    nc = np.zeros(n_traj, dtype=np.int64)
    t_row = np.zeros(n_traj)
    thr = uniforms[:, 0].copy()

    def collapse(row, cur, tc):
        if stage[row] == 2:
            ya = ja2 @ cur
            yb = jb2 @ cur
            ra = float(np.sum(ya.real**2 + ya.imag**2))
            rb = float(np.sum(yb.real**2 + yb.imag**2))
        else:
            ra = abs(np.dot(ja1, cur)) ** 2
            rb = abs(np.dot(jb1, cur)) ** 2
        k = nc[row]
        det = 0 if uniforms[row, 2 * k + 1] < ra / (ra + rb) else 1
        times[row, k] = tc
        dets[row, k] = det
        nc[row] = k + 1
        n2[row] = thr[row]
        if stage[row] == 2:
            y = (ja2 @ cur) if det == 0 else (jb2 @ cur)
            r = ra if det == 0 else rb
            psi1[row] = y * math.sqrt(thr[row] / r)
            stage[row] = 1
            t_row[row] = tc
            thr[row] = uniforms[row, 2] * thr[row]
        else:
            stage[row] = 0

    max_iter = int(np.floor(t_max / dt + 1e-9)) + 3
    for _ in range(max_iter):
        any_active = False
        for sec, psi, ut, lad in ((2, psi2, u2t, lad2), (1, psi1, u1t, lad1)):
            idx = np.nonzero((stage == sec) & (t_row < t_max - 1e-12))[0]
            if not idx.size:
                continue
            any_active = True
            nxt = psi[idx] @ ut
            m2 = _rows_norm2(nxt)
            crossed = m2 <= thr[idx]
            keep = idx[~crossed]
            psi[keep] = nxt[~crossed]
            n2[keep] = m2[~crossed]
            t_row[keep] += dt
            for row in idx[crossed]:
                cur, tc = _refine_crossing(lad, psi[row], thr[row], t_row[row], dt)
                collapse(row, cur, tc)
        if not any_active:
            break
    n_clicks[:] = nc
    resid[:] = n2
    consumed[:] = 1.0 - n2
    max_p[:] = 0.0


# ---------------------------------------------------------------------------
# backend dispatch
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    # rebind so the jitted threshold kernel resolves the jitted helper
    _refine_crossing = numba.njit(cache=True, nogil=True)(_refine_crossing)
    _first_order_chunk_numba = numba.njit(cache=True, nogil=True)(_first_order_chunk)
    _threshold_chunk_numba = numba.njit(cache=True, nogil=True)(_threshold_chunk)
else:  # pragma: no cover - exercised via the env flag in a subprocess
    _first_order_chunk_numba = None
    _threshold_chunk_numba = None


def run_chunk(backend: str, sampling: str, mats: dict, dt: float, t_max: float,
              uniforms: np.ndarray):
    """Run one chunk of trajectories; returns the raw record arrays."""
    n_traj = uniforms.shape[0]
    times = np.zeros((n_traj, 2))
    dets = np.full((n_traj, 2), -1, dtype=np.int8)
    n_clicks = np.zeros(n_traj, dtype=np.int64)
    resid = np.ones(n_traj)
    consumed = np.zeros(n_traj)
    max_p = np.zeros(n_traj)
    if backend not in available_backends():
        raise ValueError(f"backend {backend!r} not available (have {available_backends()})")
    if sampling == "first-order":
        args = (mats["u2"], mats["u1"], mats["ja2"], mats["jb2"], mats["ja1"],
                mats["jb1"], dt, uniforms, times, dets, n_clicks, resid,
                consumed, max_p)
        if backend == "numba":
            _first_order_chunk_numba(*args)
        else:
            _first_order_chunk_numpy(*args)
    elif sampling == "norm-threshold":
        args = (mats["lad2"], mats["lad1"], mats["ja2"], mats["jb2"], mats["ja1"],
                mats["jb1"], dt, t_max, uniforms, times, dets, n_clicks, resid,
                consumed, max_p)
        if backend == "numba":
            _threshold_chunk_numba(*args)
        else:
            _threshold_chunk_numpy(*args)
    else:
        raise ValueError(f"unknown sampling mode {sampling!r}")
    return times, dets, n_clicks, resid, consumed, max_p
