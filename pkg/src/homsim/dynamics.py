"""No-jump propagation and instantaneous detection observables.

The sub-normalized no-jump state evolves under the non-Hermitian generator
(i d/dt |psi> = H_NH |psi>), so its squared norm is the probability that no
detector has clicked yet.  Equal-time joint densities are expectation
values of normally ordered products of the output-field operators on that
state.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import IntegratorError, SectorMismatchError
from .hilbert import SECTOR_DIMS, StateVector, initial_state, norm_squared
from .operators import OperatorSet, SectorOperator, SystemParams, build_operator_set

_METHODS = ("expm", "rk4")


@dataclass(frozen=True)
class PropagatorConfig:
    """Fixed-step integration settings (times in units of 1/kappa)."""

    dt: float = 0.1
    method: str = "expm"
    tol: float = 1e-9

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")


@dataclass
class DensityTrace:
    """Equal-time joint detection densities on a time grid.

    p2 is the same-detector (aa/bb) density and p11 the cross-detector
    (ab/ba) density, both already multiplied by the reporting interval
    delta_t.
    """

    times: np.ndarray
    p2: np.ndarray
    p11: np.ndarray
    delta_t: float
    meta: dict = field(default_factory=dict)

    def to_csv(self, file=None, per_unit_time: bool = False) -> str:
        scale = 1.0 / self.delta_t if per_unit_time else 1.0
        buf = io.StringIO()
        for line in self.meta.get("header_lines", ()):
            buf.write(f"# {line}\n")
        buf.write(f"# delta_t_applied={not per_unit_time}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "p2", "p11"])
        for t, a, b in zip(self.times, self.p2, self.p11):
            w.writerow([repr(float(t)), repr(float(a * scale)), repr(float(b * scale))])
        text = buf.getvalue()
        if file is not None:
            file.write(text)
        return text


def _step_matrix(h: np.ndarray, dt: float) -> np.ndarray:
    return expm(-1j * dt * h)


def _rk4_step(h: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    k1 = -1j * (h @ v)
    k2 = -1j * (h @ (v + 0.5 * dt * k1))
    k3 = -1j * (h @ (v + 0.5 * dt * k2))
    k4 = -1j * (h @ (v + dt * k3))
    return v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate(h: SectorOperator, v: StateVector, t: float,
              cfg: PropagatorConfig = PropagatorConfig()) -> StateVector:
    """Evolve v for a duration t under exp(-i h t).

    The 'expm' method composes a precomputed full-step matrix with one
    remainder step and is exact at machine precision; 'rk4' is a fixed-step
    4th-order integrator.  Raises IntegratorError if the norm grows beyond
    cfg.tol (the generator should only ever shrink it).
    """
    if h.source_sector != h.target_sector or h.source_sector != v.sector:
        raise SectorMismatchError("propagation needs a square operator on the state's sector")
    if t < 0:
        raise ValueError(f"duration must be nonnegative, got {t}")
    if t == 0:
        return v.copy()
    n0 = norm_squared(v)
    amps = v.amplitudes.copy()
    if cfg.method == "expm":
        n_full = int(t / cfg.dt)
        rem = t - n_full * cfg.dt
        if n_full > 0:
            u = _step_matrix(h.entries, cfg.dt)
            for _ in range(n_full):
                amps = u @ amps
        if rem > 1e-15 * max(t, 1.0):
            amps = _step_matrix(h.entries, rem) @ amps
    else:
        n_steps = max(1, int(np.ceil(t / cfg.dt)))
        dt_eff = t / n_steps
        for _ in range(n_steps):
            amps = _rk4_step(h.entries, amps, dt_eff)
    out = StateVector(v.sector, amps)
    # inverted comparison so NaN from a blown-up integration also trips it
    if not (norm_squared(out) <= n0 * (1.0 + cfg.tol) + cfg.tol):
        raise IntegratorError(
            f"norm grew during propagation (method={cfg.method}, dt={cfg.dt}); "
            "reduce the step size"
        )
    return out


def detection_rates(ops: OperatorSet, v: StateVector) -> tuple:
    """Instantaneous click rates (Pi_a, Pi_b) = <v|J^dag J|v> on the state."""
    if v.sector not in (1, 2):
        raise SectorMismatchError(f"detection rates need sector 1 or 2, got {v.sector}")
    out = []
    for det in ("a", "b"):
        y = ops.jump[(det, v.sector)] @ v.amplitudes
        out.append(float(np.real(np.vdot(y, y))))
    return tuple(out)


def equal_time_densities(ops: OperatorSet, v2: StateVector, delta_t: float) -> tuple:
    """Equal-time joint detection probabilities (P2, P11) in a window delta_t.

    P2 = <a_out^dag2 a_out^2> delta_t  (two clicks at the same detector),
    P11 = <b_out^dag a_out^dag a_out b_out> delta_t  (one click at each),
    evaluated by composing the jump operators, so the amplitude pattern is
    emergent rather than hard-coded.
    """
    if v2.sector != 2:
        raise SectorMismatchError(f"equal-time densities need sector 2, got {v2.sector}")
    amp_aa = ops.jump_product("a", "a") @ v2.amplitudes
    amp_ab = ops.jump_product("b", "a") @ v2.amplitudes
    p2 = float(np.real(np.vdot(amp_aa, amp_aa))) * delta_t
    p11 = float(np.real(np.vdot(amp_ab, amp_ab))) * delta_t
    return p2, p11


def equal_time_densities_from_amplitudes(v2: StateVector, kappa: float,
                                         delta_t: float) -> tuple:
    """Reference amplitude-pattern evaluation of (P2, P11).

    P2 = kappa^2 |sqrt(2) c10 + sqrt(2) c12 + 2 c15|^2 delta_t and
    P11 = kappa^2 |c14 + c16 + c17 + c19|^2 delta_t, with c-indices counted
    from 1 in the canonical two-excitation ordering.
    """
    if v2.sector != 2:
        raise SectorMismatchError(f"equal-time densities need sector 2, got {v2.sector}")
    c = v2.amplitudes
    r2 = np.sqrt(2.0)
    p2 = kappa**2 * abs(r2 * c[9] + r2 * c[11] + 2.0 * c[14]) ** 2 * delta_t
    p11 = kappa**2 * abs(c[13] + c[15] + c[16] + c[18]) ** 2 * delta_t
    return float(p2), float(p11)


def density_scan(p: SystemParams, cfg: PropagatorConfig = PropagatorConfig(),
                 t_max: float | None = None, delta_t: float = 0.1,
                 include_cascade: bool = True) -> DensityTrace:
    """Equal-time densities along the pure no-jump branch from |e00,e00>."""
    ops = build_operator_set(p, include_cascade)
    if t_max is None:
        t_max = decay_horizon(ops.h_nh[2], threshold=1e-4)
    n = int(np.floor(t_max / cfg.dt + 1e-9)) + 1
    times = np.arange(n) * cfg.dt
    u = _step_matrix(ops.h_nh[2], cfg.dt)
    row_aa = ops.jump_product("a", "a")[0]
    row_ab = ops.jump_product("b", "a")[0]
    psi = initial_state().amplitudes
    p2 = np.empty(n)
    p11 = np.empty(n)
    prev_n2 = 1.0
    for i in range(n):
        p2[i] = abs(row_aa @ psi) ** 2 * delta_t
        p11[i] = abs(row_ab @ psi) ** 2 * delta_t
        psi = u @ psi
        n2 = float(np.real(np.vdot(psi, psi)))
        if not (n2 <= prev_n2 * (1.0 + cfg.tol) + cfg.tol):
            raise IntegratorError("no-jump norm grew during density scan")
        prev_n2 = n2
    return DensityTrace(times=times, p2=p2, p11=p11, delta_t=delta_t)


def decay_horizon(h_nh: np.ndarray, threshold: float, state: np.ndarray | None = None,
                  stride: float = 1.0, hard_cap: float = 20000.0,
                  stall_window: int = 16, stall_drop: float = 0.02,
                  min_strides: int = 32) -> float:
    """Time for the no-jump squared norm to fall below a threshold.

    Marches in coarse strides and stops early once the decay has stalled
    (long-lived almost-dark components exist at strong coupling, and at
    g=0 the norm never decays at all); the horizon then leaves a reported
    remainder instead of chasing an exponentially long tail.  A warning is
    emitted whenever the threshold was not reached.
    """
    dim = h_nh.shape[0]
    if state is None:
        if dim == SECTOR_DIMS[2]:
            psi = initial_state().amplitudes.copy()
        else:
            # generic overlap with every mode of the sector
            psi = np.ones(dim, dtype=np.complex128) / np.sqrt(dim)
    else:
        psi = state.astype(np.complex128) / np.linalg.norm(state)
    u = _step_matrix(h_nh, stride)
    history = [1.0]
    t = 0.0
    while t < hard_cap:
        psi = u @ psi
        t += stride
        n2 = float(np.real(np.vdot(psi, psi)))
        history.append(n2)
        if n2 < threshold:
            return t
        if len(history) > max(stall_window, min_strides):
            past = history[-1 - stall_window]
            if past <= 0 or (past - n2) / past < stall_drop:
                warnings.warn(
                    f"no-jump norm stalled at {n2:.3e} (threshold {threshold:.1e}); "
                    f"using horizon t={t:g}", stacklevel=2)
                return t
    warnings.warn(
        f"no-jump norm {history[-1]:.3e} above threshold {threshold:.1e} at the "
        f"hard cap t={hard_cap:g}", stacklevel=2)
    return hard_cap


def trace_metadata(p: SystemParams, cfg: PropagatorConfig, delta_t: float,
                   include_cascade: bool, version: str) -> dict:
    """Header metadata embedded in density CSV exports."""
    return {
        "header_lines": [
            "config=" + json.dumps({
                "g_l": repr(p.g_l), "g_r": repr(p.g_r), "kappa": p.kappa,
                "delta": p.delta, "frame": p.frame, "dt": cfg.dt,
                "method": cfg.method, "delta_t": delta_t,
                "cascade_term": "on" if include_cascade else "off",
            }, sort_keys=True),
            f"version={version}",
        ]
    }
