"""Stochastic detection records via the quantum jump method.

Each trajectory starts from |e00,e00>, evolves under the no-jump generator
and emits at most two detector clicks.  Trajectory i always consumes
random substream i (PCG64 seeded with SeedSequence(seed, spawn_key=(i,))),
so ensembles are bit-reproducible for a fixed seed regardless of chunking
or worker count.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import _kernels
from .dynamics import decay_horizon, detection_rates
from .errors import ImpossibleJumpError, IntegratorError
from .hilbert import StateVector, norm_squared
from .operators import OperatorSet, SystemParams, build_operator_set

_SAMPLING_MODES = ("first-order", "norm-threshold")
_DETECTOR_NAMES = ("a", "b")


@dataclass(frozen=True)
class ClickEvent:
    detector: str
    time: float


@dataclass(frozen=True)
class TrajectoryResult:
    """Detection record of a single trajectory.

    consumed_probability accumulates the per-step click probabilities, so
    residual_norm2 + consumed_probability is 1 up to integrator error.
    """

    clicks: tuple
    residual_norm2: float
    censored: bool
    consumed_probability: float = float("nan")

    def __post_init__(self):
        if len(self.clicks) > 2:
            raise ValueError("at most two clicks per trajectory")
        if any(c2.time < c1.time for c1, c2 in zip(self.clicks, self.clicks[1:])):
            raise ValueError("clicks must be sorted by time")
        if self.censored != (len(self.clicks) < 2):
            raise ValueError("censored flag must match an incomplete record")


@dataclass(frozen=True)
class EnsembleConfig:
    """Monte Carlo settings; time quantities in units of 1/kappa.

    t_max=None picks the horizon adaptively: the time for the deterministic
    no-jump norm2 to fall below 1e-4 plus a second-click allowance from the
    one-excitation sector (weak coupling has long waiting-time tails, and
    truncating them would bias the same/different-detector split).
    """

    n_traj: int = 10_000
    dt: float = 0.1
    t_max: float | None = None
    seed: int = 0
    jump_sampling: str = "first-order"
    n_workers: int = 1
    backend: str | None = None

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_max is not None and self.t_max <= 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.jump_sampling not in _SAMPLING_MODES:
            raise ValueError(f"jump_sampling must be one of {_SAMPLING_MODES}")
        if self.n_workers < 1:
            raise ValueError(f"n_workers must be >= 1, got {self.n_workers}")
        if self.backend is not None and self.backend not in ("numba", "numpy"):
            raise ValueError(f"backend must be 'numba' or 'numpy', got {self.backend!r}")


def collapse(ops: OperatorSet, v: StateVector, detector: str) -> StateVector:
    """Reset the state after a click: J|v> / sqrt(Pi), unit norm."""
    if detector not in _DETECTOR_NAMES:
        raise ValueError(f"detector must be 'a' or 'b', got {detector!r}")
    if v.sector not in (1, 2):
        raise ImpossibleJumpError(f"no jumps out of sector {v.sector}")
    y = ops.jump[(detector, v.sector)] @ v.amplitudes
    rate = float(np.real(np.vdot(y, y)))
    if rate <= 0.0:
        raise ImpossibleJumpError(
            f"detector {detector!r} has zero click rate on this state")
    return StateVector(v.sector - 1, y / np.sqrt(rate))


def default_t_max(ops: OperatorSet) -> float:
    first = decay_horizon(ops.h_nh[2], threshold=1e-4)
    lag = decay_horizon(ops.h_nh[1], threshold=1e-2)
    return first + lag


def _prepare_mats(ops: OperatorSet, cfg: EnsembleConfig) -> dict:
    c = np.ascontiguousarray
    mats = {
        "ja2": c(ops.jump[("a", 2)]),
        "jb2": c(ops.jump[("b", 2)]),
        "ja1": c(ops.jump[("a", 1)][0]),
        "jb1": c(ops.jump[("b", 1)][0]),
    }
    if cfg.jump_sampling == "first-order":
        mats["u2"] = c(expm(-1j * cfg.dt * ops.h_nh[2]))
        mats["u1"] = c(expm(-1j * cfg.dt * ops.h_nh[1]))
    else:
        mats["lad2"] = _kernels.step_ladder(ops.h_nh[2], cfg.dt)
        mats["lad1"] = _kernels.step_ladder(ops.h_nh[1], cfg.dt)
    return mats


def _uniform_columns(cfg: EnsembleConfig, n_steps: int) -> int:
    return n_steps if cfg.jump_sampling == "first-order" else 4


def _chunk_size(n_cols: int) -> int:
    # keep per-chunk uniforms under ~50 MB; independent of worker count so
    # chunk boundaries (and records) never depend on scheduling
    return max(32, min(512, int(6_000_000 / max(n_cols, 1))))


def _substream_uniforms(seed: int, lo: int, hi: int, n_cols: int) -> np.ndarray:
    u = np.empty((hi - lo, n_cols))
    for i in range(lo, hi):
        ss = np.random.SeedSequence(seed, spawn_key=(i,))
        u[i - lo] = np.random.Generator(np.random.PCG64(ss)).random(n_cols)
    return u


def _records_to_results(times, dets, n_clicks, resid, consumed) -> list:
    out = []
    for i in range(times.shape[0]):
        nc = int(n_clicks[i])
        clicks = tuple(
            ClickEvent(_DETECTOR_NAMES[dets[i, j]], float(times[i, j]))
            for j in range(nc)
        )
        out.append(TrajectoryResult(
            clicks=clicks,
            residual_norm2=float(resid[i]),
            censored=nc < 2,
            consumed_probability=float(consumed[i]),
        ))
    return out


def run_trajectory(p: SystemParams, cfg: EnsembleConfig,
                   rng: np.random.Generator,
                   include_cascade: bool = True) -> TrajectoryResult:
    """Sample one trajectory, consuming uniforms from the given stream."""
    ops = build_operator_set(p, include_cascade)
    t_max = cfg.t_max if cfg.t_max is not None else default_t_max(ops)
    n_steps = int(np.ceil(t_max / cfg.dt - 1e-9))
    mats = _prepare_mats(ops, cfg)
    backend = cfg.backend or _kernels.default_backend()
    uniforms = rng.random((1, _uniform_columns(cfg, n_steps)))
    times, dets, n_clicks, resid, consumed, max_p = _kernels.run_chunk(
        backend, cfg.jump_sampling, mats, cfg.dt, t_max, uniforms)
    _check_step_probability(max_p, cfg.dt)
    return _records_to_results(times, dets, n_clicks, resid, consumed)[0]


def run_ensemble(p: SystemParams, cfg: EnsembleConfig,
                 include_cascade: bool = True) -> list:
    """Sample cfg.n_traj trajectories; deterministic for a fixed seed."""
    ops = build_operator_set(p, include_cascade)
    t_max = cfg.t_max if cfg.t_max is not None else default_t_max(ops)
    n_steps = int(np.ceil(t_max / cfg.dt - 1e-9))
    mats = _prepare_mats(ops, cfg)
    backend = cfg.backend or _kernels.default_backend()
    n_cols = _uniform_columns(cfg, n_steps)
    chunk = _chunk_size(n_cols)

    n = cfg.n_traj
    times = np.zeros((n, 2))
    dets = np.full((n, 2), -1, dtype=np.int8)
    n_clicks = np.zeros(n, dtype=np.int64)
    resid = np.ones(n)
    consumed = np.zeros(n)
    max_p = np.zeros(n)

    def work(lo: int, hi: int):
        u = _substream_uniforms(cfg.seed, lo, hi, n_cols)
        t, d, nc, rs, co, mp = _kernels.run_chunk(
            backend, cfg.jump_sampling, mats, cfg.dt, t_max, u)
        times[lo:hi] = t
        dets[lo:hi] = d
        n_clicks[lo:hi] = nc
        resid[lo:hi] = rs
        consumed[lo:hi] = co
        max_p[lo:hi] = mp

    bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    if cfg.n_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_workers) as pool:
            list(pool.map(lambda a: work(*a), bounds))
    else:
        for lo, hi in bounds:
            work(lo, hi)
    _check_step_probability(max_p, cfg.dt)
    return _records_to_results(times, dets, n_clicks, resid, consumed)


def _check_step_probability(max_p: np.ndarray, dt: float):
    worst = float(max_p.max()) if max_p.size else 0.0
    if worst > 1.0:
        raise IntegratorError(
            f"per-step click probability reached {worst:.3f} > 1; dt={dt} is too coarse")


def clicks_csv(results, file=None, header_lines=()) -> str:
    """Raw record export: traj_id, click_index (1|2), detector, time."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["traj_id", "click_index", "detector", "time"])
    for i, r in enumerate(results):
        for j, c in enumerate(r.clicks):
            w.writerow([i, j + 1, c.detector, repr(float(c.time))])
    text = buf.getvalue()
    if file is not None:
        file.write(text)
    return text


def ensemble_metadata(p: SystemParams, cfg: EnsembleConfig, results,
                      t_max: float, backend: str, version: str,
                      include_cascade: bool = True) -> dict:
    return {
        "params": {
            "g_l": repr(p.g_l), "g_r": repr(p.g_r), "kappa": p.kappa,
            "delta": p.delta, "frame": p.frame,
        },
        "seed": cfg.seed,
        "n_traj": cfg.n_traj,
        "dt": cfg.dt,
        "t_max": t_max,
        "jump_sampling": cfg.jump_sampling,
        "backend": backend,
        "cascade_term": "on" if include_cascade else "off",
        "censored_count": sum(1 for r in results if r.censored),
        "version": version,
    }
