"""Batch front-end: density scans, Monte Carlo ensembles, oracle runs, sweeps.

Configuration precedence is flags > config file (flat key=value lines) >
defaults; the resolved configuration and package version are embedded in
every output file.  Exit codes: 0 success, 2 invalid configuration,
3 numerical failure; errors go to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import default_backend
from .dynamics import PropagatorConfig, density_scan
from .errors import HomsimError
from .operators import SystemParams
from .oracle import joint_density_grid, pair_probabilities
from .stats import HistogramSpec, histograms_csv, summarize, summary_dict
from .trajectory import (EnsembleConfig, clicks_csv, default_t_max,
                         ensemble_metadata, run_ensemble)
from .operators import build_operator_set


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "g": None,
    "g_values": None,
    "delta": 0.5,
    "delta_t": 0.1,
    "dt": 0.1,
    "t_max": None,
    "n_traj": 10_000,
    "seed": 0,
    "bin_width": 0.5,
    "cascade": "on",
    "frame": "rotating",
    "omega_c": None,
    "out_dir": ".",
    "sampling": "first-order",
    "n_workers": 1,
    "backend": None,
    "grid_step": None,
    "grid_points": 81,
    "per_unit_time": False,
    "plot": False,
}

_FLOAT_KEYS = {"g", "delta", "delta_t", "dt", "t_max", "bin_width", "omega_c",
               "grid_step"}
_INT_KEYS = {"n_traj", "seed", "n_workers", "grid_points"}
_BOOL_KEYS = {"per_unit_time", "plot"}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    subcommand: str
    g: float | None
    g_values: tuple | None
    delta: float
    delta_t: float
    dt: float
    t_max: float | None
    n_traj: int
    seed: int
    bin_width: float
    cascade: str
    frame: str
    omega_c: float | None
    out_dir: str
    sampling: str
    n_workers: int
    backend: str | None
    grid_step: float | None
    grid_points: int
    per_unit_time: bool
    plot: bool

    def validate(self):
        if self.subcommand == "sweep":
            if not self.g_values:
                raise ConfigError("sweep needs a nonempty --g-values list")
            if any(g < 0 for g in self.g_values):
                raise ConfigError("g values must be nonnegative")
        else:
            if self.g is None:
                raise ConfigError("--g is required")
            if self.g < 0:
                raise ConfigError(f"g must be nonnegative, got {self.g}")
        for name in ("delta_t", "dt", "bin_width"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.t_max is not None and self.t_max <= 0:
            raise ConfigError("t_max must be positive")
        if self.n_traj < 1:
            raise ConfigError("n_traj must be >= 1")
        if self.n_workers < 1:
            raise ConfigError("n_workers must be >= 1")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be >= 2")
        if self.cascade not in ("on", "off"):
            raise ConfigError("cascade must be 'on' or 'off'")
        if self.frame not in ("rotating", "lab"):
            raise ConfigError("frame must be 'rotating' or 'lab'")
        if self.frame == "lab" and self.omega_c is None:
            raise ConfigError("lab frame requires --omega-c")
        if self.sampling not in ("first-order", "norm-threshold"):
            raise ConfigError("sampling must be 'first-order' or 'norm-threshold'")
        if self.backend is not None and self.backend not in ("numba", "numpy"):
            raise ConfigError("backend must be 'numba' or 'numpy'")

    @property
    def include_cascade(self) -> bool:
        return self.cascade == "on"

    def params(self, g: float | None = None) -> SystemParams:
        gv = self.g if g is None else g
        return SystemParams.symmetric(gv, self.delta, frame=self.frame,
                                      omega_c=self.omega_c)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["g_values"] = list(self.g_values) if self.g_values else None
        d["version"] = __version__
        d["backend_resolved"] = self.backend or default_backend()
        return d


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _INT_KEYS:
        return int(raw)
    if key in _BOOL_KEYS:
        return raw.lower() in ("1", "true", "yes", "on")
    if key == "g_values":
        return tuple(float(x) for x in raw.split(",") if x.strip())
    return raw


def _read_config_file(path: str) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, raw)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2) with plain usage
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="homsim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--g", type=float, help="coupling |g| in units of kappa")
    common.add_argument("--delta", type=float, help="detuning in units of kappa")
    common.add_argument("--delta-t", dest="delta_t", type=float,
                        help="equal-time reporting interval (1/kappa)")
    common.add_argument("--dt", type=float, help="integration step (1/kappa)")
    common.add_argument("--t-max", dest="t_max", type=float,
                        help="time horizon; default adapts to the decay")
    common.add_argument("--n-traj", dest="n_traj", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--bin-width", dest="bin_width", type=float)
    common.add_argument("--cascade", choices=("on", "off"),
                        help="'off' drops the directional inter-cavity term")
    common.add_argument("--frame", choices=("rotating", "lab"))
    common.add_argument("--omega-c", dest="omega_c", type=float)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--sampling", choices=("first-order", "norm-threshold"))
    common.add_argument("--n-workers", dest="n_workers", type=int)
    common.add_argument("--backend", choices=("numba", "numpy"))
    common.add_argument("--grid-step", dest="grid_step", type=float,
                        help="oracle quadrature step (1/kappa)")
    common.add_argument("--grid-points", dest="grid_points", type=int,
                        help="points per axis in the exported density grid")
    common.add_argument("--per-unit-time", dest="per_unit_time",
                        action="store_const", const=True,
                        help="export densities without the delta_t factor")
    common.add_argument("--plot", action="store_const", const=True,
                        help="also write SVG plots")
    for name, help_text in (
        ("densities", "equal-time joint densities along the no-jump branch"),
        ("mc", "Monte Carlo ensemble of detection records"),
        ("oracle", "deterministic pair probabilities and joint densities"),
        ("sweep", "mc + oracle across a list of couplings"),
    ):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        if name == "sweep":
            sp.add_argument("--g-values", dest="g_values",
                            type=lambda s: tuple(float(x) for x in s.split(",") if x.strip()),
                            help="comma-separated couplings, e.g. 0.1,0.25,2,5")
    return parser


def resolve_config(argv) -> RunConfig:
    args = _build_parser().parse_args(argv)
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        merged.update(_read_config_file(args.config))
    for key in merged:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    cfg = RunConfig(subcommand=args.subcommand, **merged)
    cfg.validate()
    return cfg


def _ensure_out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ConfigError(f"out_dir {cfg.out_dir!r} is not writable: {e}") from e
    return out


def _header_lines(cfg: RunConfig, extra: dict | None = None) -> list:
    echo = cfg.echo()
    if extra:
        echo.update(extra)
    lines = ["config=" + json.dumps(echo, sort_keys=True)]
    if not cfg.include_cascade:
        lines.append("variant=cascade-off")
    return lines


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_densities(cfg: RunConfig) -> list:
    out = _ensure_out_dir(cfg)
    trace = density_scan(cfg.params(), PropagatorConfig(dt=cfg.dt),
                         t_max=cfg.t_max, delta_t=cfg.delta_t,
                         include_cascade=cfg.include_cascade)
    trace.meta["header_lines"] = _header_lines(cfg)
    files = [out / "densities.csv"]
    with open(files[0], "w", newline="") as f:
        trace.to_csv(f, per_unit_time=cfg.per_unit_time)
    meta = {"config": cfg.echo(), "t_max": float(trace.times[-1]),
            "n_points": int(trace.times.size)}
    files.append(out / "densities_meta.json")
    _write_json(files[-1], meta)
    if cfg.plot:
        files.append(out / "densities.svg")
        _plot_densities(trace, files[-1])
    return files


def cmd_mc(cfg: RunConfig) -> list:
    out = _ensure_out_dir(cfg)
    params = cfg.params()
    ecfg = EnsembleConfig(n_traj=cfg.n_traj, dt=cfg.dt, t_max=cfg.t_max,
                          seed=cfg.seed, jump_sampling=cfg.sampling,
                          n_workers=cfg.n_workers, backend=cfg.backend)
    if ecfg.t_max is None:
        ops = build_operator_set(params, cfg.include_cascade)
        ecfg = dataclasses.replace(ecfg, t_max=default_t_max(ops))
    results = run_ensemble(params, ecfg, include_cascade=cfg.include_cascade)
    backend = cfg.backend or default_backend()
    meta = ensemble_metadata(params, ecfg, results, ecfg.t_max, backend,
                             __version__, cfg.include_cascade)
    header = _header_lines(cfg, {"t_max_resolved": ecfg.t_max})
    files = [out / "clicks.csv"]
    with open(files[0], "w", newline="") as f:
        clicks_csv(results, f, header_lines=header)
    summary = summarize(results, HistogramSpec(bin_width=cfg.bin_width))
    payload = summary_dict(summary)
    payload["metadata"] = meta
    payload["config"] = cfg.echo()
    files.append(out / "summary.json")
    _write_json(files[-1], payload)
    files.append(out / "histograms.csv")
    with open(files[-1], "w", newline="") as f:
        histograms_csv(summary, f, header_lines=header)
    if cfg.plot:
        files.append(out / "histograms.svg")
        _plot_histograms(summary, files[-1])
    return files


def cmd_oracle(cfg: RunConfig) -> list:
    out = _ensure_out_dir(cfg)
    params = cfg.params()
    pp = pair_probabilities(params, t_max=cfg.t_max, step=cfg.grid_step,
                            include_cascade=cfg.include_cascade)
    payload = pp.summary_dict()
    payload["config"] = cfg.echo()
    payload["version"] = __version__
    files = [out / "pair_probabilities.json"]
    _write_json(files[0], payload)
    span = min(pp.t_max, 40.0 / max(1e-12, params.kappa))
    h = span / (cfg.grid_points - 1)
    times = np.arange(cfg.grid_points) * h
    grid = joint_density_grid(params, times, include_cascade=cfg.include_cascade)
    files.append(out / "joint_density.csv")
    with open(files[-1], "w", newline="") as f:
        grid.to_csv(f, header_lines=_header_lines(cfg, {"t_max_resolved": pp.t_max}))
    return files


def cmd_sweep(cfg: RunConfig) -> list:
    out = _ensure_out_dir(cfg)
    rows = []
    files = []
    for g in cfg.g_values:
        sub = dataclasses.replace(cfg, g=g, g_values=None,
                                  out_dir=str(Path(cfg.out_dir) / f"g_{g:g}"))
        files += cmd_mc(sub)
        files += cmd_oracle(sub)
        with open(Path(sub.out_dir) / "summary.json") as f:
            mc = json.load(f)
        with open(Path(sub.out_dir) / "pair_probabilities.json") as f:
            orc = json.load(f)
        rows.append((g, mc["f_same"], orc["same_fraction"], mc["binomial_stderr"]))
    sweep_path = out / "sweep.csv"
    with open(sweep_path, "w", newline="") as f:
        for line in _header_lines(cfg):
            f.write(f"# {line}\n")
        f.write("g_over_kappa,f_same_mc,f_same_oracle,stderr\n")
        for g, fmc, forc, se in rows:
            f.write(f"{g:g},{repr(float(fmc))},{repr(float(forc))},{repr(float(se))}\n")
    files.append(sweep_path)
    return files


def _plot_densities(trace, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(trace.times, trace.p2, label="same detector (aa/bb)")
    ax.plot(trace.times, trace.p11, label="different detectors (ab/ba)")
    ax.set_xlabel(r"$t\,[\kappa^{-1}]$")
    ax.set_ylabel("joint density $\\times\\,\\delta T$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_histograms(summary, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for hist, label in ((summary.hist_dt_same, "same"), (summary.hist_dt_diff, "diff")):
        axes[0].stairs(hist.counts, hist.edges, label=label)
    axes[0].set_xlabel(r"$T_2 - T_1\,[\kappa^{-1}]$")
    axes[0].legend()
    for hist, label in ((summary.hist_t1, "$T_1$"), (summary.hist_t2, "$T_2$")):
        axes[1].stairs(hist.counts, hist.edges, label=label)
    axes[1].set_xlabel(r"$T\,[\kappa^{-1}]$")
    axes[1].set_xlim(summary.shared_time_range)
    axes[1].legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


_COMMANDS = {
    "densities": cmd_densities,
    "mc": cmd_mc,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except (ConfigError, ValueError) as e:
        print(json.dumps({"error": str(e), "exit_code": 2}), file=sys.stderr)
        return 2
    try:
        _COMMANDS[cfg.subcommand](cfg)
    except ConfigError as e:
        print(json.dumps({"error": str(e), "exit_code": 2}), file=sys.stderr)
        return 2
    except HomsimError as e:
        print(json.dumps({"error": str(e), "exit_code": 3}), file=sys.stderr)
        return 3
    except ValueError as e:
        print(json.dumps({"error": str(e), "exit_code": 2}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
