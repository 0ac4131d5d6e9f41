"""``mmdflow`` command-line front end.

Exit codes: 0 success, 2 parse error, 3 invariant violation, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import export, svg
from .energy import get_kernel, mmd_sq
from .flow import (closed_form_flow_to_dirac, closed_form_trajectory, jko_flow,
                   subgradient_flow, flow_to_measure)
from .measure import (Measure1D, MeasureError, MeasureFormatError, dirac, dump_measure,
                      load_measure, pushforward_from_quantile, quantile, sample_quantile_grid,
                      w2)
from .numerics import (ConvergenceError, IntegrationError, QuadratureError, central_gradient,
                       central_hessian)
from .restricted import UniformParam, f2_energy, landscape_grid, s1_flow, s2_flow

EXIT_OK, EXIT_PARSE, EXIT_INVARIANT, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    """A scenario parameter is missing or out of range."""

    def __init__(self, message: str, code: int = EXIT_INVARIANT):
        super().__init__(message)
        self.code = code


class NumericFailure(RuntimeError):
    pass


@dataclass
class ScenarioConfig:
    command: str
    mu: str | None = None
    nu: str | None = None
    init: str | None = None
    target: str | None = None
    kernel: str = "distance"
    family: str = "s2"
    q: float = 0.0
    times: str = "0,0.25,0.5,1"
    tau: float | None = None
    h: float | None = None
    steps: int | None = None
    n: int = 200
    t_end: float | None = None
    record_every: int = 1
    energy_tol: float | None = None
    m_range: str = "-2,2"
    sigma_range: str = "0,2"
    resolution: int = 41
    landscape: bool = False
    out: str | None = None
    extras: dict = field(default_factory=dict)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            flags = ", ".join("--" + n.replace("_", "-") for n in missing)
            raise ConfigError(f"{self.command}: missing {flags}", EXIT_PARSE)

    def positive(self, *names: str) -> None:
        for n in names:
            v = getattr(self, n)
            if v is None or not v > 0:
                raise ConfigError(f"--{n.replace('_', '-')} must be positive, got {v}")

    def measure(self, name: str) -> Measure1D:
        return load_measure(getattr(self, name))

    def range_of(self, name: str) -> tuple[float, float]:
        text = getattr(self, name)
        try:
            lo, hi = (float(v) for v in str(text).split(","))
        except ValueError:
            raise ConfigError(f"--{name.replace('_', '-')}: expected 'lo,hi', got {text!r}",
                              EXIT_PARSE) from None
        if not lo < hi:
            raise ConfigError(f"--{name.replace('_', '-')}: need lo < hi")
        return lo, hi


# --- commands ---------------------------------------------------------------------------

def _out(cfg: ScenarioConfig, name: str) -> str:
    return os.path.join(cfg.out, name)


def cmd_w2(cfg: ScenarioConfig) -> int:
    cfg.require("mu", "nu")
    print(f"{w2(cfg.measure('mu'), cfg.measure('nu')):#.12g}")
    return EXIT_OK


def cmd_mmd(cfg: ScenarioConfig) -> int:
    cfg.require("mu", "nu")
    print(f"{mmd_sq(cfg.measure('mu'), cfg.measure('nu'), get_kernel(cfg.kernel)):#.12g}")
    return EXIT_OK


def _parse_times(text: str) -> list[float]:
    try:
        times = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--times: cannot parse {text!r}", EXIT_PARSE) from None
    if not times or any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError("--times must be nonnegative and strictly ascending")
    return times


def cmd_flow_dirac(cfg: ScenarioConfig) -> int:
    cfg.require("init", "out")
    times = _parse_times(cfg.times)
    mu0 = cfg.measure("init")
    q0 = quantile(mu0)
    traj = closed_form_trajectory(q0, cfg.q, times)
    snaps = [(t, pushforward_from_quantile(closed_form_flow_to_dirac(q0, cfg.q, t)))
             for t in times]
    nu = dirac(cfg.q)
    export.atomic_write(_out(cfg, "trajectory.csv"),
                        export.trajectory_csv(traj, nu, n=cfg.n, tau=float("nan")))
    export.atomic_write(_out(cfg, "energy.csv"), export.energy_csv(traj))
    export.atomic_write(_out(cfg, "pieces.csv"), export.pieces_csv(snaps))
    for t, mu in snaps:
        export.atomic_write(_out(cfg, f"measure_t={t:g}.json"), dump_measure(mu))
    export.atomic_write(_out(cfg, "density.svg"), svg.density_panels(snaps))
    return EXIT_OK


def _grid_flow(cfg: ScenarioConfig, kind: str) -> int:
    cfg.require("init", "target", "tau", "steps", "out")
    cfg.positive("tau", "steps", "n", "record_every")
    mu0, nu = cfg.measure("init"), cfg.measure("target")
    f0 = sample_quantile_grid(mu0, int(cfg.n))
    if kind == "subgrad":
        traj = subgradient_flow(f0, nu, cfg.tau, int(cfg.steps), int(cfg.record_every))
    else:
        traj = jko_flow(f0, nu, cfg.tau, int(cfg.steps), int(cfg.record_every))
    export.atomic_write(_out(cfg, "trajectory.csv"), export.trajectory_csv(traj, nu))
    export.atomic_write(_out(cfg, "energy.csv"), export.energy_csv(traj))
    export.atomic_write(_out(cfg, "final_measure.json"),
                        dump_measure(flow_to_measure(traj, len(traj) - 1)))
    tol = cfg.energy_tol
    if tol is None:
        tol = 1e-10 + 10.0 * cfg.tau**2
    worst = traj.meta.get("max_step_increase", traj.max_energy_increase())
    if worst > tol:
        step = traj.meta.get("worst_step", "?")
        raise NumericFailure(f"energy increased by {worst:.3e} at step {step} "
                             f"(tolerance {tol:.3e})")
    return EXIT_OK


def cmd_subgrad_flow(cfg: ScenarioConfig) -> int:
    return _grid_flow(cfg, "subgrad")


def cmd_jko(cfg: ScenarioConfig) -> int:
    return _grid_flow(cfg, "jko")


def _landscape_svg(nu, k, m_range, s_range, res, path=None, threads=None):
    ms, ss, F = landscape_grid(nu, k, m_range, s_range, res, threads=threads)
    p = svg.Panel(m_range, s_range, width=420, height=300, title=f"F(m, sigma), {k.name} kernel")
    p.axes(xlabel="m", ylabel="sigma")
    p.contours(ms, ss, F, np.linspace(F.min(), F.max(), 16)[1:-1])
    j, i = np.unravel_index(np.argmin(F), F.shape)
    p.marker(ms[i], ss[j], "#d03030", "min")
    saddle = find_saddle(nu, k)
    if saddle is not None and m_range[0] <= saddle[0] <= m_range[1]:
        p.marker(saddle[0], 0.0, "#3050d0", "saddle")
    if path is not None:
        p.polyline(path[:, 0], path[:, 1], color="black")
    return ms, ss, F, p, saddle


def find_saddle(nu: Measure1D, k, gtol: float = 1e-8):
    """``(m, 0)`` at the mean of ``nu`` if it is a stationary point of ``F(m, sigma)`` with
    Hessian eigenvalues of both signs (``sigma`` extended evenly)."""
    k = get_kernel(k)
    if not k.smooth:
        return None
    m0 = nu.mean()

    def fun(v):
        return f2_energy(UniformParam(float(v[0]), abs(float(v[1]))), nu, k)

    g = central_gradient(fun, [m0, 0.0], 1e-5)
    eig = np.linalg.eigvalsh(central_hessian(fun, [m0, 0.0], 1e-3))
    if np.linalg.norm(g) < gtol and eig[0] < 0 < eig[-1]:
        return m0, g, eig
    return None


def cmd_restricted(cfg: ScenarioConfig) -> int:
    cfg.require("init", "nu", "h", "t_end", "out")
    cfg.positive("h", "t_end", "record_every")
    family = cfg.family.lower()
    if family not in ("s1", "s2"):
        raise ConfigError(f"--family must be s1 or s2, got {cfg.family!r}", EXIT_PARSE)
    k = get_kernel(cfg.kernel)
    nu = cfg.measure("nu")
    try:
        init = [float(v) for v in str(cfg.init).split(",")]
    except ValueError:
        raise ConfigError(f"--init: cannot parse {cfg.init!r}", EXIT_PARSE) from None
    if family == "s1":
        if len(init) != 1:
            raise ConfigError("--init for s1 is a single location x", EXIT_PARSE)
        traj = s1_flow(init[0], nu, cfg.t_end, cfg.h, k, int(cfg.record_every))
        columns = ["x"]
    else:
        if len(init) != 2:
            raise ConfigError("--init for s2 is 'm,sigma'", EXIT_PARSE)
        traj = s2_flow(UniformParam(init[0], init[1]), nu, k, cfg.t_end, cfg.h,
                       int(cfg.record_every))
        columns = ["m", "sigma"]
    export.atomic_write(_out(cfg, "trajectory.csv"),
                        export.trajectory_csv(traj, nu, columns=columns, tau=cfg.h))
    export.atomic_write(_out(cfg, "energy.csv"), export.energy_csv(traj))
    states = np.array(traj.states)
    if family == "s2":
        if cfg.landscape:
            *_, p, _ = _landscape_svg(nu, k, cfg.range_of("m_range"), cfg.range_of("sigma_range"),
                                      int(cfg.resolution), path=states)
        else:
            lo, hi = states.min(axis=0), states.max(axis=0)
            pad = 0.1 * max(float(np.max(hi - lo)), 1e-3)
            p = svg.Panel((lo[0] - pad, hi[0] + pad), (0.0, hi[1] + pad), title="(m, sigma) path")
            p.axes(xlabel="m", ylabel="sigma")
            p.polyline(states[:, 0], states[:, 1])
    else:
        x = states[:, 0]
        pad = 0.1 * max(float(np.ptp(x)), 1e-3)
        p = svg.Panel((0.0, traj.times[-1]), (x.min() - pad, x.max() + pad), title="x(t)")
        p.axes(xlabel="t", ylabel="x")
        p.polyline(traj.times, x)
    export.atomic_write(_out(cfg, "trajectory.svg"), svg.render([p]))
    return EXIT_OK


def cmd_landscape(cfg: ScenarioConfig) -> int:
    cfg.require("nu", "out")
    if int(cfg.resolution) < 2:
        raise ConfigError("--resolution must be >= 2")
    k = get_kernel(cfg.kernel)
    nu = cfg.measure("nu")
    ms, ss, F, p, saddle = _landscape_svg(nu, k, cfg.range_of("m_range"),
                                          cfg.range_of("sigma_range"), int(cfg.resolution))
    export.atomic_write(_out(cfg, "landscape.csv"), export.landscape_csv(ms, ss, F))
    export.atomic_write(_out(cfg, "landscape.svg"), svg.render([p]))
    j, i = np.unravel_index(np.argmin(F), F.shape)
    print(f"minimum m={export.fmt(ms[i])} sigma={export.fmt(ss[j])} F={export.fmt(F[j, i])}")
    if saddle is not None:
        m0, g, eig = saddle
        print(f"saddle m={export.fmt(m0)} sigma=0 |grad|={np.linalg.norm(g):.3e} "
              f"hessian_eigenvalues={export.fmt(eig[0])},{export.fmt(eig[1])}")
    return EXIT_OK


COMMANDS = {
    "w2": cmd_w2, "mmd": cmd_mmd, "flow-dirac": cmd_flow_dirac,
    "subgrad-flow": cmd_subgrad_flow, "jko": cmd_jko, "restricted": cmd_restricted,
    "landscape": cmd_landscape,
}


# --- argument parsing -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmdflow", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default values for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    for name, help_ in (("w2", "Wasserstein-2 distance"), ("mmd", "squared MMD")):
        p = add(name, help_)
        p.add_argument("mu", nargs="?")
        p.add_argument("nu", nargs="?")
        if name == "mmd":
            p.add_argument("--kernel", choices=["distance", "smooth"])

    p = add("flow-dirac", "closed-form flow toward a Dirac target")
    p.add_argument("--init")
    p.add_argument("--q", type=float)
    p.add_argument("--times")
    p.add_argument("--n", type=int, help="grid size of the trajectory CSV")
    p.add_argument("--out")

    for name, help_ in (("subgrad-flow", "explicit subgradient flow on a quantile grid"),
                        ("jko", "minimizing-movement flow on a quantile grid")):
        p = add(name, help_)
        p.add_argument("--init")
        p.add_argument("--target")
        p.add_argument("--tau", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--record-every", type=int)
        p.add_argument("--energy-tol", type=float)
        p.add_argument("--out")

    p = add("restricted", "flows on the Dirac (s1) or uniform (s2) family")
    p.add_argument("--family", choices=["s1", "s2"])
    p.add_argument("--init", help="x for s1, 'm,sigma' for s2")
    p.add_argument("--nu")
    p.add_argument("--kernel", choices=["distance", "smooth"])
    p.add_argument("--h", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--record-every", type=int)
    p.add_argument("--landscape", action="store_true", default=None)
    p.add_argument("--m-range")
    p.add_argument("--sigma-range")
    p.add_argument("--resolution", type=int)
    p.add_argument("--out")

    p = add("landscape", "energy landscape of the s2 family")
    p.add_argument("--nu")
    p.add_argument("--kernel", choices=["distance", "smooth"])
    p.add_argument("--m-range")
    p.add_argument("--sigma-range")
    p.add_argument("--resolution", type=int)
    p.add_argument("--out")
    return parser


def make_config(args: argparse.Namespace) -> ScenarioConfig:
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeasureFormatError(f"{args.config}: line {exc.lineno} column {exc.colno}: "
                                     f"{exc.msg}") from exc
        if not isinstance(loaded, dict):
            raise MeasureFormatError(f"{args.config}: expected a JSON object")
        values.update({k.replace("-", "_"): v for k, v in loaded.items()})
    values.update({k: v for k, v in vars(args).items() if v is not None and k != "config"})
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown option(s): {', '.join(sorted(unknown))}", EXIT_PARSE)
    cfg = ScenarioConfig(**values)
    for name in ("tau", "h", "t_end", "q", "energy_tol"):
        v = getattr(cfg, name)
        if v is not None and not (isinstance(v, (int, float)) and math.isfinite(v)):
            raise ConfigError(f"--{name.replace('_', '-')}: expected a finite number", EXIT_PARSE)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
        return COMMANDS[cfg.command](cfg)
    except (MeasureFormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"mmdflow: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"mmdflow: {exc}", file=sys.stderr)
        return exc.code
    except (MeasureError, ValueError) as exc:
        print(f"mmdflow: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (NumericFailure, ConvergenceError, IntegrationError, QuadratureError) as exc:
        print(f"mmdflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
