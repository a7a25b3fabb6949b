"""Run configuration: flat key-value text with section headers.

Sections: [grid], [params], [schedule], [strategy], [output], [sweep].
Defaults follow the usual coupling eta = eps^2/10, h = eps/5,
delta = eps/2.  Parsing is strict about required keys (dim, extent, eps,
schedule kind) and about the eta < eps regime; an under-resolved grid
(h >= eps) only warns, since under-resolution is a legitimate experiment.
"""

import configparser
import dataclasses
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

from .energy import ATParams
from .evolution import BoundarySchedule, Strategy
from .grid import Field, Grid, build_grid


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    dim: int
    extents: Tuple[float, ...]
    counts: Tuple[int, ...]
    dirichlet: str
    eps: float
    eta: float
    delta: float
    tol_am: float = 1e-8
    tol_lin: float = 1e-10
    tol_qp: float = 1e-9
    schedule_kind: str = "ramp"          # ramp | table
    profile: str = "linear_x"            # linear_x | shear_y
    rate: float = 1.0
    t_end: float = 1.0
    table: Tuple[Tuple[float, float], ...] = ()
    competitor: bool = False
    crack_site: Optional[float] = None
    notch_value: Optional[float] = None
    notch_halfwidth: Optional[float] = None
    threshold: float = 0.1
    out_dir: str = "out"
    snapshot_every: int = 0
    eps_list: Tuple[float, ...] = ()


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _table(text: str) -> Tuple[Tuple[float, float], ...]:
    pairs = []
    for item in text.split(","):
        t, a = item.split(":")
        pairs.append((float(t), float(a)))
    return tuple(pairs)


def parse_config(path: str) -> RunConfig:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    def get(section, key, default=None):
        if cp.has_option(section, key):
            val = cp.get(section, key).strip()
            return val if val else default
        return default

    dim_s = get("grid", "dim")
    ext_s = get("grid", "extent")
    eps_s = get("params", "eps")
    kind = get("schedule", "kind")
    missing = [name for name, v in
               [("grid.dim", dim_s), ("grid.extent", ext_s),
                ("params.eps", eps_s), ("schedule.kind", kind)] if v is None]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")

    dim = int(dim_s)
    extents = _floats(ext_s)
    if len(extents) != dim:
        raise ConfigError(f"extent must list {dim} value(s)")
    eps = float(eps_s)
    if eps <= 0:
        raise ConfigError("eps must be positive")

    eta_s = get("params", "eta")
    eta = float(eta_s) if eta_s else eps**2 / 10.0
    if eta >= eps:
        raise ConfigError(f"eta={eta} >= eps={eps} violates the eta << eps regime")

    h_s = get("params", "h")
    cells_s = get("grid", "cells")
    if cells_s:
        counts = tuple(int(c) for c in cells_s.replace(",", " ").split())
        if len(counts) != dim:
            raise ConfigError(f"cells must list {dim} value(s)")
    else:
        h = float(h_s) if h_s else eps / 5.0
        counts = tuple(max(2, round(e / h)) for e in extents)
    h_eff = max(e / c for e, c in zip(extents, counts))
    if h_eff >= eps:
        warnings.warn(
            f"grid spacing h={h_eff:.4g} >= eps={eps:.4g}: the phase field "
            "is under-resolved", stacklevel=2)

    delta_s = get("params", "delta")
    delta = float(delta_s) if delta_s else eps / 2.0

    kind = kind.lower()
    if kind not in ("ramp", "table"):
        raise ConfigError(f"unknown schedule kind {kind!r}")
    table = _table(get("schedule", "table")) if kind == "table" else ()
    if kind == "table" and not table:
        raise ConfigError("schedule kind 'table' requires a table")

    def opt_float(section, key):
        v = get(section, key)
        return float(v) if v is not None else None

    cfg = RunConfig(
        dim=dim,
        extents=extents,
        counts=counts,
        dirichlet=get("grid", "dirichlet", "ends" if dim == 1 else "top_bottom"),
        eps=eps,
        eta=eta,
        delta=delta,
        tol_am=float(get("params", "tol_am", "1e-8")),
        tol_lin=float(get("params", "tol_lin", "1e-10")),
        tol_qp=float(get("params", "tol_qp", "1e-9")),
        schedule_kind=kind,
        profile=get("schedule", "profile", "linear_x" if dim == 1 else "shear_y"),
        rate=float(get("schedule", "rate", "1.0")),
        t_end=float(get("schedule", "t_end", "1.0")),
        table=table,
        competitor=get("strategy", "competitor", "off").lower() in ("on", "true", "1", "yes"),
        crack_site=opt_float("strategy", "crack_site"),
        notch_value=opt_float("strategy", "notch_value"),
        notch_halfwidth=opt_float("strategy", "notch_halfwidth"),
        threshold=float(get("strategy", "threshold", "0.1")),
        out_dir=get("output", "dir", "out"),
        snapshot_every=int(get("output", "snapshot_every", "0")),
        eps_list=_floats(get("sweep", "eps_list", "") or "") or (),
    )
    return cfg


def write_config(cfg: RunConfig, path: str) -> None:
    cp = configparser.ConfigParser()
    cp["grid"] = {
        "dim": str(cfg.dim),
        "extent": " ".join(f"{e:.17g}" for e in cfg.extents),
        "cells": " ".join(str(c) for c in cfg.counts),
        "dirichlet": cfg.dirichlet,
    }
    cp["params"] = {
        "eps": f"{cfg.eps:.17g}",
        "eta": f"{cfg.eta:.17g}",
        "delta": f"{cfg.delta:.17g}",
        "tol_am": f"{cfg.tol_am:.17g}",
        "tol_lin": f"{cfg.tol_lin:.17g}",
        "tol_qp": f"{cfg.tol_qp:.17g}",
    }
    sched = {
        "kind": cfg.schedule_kind,
        "profile": cfg.profile,
        "rate": f"{cfg.rate:.17g}",
        "t_end": f"{cfg.t_end:.17g}",
    }
    if cfg.table:
        sched["table"] = ",".join(f"{t:.17g}:{a:.17g}" for t, a in cfg.table)
    cp["schedule"] = sched
    strat = {
        "competitor": "on" if cfg.competitor else "off",
        "threshold": f"{cfg.threshold:.17g}",
    }
    for key in ("crack_site", "notch_value", "notch_halfwidth"):
        val = getattr(cfg, key)
        if val is not None:
            strat[key] = f"{val:.17g}"
    cp["strategy"] = strat
    cp["output"] = {"dir": cfg.out_dir, "snapshot_every": str(cfg.snapshot_every)}
    if cfg.eps_list:
        cp["sweep"] = {"eps_list": ",".join(f"{e:.17g}" for e in cfg.eps_list)}
    with open(path, "w") as fh:
        cp.write(fh)


def derive_for_eps(base: RunConfig, eps: float) -> RunConfig:
    """Sweep member: rescale eps with the default coupling h = eps/5,
    delta = eps/2, eta = eps^2/10."""
    h = eps / 5.0
    counts = tuple(max(2, round(e / h)) for e in base.extents)
    return dataclasses.replace(
        base, eps=eps, eta=eps**2 / 10.0, delta=eps / 2.0, counts=counts,
        eps_list=(),
    )


def profile_field(grid: Grid, name: str) -> Field:
    coords = grid.coordinates()
    if name == "linear_x":
        return Field(grid, coords[:, 0] / grid.extents[0])
    if name == "shear_y":
        if grid.dim != 2:
            raise ConfigError("profile 'shear_y' needs a 2D grid")
        return Field(grid, 2.0 * coords[:, 1] / grid.extents[1] - 1.0)
    raise ConfigError(f"unknown profile {name!r}")


def build_problem(cfg: RunConfig):
    """Materialize (grid, schedule, params, strategy) from a config."""
    grid = build_grid(cfg.dim, cfg.extents, cfg.counts, cfg.dirichlet)
    if cfg.eps >= min(grid.extents):
        raise ConfigError("eps must be smaller than the domain extent")
    profile = profile_field(grid, cfg.profile)
    if cfg.schedule_kind == "table":
        schedule = BoundarySchedule.from_table(profile, cfg.table)
    else:
        schedule = BoundarySchedule.linear_ramp(profile, cfg.rate, cfg.t_end)
    params = ATParams(
        eps=cfg.eps, eta=cfg.eta, delta=cfg.delta,
        tol_am=cfg.tol_am, tol_lin=cfg.tol_lin, tol_qp=cfg.tol_qp,
    )
    strategy = Strategy(
        competitor=cfg.competitor, crack_site=cfg.crack_site,
        notch_value=cfg.notch_value, notch_halfwidth=cfg.notch_halfwidth,
    )
    return grid, schedule, params, strategy
