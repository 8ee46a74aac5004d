"""Command-line entry point.

Configuration comes from an INI-style file ([run] section, key = value)
and/or flags, flags winning.  Unknown keys are rejected by name.  Every
output file starts with comment lines carrying the tool version, a hash
of the effective configuration, and the seed; identical configurations
produce byte-identical outputs for any worker count.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .brackets import index_label, smoothness_condition, span_rank
from .dirichlet import EXIT_STATUS_NAMES, koranyi_ball, sample_exits, solve_dirichlet
from .frame_bundle import FrameState
from .models import heisenberg_model, phase_rotated_heisenberg, validate_model
from .observables import (
    char_function,
    estimate_density,
    form_dt,
    form_du,
    form_dv,
    line_integral_ensemble,
    theta_form,
)
from .sde import STATUS_NAMES, SimConfig, simulate_ensemble

COMMANDS = (
    "simulate",
    "density",
    "line-integral",
    "charfn",
    "check-model",
    "check-hormander",
    "check-smoothness",
    "dirichlet",
)

# key -> (type, default); None defaults mean "required by the command"
_MODEL_KEYS = {"model": (str, "heisenberg"), "n": (int, 1), "kappa": (float, 0.5)}
_SIM_KEYS = {
    "t_horizon": (float, 1.0),
    "steps": (int, 1000),
    "seed": (int, 0),
    "paths": (int, 1000),
    "cap": (float, 1e6),
    "reunitarize_every": (int, 1),
    "record_stride": (int, 1),
}
_IO_KEYS = {"output": (str, ""), "workers": (int, 1), "format": (str, "csv")}

_SCHEMAS: dict[str, dict] = {
    "simulate": {**_MODEL_KEYS, **_SIM_KEYS, **_IO_KEYS, "start": (str, "origin")},
    "density": {
        **_MODEL_KEYS, **_SIM_KEYS, **_IO_KEYS,
        "start": (str, "origin"),
        "window": (str, "auto"),
        "grid_points": (int, 21),
        "bandwidth": (str, "scott"),
    },
    "line-integral": {
        **_MODEL_KEYS, **_SIM_KEYS, **_IO_KEYS,
        "start": (str, "origin"),
        "form": (str, "theta"),
    },
    "charfn": {
        **_MODEL_KEYS, **_SIM_KEYS, **_IO_KEYS,
        "start": (str, "origin"),
        "observable": (str, "tau"),
        "lambdas": (str, "0.5,1,2"),
    },
    "check-model": {
        **_MODEL_KEYS, **_IO_KEYS,
        "points": (int, 20),
        "seed": (int, 0),
        "scale": (float, 1.0),
    },
    "check-hormander": {
        **_MODEL_KEYS, **_IO_KEYS,
        "points": (int, 20),
        "seed": (int, 0),
        "scale": (float, 1.0),
        "max_order": (int, 2),
    },
    "check-smoothness": {
        **_MODEL_KEYS, **_IO_KEYS,
        "form": (str, "du1"),
        "point": (str, "origin"),
        "max_order": (int, 2),
    },
    "dirichlet": {
        **_MODEL_KEYS, **_SIM_KEYS, **_IO_KEYS,
        "domain": (str, "koranyi:1.0"),
        "data": (str, "u1"),
        "start": (str, "origin"),
        "horizon_threshold": (float, 0.01),
        "delta_band": (float, 1e-4),
        "records": (str, ""),
    },
}

# keys excluded from the config hash so outputs stay byte-identical
# across worker counts and output locations
_UNHASHED = {"output", "workers", "records"}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)

    def hash(self) -> str:
        items = sorted(
            (k, v) for k, v in self.params.items() if k not in _UNHASHED
        )
        blob = "\n".join([self.command] + [f"{k}={v}" for k, v in items])
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def to_file(self, path: str) -> None:
        cp = configparser.ConfigParser()
        cp["run"] = {"command": self.command}
        for k, v in self.params.items():
            cp["run"][k] = str(v)
        with open(path, "w") as fh:
            cp.write(fh)


def _coerce(command: str, key: str, raw, schema) -> object:
    typ, _default = schema[key]
    if isinstance(raw, typ):
        return raw
    try:
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for key '{key}' of {command}: {raw!r}") from exc


def _read_config_file(path: str) -> dict:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "run" not in cp:
        raise ConfigError(f"config file {path} lacks a [run] section")
    return dict(cp["run"])


def parse_config(argv) -> RunConfig:
    """Resolve command line plus optional config file into a RunConfig.

    Raises ConfigError (mapped to exit code 2) on unknown keys, type
    errors, or invalid values; flag values override file values.
    """
    parser = argparse.ArgumentParser(
        prog="crdiff",
        description="simulate sub-Laplacian diffusions on CR model charts",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None, help="INI file with a [run] section")
        for key, (typ, _default) in _SCHEMAS[cmd].items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None)
    ns = parser.parse_args(argv)
    command = ns.command
    schema = _SCHEMAS[command]
    params = {k: d for k, (t, d) in schema.items()}

    if ns.config is not None:
        file_items = _read_config_file(ns.config)
        for key, raw in file_items.items():
            if key == "command":
                if raw != command:
                    raise ConfigError(
                        f"config file is for command '{raw}', invoked '{command}'"
                    )
                continue
            if key not in schema:
                raise ConfigError(f"unknown key '{key}' for command {command}")
            params[key] = _coerce(command, key, raw, schema)

    for key in schema:
        val = getattr(ns, key)
        if val is not None:
            params[key] = val

    _validate(command, params)
    return RunConfig(command=command, params=params)


def _validate(command: str, params: dict) -> None:
    pos = {"n": 1, "paths": 1, "steps": 0, "points": 1, "grid_points": 2,
           "max_order": 1, "workers": 1, "record_stride": 1}
    for key, lo in pos.items():
        if key in params and params[key] < lo:
            raise ConfigError(f"key '{key}' must be >= {lo}")
    for key in ("t_horizon", "cap"):
        if key in params and not params[key] > 0:
            raise ConfigError(f"key '{key}' must be positive")
    if "format" in params and params["format"] not in ("csv", "pretty-text"):
        raise ConfigError("key 'format' must be csv or pretty-text")


# ---------------------------------------------------------------------------
# helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _model(params):
    name, n = params["model"], params["n"]
    if name == "heisenberg":
        return heisenberg_model(n)
    if name == "heisenberg_phase":
        return phase_rotated_heisenberg(n, params.get("kappa", 0.5))
    raise ConfigError(f"unknown model '{name}'")


def _start_point(params, dim) -> np.ndarray:
    raw = params.get("start", "origin")
    if raw == "origin":
        return np.zeros(dim)
    vals = [float(s) for s in raw.split(",")]
    if len(vals) != dim:
        raise ConfigError(f"key 'start' needs {dim} comma-separated coordinates")
    return np.array(vals)


def _sim_config(params) -> SimConfig:
    try:
        return SimConfig(
            t_horizon=params["t_horizon"],
            n_steps=params["steps"],
            seed=params["seed"],
            reunitarize_every=params["reunitarize_every"],
            record_stride=params["record_stride"],
            coordinate_cap=params["cap"],
        )
    except ValueError as exc:
        raise ConfigError(f"key 'steps': {exc}") from exc


def _form(params, n):
    raw = params["form"]
    if raw == "theta":
        return None  # resolved against the model by callers
    if raw == "dt":
        return form_dt(n)
    kind, idx = raw[:2], raw[2:]
    if kind in ("du", "dv") and idx.isdigit() and 1 <= int(idx) <= n:
        return form_du(n, int(idx)) if kind == "du" else form_dv(n, int(idx))
    raise ConfigError(f"unknown form preset '{raw}'")


def _output_path(params, command) -> str:
    out = params.get("output") or ""
    if out:
        return out
    base = os.environ.get("CRDIFF_OUTPUT_DIR", ".")
    return os.path.join(base, f"{command.replace('-', '_')}.csv")


def _write_csv(path: str, cfg: RunConfig, columns, rows, extra_comments=()) -> None:
    lines = [
        f"# crdiff {__version__}",
        f"# config {cfg.hash()}",
        f"# seed {cfg.params.get('seed', 0)}",
    ]
    lines += [f"# {c}" for c in extra_comments]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _coord_names(n):
    names = []
    for a in range(1, n + 1):
        names += [f"u{a}", f"v{a}"]
    return names + ["tau"]


# ---------------------------------------------------------------------------
# command implementations


def _cmd_simulate(cfg: RunConfig) -> int:
    p = cfg.params
    m = _model(p)
    sim = _sim_config(p)
    s0 = FrameState(_start_point(p, m.dim), np.eye(m.n))
    ens = simulate_ensemble(
        m, s0, sim, p["paths"], n_workers=p["workers"], record=True
    )
    rec = ens.records
    cols = (["path_id", "time"] + _coord_names(m.n)
            + [f"e{i+1}{j+1}_{part}" for i in range(m.n) for j in range(m.n)
               for part in ("re", "im")]
            + ["status"])
    rows = []
    for pid in range(ens.n_paths):
        for t_idx in range(rec.times.size):
            if not rec.valid[t_idx, pid]:
                continue
            e = rec.e[t_idx, pid]
            flat = []
            for i in range(m.n):
                for j in range(m.n):
                    flat += [e[i, j].real, e[i, j].imag]
            rows.append([pid, rec.times[t_idx]] + list(rec.x[t_idx, pid])
                        + flat + [STATUS_NAMES[ens.status[pid]]])
    out = _output_path(p, cfg.command)
    _write_csv(out, cfg, cols, rows)
    capped = ens.capped_fraction
    print(f"simulate: {ens.n_paths} paths x {sim.n_steps} steps, "
          f"capped {capped:.2%}, seed={p['seed']} -> {out}")
    return 1 if capped == 1.0 else 0


def _cmd_density(cfg: RunConfig) -> int:
    p = cfg.params
    m = _model(p)
    sim = _sim_config(p)
    s0 = FrameState(_start_point(p, m.dim), np.eye(m.n))
    ens = simulate_ensemble(m, s0, sim, p["paths"], n_workers=p["workers"])
    samples = ens.x[ens.completed]
    if samples.shape[0] < 100:
        print("density: fewer than 100 completed paths", file=sys.stderr)
        return 1
    if p["window"] == "auto":
        lo, hi = samples.min(axis=0), samples.max(axis=0)
        pad = 0.05 * (hi - lo)
        window = np.stack([lo - pad, hi + pad], axis=1)
    else:
        try:
            window = np.array(
                [[float(a) for a in pair.split(":")] for pair in p["window"].split(",")]
            )
        except ValueError as exc:
            raise ConfigError(f"key 'window': {exc}") from exc
        if window.shape != (m.dim, 2):
            raise ConfigError(f"key 'window' needs {m.dim} lo:hi pairs")
    bw = p["bandwidth"]
    if bw not in ("scott", "silverman"):
        bw = np.array([float(s) for s in bw.split(",")])
    est = estimate_density(ens, m, window, grid_points=p["grid_points"], bandwidth=bw)
    mesh = np.stack(np.meshgrid(*est.axes, indexing="ij"), axis=-1).reshape(-1, m.dim)
    rows = [list(pt) + [val] for pt, val in zip(mesh, est.values.ravel())]
    out = _output_path(p, cfg.command)
    meta = [
        "bandwidth " + ",".join(_fmt(b) for b in est.bandwidth),
        f"n_samples {est.n_samples}",
        f"normalization {_fmt(est.normalization())}",
    ]
    _write_csv(out, cfg, _coord_names(m.n) + ["density"], rows, extra_comments=meta)
    print(f"density: {est.n_samples} samples on {p['grid_points']}^{m.dim} grid, "
          f"seed={p['seed']} -> {out}")
    return 0


def _cmd_line_integral(cfg: RunConfig) -> int:
    p = cfg.params
    m = _model(p)
    sim = _sim_config(p)
    s0 = FrameState(_start_point(p, m.dim), np.eye(m.n))
    form = _form(p, m.n) or theta_form(m)
    ens = line_integral_ensemble(m, s0, sim, p["paths"], form, n_workers=p["workers"])
    vals = ens.observables["line_integral"]
    rows = [[pid, vals[pid]] for pid in range(ens.n_paths)]
    out = _output_path(p, cfg.command)
    _write_csv(out, cfg, ["path_id", "value"], rows,
               extra_comments=[f"form {form.name}"])
    print(f"line-integral[{form.name}]: {ens.n_paths} paths, "
          f"mean {vals.mean():.6g}, seed={p['seed']} -> {out}")
    return 0


def _cmd_charfn(cfg: RunConfig) -> int:
    p = cfg.params
    m = _model(p)
    sim = _sim_config(p)
    s0 = FrameState(_start_point(p, m.dim), np.eye(m.n))
    ens = simulate_ensemble(m, s0, sim, p["paths"], n_workers=p["workers"])
    obs = p["observable"]
    names = _coord_names(m.n)
    if obs not in names:
        raise ConfigError(f"key 'observable' must be one of {names}")
    samples = ens.x[ens.completed][:, names.index(obs)]
    lambdas = np.array([float(s) for s in p["lambdas"].split(",")])
    cf = char_function(samples, lambdas)
    rows = [
        [lam, val.real, val.imag, sr, si]
        for lam, val, sr, si in zip(cf.lambdas, cf.values, cf.stderr_re, cf.stderr_im)
    ]
    out = _output_path(p, cfg.command)
    _write_csv(out, cfg, ["lambda", "re", "im", "se_re", "se_im"], rows,
               extra_comments=[f"observable {obs}", f"n_samples {samples.size}"])
    print(f"charfn[{obs}]: {samples.size} samples, seed={p['seed']} -> {out}")
    return 0


def _probe_points(p, dim) -> np.ndarray:
    rng = np.random.default_rng(p["seed"])
    return rng.uniform(-p["scale"], p["scale"], size=(p["points"], dim))


def _cmd_check_model(cfg: RunConfig) -> int:
    p = cfg.params
    m = _model(p)
    rep = validate_model(m, _probe_points(p, m.dim))
    print(rep.as_text())
    if p["format"] == "csv" and p.get("output"):
        rows = [[r["check"], r["residual"], r["tol"], r["passed"]] for r in rep.rows()]
        _write_csv(p["output"], cfg, ["check", "residual", "tol", "passed"], rows)
    print(f"check-model: {'pass' if rep.passed else 'FAIL'}, seed={p['seed']}")
    return 0 if rep.passed else 1


def _cmd_check_hormander(cfg: RunConfig) -> int:
    p = cfg.params
    m = _model(p)
    pts = _probe_points(p, m.dim)
    rows = []
    for pt in pts:
        table = span_rank(m, pt, p["max_order"])
        sv = list(table.singular_values[: m.dim])
        sv += [0.0] * (m.dim - len(sv))
        rows.append(list(pt) + [table.rank] + sv)
    cols = _coord_names(m.n) + ["rank"] + [f"sv{i+1}" for i in range(m.dim)]
    out = _output_path(p, cfg.command)
    _write_csv(out, cfg, cols, rows, extra_comments=[f"max_order {p['max_order']}"])
    ranks = sorted({int(r[m.dim]) for r in rows})
    print(f"check-hormander: order {p['max_order']}, ranks {ranks}, "
          f"seed={p['seed']} -> {out}")
    return 0


def _cmd_check_smoothness(cfg: RunConfig) -> int:
    p = cfg.params
    m = _model(p)
    form = _form(p, m.n) or theta_form(m)
    point = _start_point({"start": p["point"]}, m.dim)
    ok, witness, value = smoothness_condition(m, form, point, p["max_order"])
    if ok:
        tag = ",".join(index_label(a) for a in witness)
        print(f"check-smoothness[{form.name}]: satisfied, witness ({tag}), "
              f"|phi| = {abs(value):.6g}, order {len(witness)}")
    else:
        print(f"check-smoothness[{form.name}]: not satisfied up to order "
              f"{p['max_order']}")
    if p["format"] == "csv" and p.get("output"):
        rows = [[form.name, int(ok),
                 ",".join(index_label(a) for a in witness) if witness else "",
                 abs(value)]]
        _write_csv(p["output"], cfg, ["form", "satisfied", "witness", "abs_phi"], rows)
    return 0


def _cmd_dirichlet(cfg: RunConfig) -> int:
    p = cfg.params
    m = _model(p)
    sim = _sim_config(p)
    dom_raw = p["domain"]
    if dom_raw.startswith("koranyi:"):
        domain = koranyi_ball(m.n, float(dom_raw.split(":", 1)[1]))
    else:
        raise ConfigError(f"unknown domain preset '{dom_raw}'")
    data_raw = p["data"]
    names = _coord_names(m.n)
    if data_raw.startswith("const:"):
        c = float(data_raw.split(":", 1)[1])
        f = lambda x: np.full(x.shape[:-1], c)
    elif data_raw in names:
        idx = names.index(data_raw)
        f = lambda x: x[..., idx]
    else:
        raise ConfigError(f"unknown boundary data preset '{data_raw}'")
    x0 = _start_point(p, m.dim)
    try:
        res = solve_dirichlet(
            m, domain, f, x0, p["paths"], sim, n_workers=p["workers"],
            horizon_threshold=p["horizon_threshold"], delta_band=p["delta_band"],
        )
    except RuntimeError as exc:
        print(f"dirichlet: {exc}", file=sys.stderr)
        return 1
    out = _output_path(p, cfg.command)
    _write_csv(
        out, cfg,
        ["estimate", "stderr", "n_used", "horizon_fraction", "flagged", "collar_max"],
        [[res.estimate, res.stderr, res.n_used, res.horizon_fraction,
          int(res.flagged), res.collar_max]],
        extra_comments=[f"domain {domain.name}", f"data {data_raw}"],
    )
    if p.get("records"):
        batch = sample_exits(
            m, x0, domain, sim, p["paths"], n_workers=p["workers"],
            delta_band=p["delta_band"],
        )
        rows = [
            [pid, batch.tau[pid]] + list(batch.points[pid])
            + [EXIT_STATUS_NAMES[batch.status[pid]], batch.phi_residual[pid]]
            for pid in range(p["paths"])
        ]
        _write_csv(p["records"], cfg,
                   ["path_id", "tau"] + names + ["status", "phi_residual"], rows)
    flag = " [FLAGGED: horizon fraction above threshold]" if res.flagged else ""
    print(
        f"dirichlet[{data_raw}@{domain.name}]: estimate {res.estimate:.6g} "
        f"+- {res.stderr:.2g}, horizon {res.horizon_fraction:.2%}, "
        f"collar {res.collar_max:.2e}, seed={p['seed']} -> {out}{flag}"
    )
    return 0


_RUNNERS = {
    "simulate": _cmd_simulate,
    "density": _cmd_density,
    "line-integral": _cmd_line_integral,
    "charfn": _cmd_charfn,
    "check-model": _cmd_check_model,
    "check-hormander": _cmd_check_hormander,
    "check-smoothness": _cmd_check_smoothness,
    "dirichlet": _cmd_dirichlet,
}


def run(cfg: RunConfig) -> int:
    """Execute a parsed configuration; returns the process exit code."""
    try:
        return _RUNNERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"crdiff: config error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"crdiff: config error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
