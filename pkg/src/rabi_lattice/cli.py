"""Command-line front end: ``rabi-lattice <subcommand> [options]``.

Every subcommand reads an optional YAML config (``--config``) and lets flags
override it. Results go to ``--out`` (written atomically) or stdout. Exit
status is 0 on success, 1 when a solver fails and 2 for configuration or
usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from .errors import BudgetRefused, ConfigParseError, InvalidParams, RabiLatticeError
from .model import ModelParams

SCHEMA_VERSION = 1
SUBCOMMANDS = ("ed", "pt", "bo", "sh", "dmrg", "scan", "fit-critical", "fit-chi", "ion-plan")
FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "table_vi")
DMRG_FIGURES = ("fig4", "fig5", "fig6", "fig7")

CONFIG_SCHEMA = {
    "schema_version": int,
    "jobs": int,
    "model": {"n_sites": int, "delta": float, "g": float, "j_ising": float, "n_fock": int},
    "dmrg": {"max_bond": int, "n_sweeps": int, "energy_tol": float, "seed": int,
             "min_sweeps": int, "checkpoint": str},
    "scan": {"method": str, "deltas": list, "g_range": list},
    "ion": {"n_ions": int, "spacing_d0": float, "species": str, "omega_z": float,
            "omega_x_pattern": list, "laser_wavelength_axial": float,
            "laser_wavelength_transverse": float, "gz_force": float, "gx_force": float,
            "axial_detuning_factor": float, "delta_boson": float},
    "output": {"path": str, "format": str},
}
DEFAULT_MODEL = {"n_sites": 3, "delta": 1.0, "g": 0.5, "j_ising": 1.0, "n_fock": 6}

# desk-scale windows (lo, hi) used by the DMRG figure datasets
DESK_WINDOWS = {0.3: (0.40, 0.66), 0.5: (0.56, 0.86), 0.7: (0.72, 1.02), 0.9: (0.86, 1.26)}
LARGE_DELTA_WINDOW = {2.0: (0.80, 2.40)}
DESK_STEP = 0.02


# --------------------------------------------------------------------- config

def load_config(text: str, source: str = "<config>") -> dict:
    """Parse and validate a YAML config; errors name the line and the key."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigParseError(f"{where}: invalid YAML ({getattr(exc, 'problem', exc)})") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigParseError(f"{source}:1: top level must be a mapping")
    _check_mapping(data, node, CONFIG_SCHEMA, source, "")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigParseError(f"{source}: schema_version {version} unsupported "
                               f"(expected {SCHEMA_VERSION})")
    return data


def _node_lines(node) -> dict:
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: (k.start_mark.line + 1, v) for k, v in node.value}


def _check_mapping(data, node, schema, source, prefix):
    lines = _node_lines(node)
    for key, value in data.items():
        line, child = lines.get(str(key), (1, None))
        name = f"{prefix}{key}"
        if key not in schema:
            raise ConfigParseError(f"{source}:{line}: unknown key '{name}'")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ConfigParseError(f"{source}:{line}: key '{name}' must be a mapping")
            _check_mapping(value, child, expected, source, name + ".")
        elif value is not None and not _type_ok(value, expected):
            raise ConfigParseError(f"{source}:{line}: key '{name}' expects {expected.__name__}, "
                                   f"got {type(value).__name__}")


def _type_ok(value, expected):
    if expected is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


def dump_config(config: dict) -> str:
    return yaml.safe_dump(config, sort_keys=True)


# --------------------------------------------------------------------- output

def atomic_write(path, payload: str | bytes) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(payload, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------- helpers

def parse_range(text: str) -> tuple:
    """``"lo:hi:step"`` -> ``(lo, hi, step)``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise InvalidParams(f"range {text!r} must look like lo:hi:step")
    try:
        return tuple(float(x) for x in parts)
    except ValueError:
        raise InvalidParams(f"range {text!r} has non-numeric parts") from None


def parse_floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InvalidParams(f"{text!r} is not a comma-separated list of numbers") from None


def _model(args, config) -> ModelParams:
    values = dict(DEFAULT_MODEL)
    values.update({k: v for k, v in config.get("model", {}).items() if v is not None})
    for key in DEFAULT_MODEL:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return ModelParams(**values)


def _dmrg_cfg(args, config):
    from .dmrg import DMRGConfig

    values = {k: v for k, v in config.get("dmrg", {}).items() if k != "checkpoint" and v is not None}
    for key in ("max_bond", "n_sweeps", "seed"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return DMRGConfig(**values)


def _jobs(args, config) -> int:
    from .analysis import default_jobs

    if getattr(args, "jobs", None) is not None:
        return max(1, args.jobs)
    if "jobs" in config:
        return max(1, int(config["jobs"]))
    return default_jobs()


# --------------------------------------------------------------------- commands

def cmd_ed(args, config):
    from .exact import ground_space, observables, symmetry_resolved_ground_state

    p = _model(args, config)
    res = ground_space(p, k=args.k)
    obs = observables(symmetry_resolved_ground_state(p), p)
    gap = float(res.energies[1] - res.energies[0]) if len(res.energies) > 1 else math.nan
    return to_json({
        "params": asdict(p),
        "energies": res.energies,
        "n": obs.n,
        "sigma_x": obs.sigma_x,
        "sigma_z": obs.sigma_z,
        "gap": max(gap, 0.0),
        "elitzur_max": obs.elitzur_max,
    })


def cmd_pt(args, config):
    from .perturbative import perturbative_energies

    p = _model(args, config)
    res = perturbative_energies(p)
    return to_json({"params": asdict(p), **asdict(res)})


def cmd_bo(args, config):
    from .variational import minimize_bo

    p = _model(args, config)
    res = minimize_bo(p)
    return to_json({"params": asdict(p), "alpha0": res.alpha0, "n": res.n,
                    "energy": res.energy_per_site * p.n_sites,
                    "energy_per_site": res.energy_per_site, "critical_g": res.critical_g})


def cmd_sh(args, config):
    from .variational import minimize_sh

    p = _model(args, config)
    res = minimize_sh(p)
    return to_json({"params": asdict(p), "eta0": res.eta0, "n": res.n, "energy": res.energy})


def cmd_dmrg(args, config):
    from .dmrg import dmrg_ground_state, save_checkpoint

    p = _model(args, config)
    cfg = _dmrg_cfg(args, config)
    res = dmrg_ground_state(p, cfg)
    checkpoint = args.checkpoint or config.get("dmrg", {}).get("checkpoint")
    if checkpoint:
        save_checkpoint(res.state, checkpoint)
    return to_json({"params": asdict(p), "energy": res.energy, "n": res.n,
                    "converged": res.converged, "sweeps": res.sweeps,
                    "max_discarded_weight": res.max_discarded_weight})


def cmd_scan(args, config):
    from .analysis import numerical_derivative, scan_order_parameter

    section = config.get("scan", {})
    method = args.method or section.get("method")
    if not method:
        raise InvalidParams("scan needs --method")
    deltas = parse_floats(args.deltas) if args.deltas else section.get("deltas")
    if not deltas:
        raise InvalidParams("scan needs --delta")
    g_range = parse_range(args.g_range) if args.g_range else section.get("g_range")
    if not g_range or len(g_range) != 3:
        raise InvalidParams("scan needs --g lo:hi:step")
    p = _model(args, config)
    dmrg_cfg = _dmrg_cfg(args, config) if method.upper() == "DMRG" else None
    table = scan_order_parameter(deltas, tuple(g_range), p, method,
                                 jobs=_jobs(args, config), dmrg_cfg=dmrg_cfg)
    if all(len(b) >= 2 for b in table.blocks().values()):
        table = numerical_derivative(table)
    return table.to_csv()


def _read_tables(paths):
    from .analysis import ScanTable

    return [ScanTable.from_csv(Path(p).read_text()) for p in paths]


def _points(text):
    pts = []
    for item in text.split(","):
        a, _, b = item.partition(":")
        try:
            pts.append((float(a), float(b)))
        except ValueError:
            raise InvalidParams(f"point {item!r} must look like delta:value") from None
    return pts


def _critical_from_tables(paths):
    from .analysis import critical_points

    out = []
    for table in _read_tables(paths):
        out.extend(critical_points(table))
    return sorted(out)


def _refined_from_tables(args, config):
    """DMRG rerun at each refined peak; chain length and cutoffs come from flags/config."""
    from .analysis import refine_critical_point

    p = _model(args, config)
    cfg = _dmrg_cfg(args, config)
    out = []
    for table in _read_tables(args.scans):
        for delta in table.blocks():
            out.append(refine_critical_point(table, delta, p, cfg))
    return sorted(out, key=lambda c: c.delta)


def cmd_fit_critical(args, config):
    from .analysis import fit_critical_line

    if args.points:
        peaks = _points(args.points)
    elif args.scans:
        peaks = [(d, g) for d, g, _, _ in _critical_from_tables(args.scans)]
    else:
        raise InvalidParams("fit-critical needs scan CSV files or --points")
    fit = fit_critical_line(peaks)
    return to_json({"exponent": fit.slope, "fit": asdict(fit), "peaks": peaks})


def cmd_fit_chi(args, config):
    from .analysis import fit_chi_scaling

    if args.points:
        pts = _points(args.points)
    elif args.scans and args.refine:
        pts = [(c.delta, c.chi) for c in _refined_from_tables(args, config)]
    elif args.scans:
        pts = [(d, chi) for d, _, _, chi in _critical_from_tables(args.scans)]
    else:
        raise InvalidParams("fit-chi needs scan CSV files or --points")
    fit = fit_chi_scaling(pts)
    return to_json({"fit": asdict(fit), "points": pts})


def _ion_spec(config):
    from .ionplan import IonChainSpec

    values = {k: v for k, v in config.get("ion", {}).items() if v is not None}
    return IonChainSpec(**values)


def cmd_ion_plan(args, config):
    from .ionplan import feasibility_report

    report = feasibility_report(_ion_spec(config))
    fmt = args.format or config.get("output", {}).get("format", "json")
    if fmt == "text":
        return report.summary()
    if fmt != "json":
        raise InvalidParams(f"ion-plan format must be json or text, got {fmt!r}")
    return to_json(report.to_dict())


# --------------------------------------------------------------------- reproduce

def reproduce(figure: str, out_dir, long_run: bool = False, jobs: int = 1,
              n_sites: int = 50) -> list:
    """Write the dataset behind one figure (or ``"all"``); returns written paths."""
    figures = FIGURES if figure == "all" else (figure,)
    for fig in figures:
        if fig not in FIGURES:
            raise InvalidParams(f"unknown figure {fig!r}; choose from {FIGURES} or 'all'")
        if fig in DMRG_FIGURES and not long_run:
            raise BudgetRefused(f"{fig} needs DMRG at N={n_sites} (hours); pass --long-run")
    out_dir = Path(out_dir)
    written = []
    cache: dict = {}
    for fig in figures:
        written += _REPRODUCERS[fig](out_dir, cache, jobs, n_sites)
    return written


def _write(out_dir, name, text, written):
    path = Path(out_dir) / name
    atomic_write(path, text)
    written.append(str(path))


def _fig2(out_dir, cache, jobs, n_sites):
    from .variational import bo_energy_per_site

    p = ModelParams(n_sites, 1.0, 0.0, 1.0, n_fock=2)
    lines = ["g,alpha,energy_per_site"]
    for g in (0.6, 0.8, 1.0, 1.2, 1.4):
        q = p.replace(g=g)
        for alpha in np.round(np.linspace(0.0, 1.5, 151), 12):
            lines.append(f"{g:.17g},{alpha:.17g},{bo_energy_per_site(alpha, q):.17g}")
    written = []
    _write(out_dir, "fig2_bo_energy.csv", "\n".join(lines) + "\n", written)
    return written


def _fig3(out_dir, cache, jobs, n_sites):
    from .analysis import numerical_derivative, scan_order_parameter

    p = ModelParams(n_sites, 1.0, 0.0, 1.0, n_fock=2)
    table = scan_order_parameter([0.2, 0.5, 1.0, 2.0], (0.0, 3.0, 0.01), p, "SH", jobs=jobs)
    written = []
    _write(out_dir, "fig3_sh.csv", numerical_derivative(table).to_csv(), written)
    return written


def _dmrg_tables(cache, jobs, n_sites):
    from .analysis import numerical_derivative, scan_order_parameter
    from .dmrg import DMRGConfig

    if "dmrg" not in cache:
        p = ModelParams(n_sites, 1.0, 0.0, 1.0, n_fock=10)
        cfg = DMRGConfig(max_bond=10)
        tables = {}
        windows = {**DESK_WINDOWS, **LARGE_DELTA_WINDOW}
        for method in ("DMRG", "BO", "SH"):
            for delta, (lo, hi) in windows.items():
                table = scan_order_parameter([delta], (lo, hi, DESK_STEP), p, method,
                                             jobs=jobs, dmrg_cfg=cfg)
                tables[(method, delta)] = numerical_derivative(table)
        cache["dmrg"] = tables
    return cache["dmrg"]


def _join(tables):
    from .analysis import CSV_HEADER

    body = [t.to_csv().split("\n", 1)[1] for t in tables]
    return ",".join(CSV_HEADER) + "\n" + "".join(body)


def _fig4(out_dir, cache, jobs, n_sites):
    tables = _dmrg_tables(cache, jobs, n_sites)
    written = []
    _write(out_dir, "fig4_n_comparison.csv", _join(tables.values()), written)
    _write(out_dir, "fig4_meta.json", to_json({
        "n_sites": n_sites, "n_fock": 10, "max_bond": 10, "j_ising": 1.0, "step": DESK_STEP,
        "windows": {str(k): v for k, v in {**DESK_WINDOWS, **LARGE_DELTA_WINDOW}.items()},
        "note": "desk-scale delta grid and g windows around each transition",
    }), written)
    return written


def _fig5(out_dir, cache, jobs, n_sites):
    from .analysis import peak_location

    tables = _dmrg_tables(cache, jobs, n_sites)
    lines = ["delta,method,g_peak,peak_height"]
    for (method, delta), table in tables.items():
        g_peak, height = peak_location(table, delta)
        lines.append(f"{delta:.17g},{method},{g_peak:.17g},{height:.17g}")
    written = []
    _write(out_dir, "fig5_derivatives.csv", _join(tables.values()), written)
    _write(out_dir, "fig5_peaks.csv", "\n".join(lines) + "\n", written)
    return written


def _critical_set(cache, jobs, n_sites):
    from .analysis import refine_critical_point
    from .dmrg import DMRGConfig

    if "critical" not in cache:
        tables = _dmrg_tables(cache, jobs, n_sites)
        p = ModelParams(n_sites, 1.0, 0.0, 1.0, n_fock=10)
        cache["critical"] = [refine_critical_point(tables[("DMRG", d)], d, p, DMRGConfig(max_bond=10))
                             for d in DESK_WINDOWS]
    return cache["critical"]


def _fig6(out_dir, cache, jobs, n_sites):
    from .analysis import fit_critical_line

    tables = _dmrg_tables(cache, jobs, n_sites)
    crit = _critical_set(cache, jobs, n_sites)
    fit = fit_critical_line([(c.delta, c.g_peak) for c in crit])
    written = []
    _write(out_dir, "fig6_chi.csv", _join(tables[("DMRG", d)] for d in DESK_WINDOWS), written)
    _write(out_dir, "fig6_critical_line.json",
           to_json({"exponent": fit.slope, "fit": asdict(fit),
                    "critical_points": [asdict(c) for c in crit]}), written)
    return written


def _fig7(out_dir, cache, jobs, n_sites):
    from .analysis import fit_chi_scaling

    crit = _critical_set(cache, jobs, n_sites)
    fit = fit_chi_scaling([(c.delta, c.chi) for c in crit])
    written = []
    _write(out_dir, "fig7_chi_scaling.json",
           to_json({"fit": asdict(fit), "critical_points": [asdict(c) for c in crit]}), written)
    return written


def _table_vi(out_dir, cache, jobs, n_sites):
    from .ionplan import IonChainSpec, feasibility_report

    report = feasibility_report(IonChainSpec())
    written = []
    _write(out_dir, "table_vi.json", to_json(report.to_dict()), written)
    _write(out_dir, "table_vi.txt", report.summary(), written)
    return written


_REPRODUCERS = {"fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "fig5": _fig5, "fig6": _fig6,
                "fig7": _fig7, "table_vi": _table_vi}


def cmd_reproduce(args, config):
    written = reproduce(args.figure, args.out_dir, long_run=args.long_run,
                        jobs=_jobs(args, config), n_sites=args.n_sites or 50)
    return "\n".join(written) + "\n"


# --------------------------------------------------------------------- parser

def _add_model_flags(p):
    p.add_argument("--n-sites", dest="n_sites", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--g", type=float)
    p.add_argument("--j", dest="j_ising", type=float)
    p.add_argument("--n-fock", dest="n_fock", type=int)


def _add_common(p):
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--jobs", type=int, help="worker processes (default: $RABI_LATTICE_JOBS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rabi-lattice", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in [("ed", "exact diagonalization"), ("pt", "perturbative energies"),
                           ("bo", "Born-Oppenheimer minimum"), ("sh", "Silbey-Harris minimum")]:
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        _add_model_flags(p)
        if name == "ed":
            p.add_argument("--k", type=int, default=2, help="number of eigenpairs")

    p = sub.add_parser("dmrg", help="two-site DMRG ground state")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--max-bond", dest="max_bond", type=int)
    p.add_argument("--sweeps", dest="n_sweeps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint", help="write the MPS to this binary file")

    p = sub.add_parser("scan", help="order-parameter scan, CSV output")
    _add_common(p)
    p.add_argument("--method", choices=["ed", "bo", "sh", "dmrg", "ED", "BO", "SH", "DMRG"])
    p.add_argument("--delta", dest="deltas", help="comma-separated delta values")
    p.add_argument("--g", dest="g_range", help="lo:hi:step")
    p.add_argument("--n-sites", dest="n_sites", type=int)
    p.add_argument("--j", dest="j_ising", type=float)
    p.add_argument("--n-fock", dest="n_fock", type=int)
    p.add_argument("--max-bond", dest="max_bond", type=int)
    p.add_argument("--sweeps", dest="n_sweeps", type=int)
    p.add_argument("--seed", type=int)

    for name in ("fit-critical", "fit-chi"):
        p = sub.add_parser(name, help="power-law fit of the critical line" if name == "fit-critical"
                           else "linear fit of 1/chi_c against delta")
        _add_common(p)
        p.add_argument("scans", nargs="*", help="scan CSV files (one or more delta blocks)")
        p.add_argument("--points", help="explicit delta:value pairs, comma separated")
        if name == "fit-chi":
            p.add_argument("--refine", action="store_true",
                           help="rerun DMRG at each interpolated peak instead of using grid chi")
            p.add_argument("--n-sites", dest="n_sites", type=int)
            p.add_argument("--n-fock", dest="n_fock", type=int)
            p.add_argument("--max-bond", dest="max_bond", type=int)

    p = sub.add_parser("ion-plan", help="trapped-ion feasibility report")
    _add_common(p)
    p.add_argument("--format", choices=["json", "text"])

    p = sub.add_parser("reproduce", help="datasets behind the figures")
    _add_common(p)
    p.add_argument("figure", choices=[*FIGURES, "all"])
    p.add_argument("--out-dir", default="reproduce_out")
    p.add_argument("--long-run", action="store_true", help="allow hour-scale DMRG figures")
    p.add_argument("--n-sites", dest="n_sites", type=int)
    return parser


COMMANDS = {"ed": cmd_ed, "pt": cmd_pt, "bo": cmd_bo, "sh": cmd_sh, "dmrg": cmd_dmrg,
            "scan": cmd_scan, "fit-critical": cmd_fit_critical, "fit-chi": cmd_fit_chi,
            "ion-plan": cmd_ion_plan, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        config = {}
        if args.config:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ConfigParseError(f"cannot read config: {exc}") from None
            config = load_config(text, args.config)
        out = args.out or config.get("output", {}).get("path")
        text = COMMANDS[args.command](args, config)
        if args.command == "reproduce":
            sys.stdout.write(text)
        else:
            _emit(text, out)
    except (ConfigParseError, InvalidParams, BudgetRefused) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RabiLatticeError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
