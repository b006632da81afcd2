"""Command line pipeline runner.

One subcommand per pipeline stage plus ``all``, which chains them and
writes a manifest.  Flags mirror the RunConfig fields; a JSON config file
named with --config takes precedence over flags.  Exit codes: 0 success,
2 configuration problem, 3 stage failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, cache
from .conditions import fatness_fit, ntr_sweep
from .diagnostics import run_diagnostics
from .errors import (
    CacheError,
    ConfigError,
    HorseshoeError,
    StageError,
)
from .figures import emit_strip_polygons
from .maps import make_affine_example, make_baker, validate_hyperbolicity
from .measures import (
    lift_srb,
    load_srb,
    save_srb,
    tsujii_criterion,
    ulam_acip,
)
from .symbolic import load_inventory, m_inventory, save_inventory


@dataclass
class RunConfig:
    """Every knob of the pipeline, one flat record.

    The r sweeps must decrease strictly; the seed is mandatory so any two
    runs of the same config are comparable byte for byte.
    """

    # map selection
    family: str = "baker"
    lam: float = 0.5
    a: float = 0.8
    b: float = 0.55
    # validation
    grid_n: int = 256
    strict_a4: bool = False
    # enumeration
    depth_max: int = 24
    x_grid_n: int = 65
    enum_r: tuple = (2.0 ** -4, 2.0 ** -5, 2.0 ** -6)
    word_budget: int = 400_000
    # measure
    bins: int = 4096
    samples: int = 200_000
    iters: int = 30
    seed: int = 7
    workers: int = 1
    fiber_bins: int = 256
    y_bins: int = 4096
    r_list: tuple = (2.0 ** -3, 2.0 ** -4, 2.0 ** -5, 2.0 ** -6, 2.0 ** -7)
    weighting: str = "lebesgue"
    bounded_ratio: float = 2.0
    # conditions
    delta: float | None = None
    tail_depth: int = 48
    pair_budget: int = 20_000
    fat_depth: int = 10
    fat_depth_min: int = 2
    # diagnostics
    diag_word_depth: int = 8
    diag_lattice: int = 32
    cone_depth: int = 10
    # figure and output
    figure_n: int = 5
    figure_grid: int = 129
    out_dir: str = "horseshoe_run"
    formats: tuple = ("csv", "json", "svg")

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["enum_r"] = list(self.enum_r)
        d["r_list"] = list(self.r_list)
        d["formats"] = list(self.formats)
        return d


@dataclass
class RunManifest:
    map_hash: str
    versions: dict
    wall_clock: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    failed_stage: str | None = None

    def to_json(self, path):
        payload = {
            "map_hash": self.map_hash,
            "versions": self.versions,
            "wall_clock": self.wall_clock,
            "files": self.files,
            "config": self.config,
            "failed_stage": self.failed_stage,
        }
        with open(path, "w") as fh:
            fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return payload


def _decreasing(values, what):
    vals = [float(v) for v in values]
    if not vals:
        raise ConfigError(f"{what} must not be empty")
    if any(v <= 0 for v in vals):
        raise ConfigError(f"{what} must be positive")
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"{what} must decrease strictly, got {vals}")
    return tuple(vals)


def finalize_config(config):
    """Validate invariants and normalize field types in place."""
    if config.family not in ("baker", "affine"):
        raise ConfigError(f"unknown map family {config.family!r}")
    config.enum_r = _decreasing(config.enum_r, "enum_r")
    config.r_list = _decreasing(config.r_list, "r_list")
    if not isinstance(config.seed, int):
        raise ConfigError("seed must be an integer (and is mandatory)")
    for name in ("grid_n", "depth_max", "x_grid_n", "bins", "samples",
                 "iters", "workers", "fiber_bins", "y_bins", "tail_depth",
                 "pair_budget", "fat_depth", "figure_n", "figure_grid",
                 "diag_word_depth", "diag_lattice", "cone_depth"):
        if int(getattr(config, name)) < 1:
            raise ConfigError(f"{name} must be a positive integer")
        setattr(config, name, int(getattr(config, name)))
    unknown = set(config.formats) - {"csv", "json", "svg"}
    if unknown:
        raise ConfigError(f"unknown output formats {sorted(unknown)}")
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} not writable: {exc}") from exc
    return config


def build_spec(config):
    try:
        if config.family == "baker":
            return make_baker(config.lam)
        return make_affine_example(config.a, config.b)
    except HorseshoeError as exc:
        raise ConfigError(f"map parameters rejected: {exc}") from exc


def default_delta(config):
    if config.delta is not None:
        return float(config.delta)
    if config.family == "affine":
        return (config.a - config.b) / 4.0
    return 0.1


# ---------------------------------------------------------------------------
# stages


def _write_json(path, payload):
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _spec(ctx):
    if "spec" not in ctx:
        ctx["spec"] = build_spec(ctx["config"])
    return ctx["spec"]


def _acip(ctx):
    if "acip" not in ctx:
        cfg = ctx["config"]
        ctx["acip"] = ulam_acip(_spec(ctx), bins=cfg.bins)
    return ctx["acip"]


def _srb(ctx):
    if "srb" in ctx:
        return ctx["srb"]
    cfg = ctx["config"]
    spec = _spec(ctx)
    path = Path(cfg.out_dir) / "srb.blob"
    if path.exists():
        try:
            srb = load_srb(path, expect_spec_hash=spec.map_hash)
            if (srb.seed == cfg.seed and srb.n_samples == cfg.samples
                    and srb.iterations_used == cfg.iters
                    and srb.fiber_bins == cfg.fiber_bins
                    and srb.y_bins == cfg.y_bins):
                ctx["srb"] = srb
                return srb
        except CacheError:
            pass
    srb = lift_srb(spec, _acip(ctx), cfg.iters, cfg.samples, cfg.seed,
                   fiber_bins=cfg.fiber_bins, y_bins=cfg.y_bins,
                   workers=cfg.workers)
    save_srb(path, srb)
    ctx["srb"] = srb
    return srb


def stage_validate(ctx):
    cfg = ctx["config"]
    spec = _spec(ctx)
    rep = validate_hyperbolicity(spec, grid_n=cfg.grid_n)
    checks = {
        name: {
            "observed": c.observed, "bound": c.bound,
            "margin": c.margin, "passed": c.passed,
        }
        for name, c in rep.checks.items()
    }
    payload = {
        "map": spec.label,
        "map_hash": spec.map_hash,
        "parameters": spec.params_dict,
        "grid_n": rep.grid_resolution,
        "alpha": spec.alpha,
        "k0": spec.k0,
        "checks": checks,
        "inconclusive": sorted(rep.inconclusive),
        "passed": rep.passed(strict_a4=cfg.strict_a4),
    }
    _write_json(Path(cfg.out_dir) / "hyperbolicity.json", payload)
    ctx["hyperbolicity"] = rep
    if not rep.passed(strict_a4=cfg.strict_a4):
        failing = [n for n, c in rep.checks.items() if not c.passed]
        raise StageError("validate", f"hyperbolicity checks failed: {failing}")


def stage_enumerate(ctx):
    cfg = ctx["config"]
    spec = _spec(ctx)
    summary = {}
    for r in cfg.enum_r:
        inv = m_inventory(spec, r, x_grid_n=cfg.x_grid_n,
                          budget=cfg.word_budget)
        name = f"inventory_r{r:.10g}.blob"
        save_inventory(inv, Path(cfg.out_dir) / name, spec)
        lens = [len(w) for w in inv.words]
        summary[f"{r:.10g}"] = {
            "file": name,
            "words": len(inv.words),
            "mass": inv.mass(),
            "mass_defect": abs(inv.mass() - 1.0),
            "len_min": min(lens),
            "len_max": max(lens),
        }
    _write_json(Path(cfg.out_dir) / "enumeration.json", summary)
    ctx["enumeration"] = summary


def stage_acip(ctx):
    cfg = ctx["config"]
    dens = _acip(ctx)
    lines = ["bin_lo,mass,density"]
    edges = np.linspace(0.0, 1.0, cfg.bins + 1)
    dd = dens.density()
    for lo, m, d in zip(edges[:-1], dens.masses, dd):
        lines.append(f"{float(lo)!r},{float(m)!r},{float(d)!r}")
    if "csv" in cfg.formats:
        with open(Path(cfg.out_dir) / "acip.csv", "w") as fh:
            fh.write("\n".join(lines) + "\n")
    _write_json(Path(cfg.out_dir) / "acip.json", {
        "bins": dens.bins,
        "l_bound": dens.l_bound,
        "L_bound": dens.L_bound,
        "residual": dens.residual,
        "sweeps": dens.sweeps,
    })


def stage_lift(ctx):
    cfg = ctx["config"]
    srb = _srb(ctx)
    _write_json(Path(cfg.out_dir) / "lift.json", {
        "spec_hash": srb.spec_hash,
        "seed": srb.seed,
        "n_samples": srb.n_samples,
        "iterations_used": srb.iterations_used,
        "kept": srb.kept,
        "discarded": srb.discarded,
        "jittered": srb.jittered,
        "contraction_budget": srb.contraction_budget,
        "fiber_bins": srb.fiber_bins,
        "y_bins": srb.y_bins,
    })


def stage_criterion(ctx):
    cfg = ctx["config"]
    table = tsujii_criterion(_srb(ctx), cfg.r_list, weighting=cfg.weighting,
                             bounded_ratio=cfg.bounded_ratio)
    if "csv" in cfg.formats:
        table.to_csv(Path(cfg.out_dir) / "criterion.csv")
    _write_json(Path(cfg.out_dir) / "criterion.json", table.report())
    ctx["criterion"] = table


def stage_fatness(ctx):
    cfg = ctx["config"]
    fit = fatness_fit(_spec(ctx), cfg.fat_depth, depth_min=cfg.fat_depth_min,
                      x_grid_n=cfg.x_grid_n, budget=cfg.word_budget)
    _write_json(Path(cfg.out_dir) / "fatness.json", {
        "k1": fit.k1,
        "epsilon": fit.epsilon,
        "per_word_slack": fit.per_word_slack,
        "words_used": fit.words_used,
        "depth_min": fit.depth_min,
        "depth_max": fit.depth_max,
        "residual": fit.residual,
        "passed": fit.passed,
    })
    ctx["fatness"] = fit


def stage_transversality(ctx):
    cfg = ctx["config"]
    sweep = ntr_sweep(_spec(ctx), cfg.enum_r, default_delta(cfg),
                      x_grid_n=cfg.x_grid_n, tail_depth=cfg.tail_depth,
                      pair_budget=cfg.pair_budget, seed=cfg.seed,
                      budget=cfg.word_budget)
    if "csv" in cfg.formats:
        sweep.to_csv(Path(cfg.out_dir) / "ntr.csv")
    sweep.to_json(Path(cfg.out_dir) / "ntr.json")
    ctx["ntr"] = sweep


def stage_diagnostics(ctx):
    cfg = ctx["config"]
    csv_path = Path(cfg.out_dir) / "diagnostics_lattice.csv" if "csv" in cfg.formats else None
    rep = run_diagnostics(_spec(ctx), word_depth=cfg.diag_word_depth,
                          lattice_n=cfg.diag_lattice, depth=cfg.cone_depth,
                          seed=cfg.seed, csv_path=csv_path)
    rep.to_json(Path(cfg.out_dir) / "diagnostics.json")
    ctx["diagnostics"] = rep


def stage_figure(ctx):
    cfg = ctx["config"]
    svg = Path(cfg.out_dir) / f"strips_n{cfg.figure_n}.svg" if "svg" in cfg.formats else None
    csv = Path(cfg.out_dir) / f"strips_n{cfg.figure_n}.csv" if "csv" in cfg.formats else None
    emit_strip_polygons(_spec(ctx), cfg.figure_n, svg_path=svg, csv_path=csv,
                        x_grid_n=cfg.figure_grid)


def _trend(values):
    if all(v == 0.0 for v in values):
        return "zero"
    if all(b < a for a, b in zip(values, values[1:])):
        return "decreasing"
    if all(b > a for a, b in zip(values, values[1:])):
        return "increasing"
    if all(b <= a for a, b in zip(values, values[1:])):
        return "nonincreasing"
    return "mixed"


def stage_verdict(ctx):
    cfg = ctx["config"]
    fit = ctx.get("fatness")
    table = ctx.get("criterion")
    sweep = ctx.get("ntr")
    payload = {
        "fat": bool(fit.passed) if fit is not None else None,
        "transversal_window": (_trend([rep.sum_value for rep in sweep.reports])
                               if sweep is not None else "skipped"),
        "I_r_window": table.verdict if table is not None else "skipped",
        "fat_epsilon": fit.epsilon if fit is not None else None,
        "ntr_exponent": sweep.exponent if sweep is not None else None,
        "map_hash": _spec(ctx).map_hash,
    }
    _write_json(Path(cfg.out_dir) / "verdict.json", payload)
    ctx["verdict"] = payload


STAGES = (
    ("validate", stage_validate),
    ("enumerate", stage_enumerate),
    ("acip", stage_acip),
    ("lift", stage_lift),
    ("criterion", stage_criterion),
    ("fatness", stage_fatness),
    ("transversality", stage_transversality),
    ("diagnostics", stage_diagnostics),
    ("figure", stage_figure),
)
_STAGE_MAP = dict(STAGES)

_MANIFEST_NAME = "manifest.json"


def _versions():
    return {
        "package": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": ".".join(str(v) for v in sys.version_info[:3]),
        "cache_format": cache.FORMAT_VERSION,
    }


def run_pipeline(config):
    """Run every stage in order and write the manifest.

    The manifest records wall-clock per stage and a digest per output file;
    it is the only output that differs between otherwise identical runs, so
    byte-level comparisons should skip it.  On stage failure the partial
    manifest is still written, with the failing stage named.
    """
    finalize_config(config)
    ctx = {"config": config}
    manifest = RunManifest(map_hash=_spec(ctx).map_hash,
                           versions=_versions(), config=config.as_dict())
    out = Path(config.out_dir)
    try:
        for name, fn in STAGES + (("verdict", stage_verdict),):
            t0 = time.perf_counter()
            try:
                fn(ctx)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
            finally:
                manifest.wall_clock[name] = time.perf_counter() - t0
    except StageError as exc:
        manifest.failed_stage = exc.stage
        raise
    finally:
        for p in sorted(out.iterdir()):
            if p.is_file() and p.name != _MANIFEST_NAME:
                manifest.files[p.name] = cache.file_sha256(p)
        manifest.to_json(out / _MANIFEST_NAME)
    return manifest


def cache_roundtrip(path):
    """Reload any cache container, dispatching on its kind tag."""
    kind = cache.blob_kind(path)
    if kind == "m_inventory":
        return load_inventory(path)
    if kind == "srb_estimate":
        return load_srb(path)
    return cache.read_blob(path)


# ---------------------------------------------------------------------------
# argument parsing


def _add_flags(p):
    g = p.add_argument_group("map")
    g.add_argument("--family", choices=("baker", "affine"))
    g.add_argument("--lam", type=float, help="baker fiber contraction")
    g.add_argument("--a", type=float, help="affine family slope at u=0")
    g.add_argument("--b", type=float, help="affine family slope at u=1")
    g = p.add_argument_group("validation")
    g.add_argument("--grid-n", type=int)
    g.add_argument("--strict-a4", action="store_true", default=None)
    g = p.add_argument_group("enumeration")
    g.add_argument("--depth-max", type=int)
    g.add_argument("--x-grid-n", type=int)
    g.add_argument("--enum-r", type=str, help="comma-separated decreasing scales")
    g.add_argument("--word-budget", type=int)
    g = p.add_argument_group("measure")
    g.add_argument("--bins", type=int)
    g.add_argument("--samples", type=int)
    g.add_argument("--iters", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--fiber-bins", type=int)
    g.add_argument("--y-bins", type=int)
    g.add_argument("--r-list", type=str, help="comma-separated decreasing radii")
    g.add_argument("--weighting", choices=("lebesgue", "factor_acip"))
    g.add_argument("--bounded-ratio", type=float)
    g = p.add_argument_group("conditions")
    g.add_argument("--delta", type=float)
    g.add_argument("--tail-depth", type=int)
    g.add_argument("--pair-budget", type=int)
    g.add_argument("--fat-depth", type=int)
    g.add_argument("--fat-depth-min", type=int)
    g = p.add_argument_group("diagnostics")
    g.add_argument("--diag-word-depth", type=int)
    g.add_argument("--diag-lattice", type=int)
    g.add_argument("--cone-depth", type=int)
    g = p.add_argument_group("output")
    g.add_argument("--figure-n", type=int)
    g.add_argument("--figure-grid", type=int)
    g.add_argument("--out", dest="out_dir", type=str)
    g.add_argument("--formats", type=str, help="comma subset of csv,json,svg")
    p.add_argument("--config", type=str, help="JSON file overriding all flags")


_LIST_FIELDS = {"enum_r": float, "r_list": float, "formats": str}


def _config_from(ns):
    config = RunConfig()
    for f in dataclasses.fields(RunConfig):
        val = getattr(ns, f.name, None)
        if val is None:
            continue
        if f.name in _LIST_FIELDS and isinstance(val, str):
            conv = _LIST_FIELDS[f.name]
            val = tuple(conv(v.strip()) for v in val.split(",") if v.strip())
        setattr(config, f.name, val)
    if ns.config is not None:
        try:
            overrides = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {ns.config}: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in dataclasses.fields(RunConfig)}
        for key, val in overrides.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key in _LIST_FIELDS and isinstance(val, list):
                val = tuple(_LIST_FIELDS[key](v) for v in val)
            setattr(config, key, val)
    return config


def make_parser():
    parser = argparse.ArgumentParser(
        prog="horseshoe",
        description="Strip-map pipeline: validation, enumeration, measure "
                    "lifting, absolute-continuity conditions, diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, _ in STAGES + (("all", None),):
        p = sub.add_parser(name, help=f"run the {name} stage"
                           if name != "all" else "run the whole pipeline")
        _add_flags(p)
    return parser


def main(argv=None):
    parser = make_parser()
    ns = parser.parse_args(argv)
    try:
        config = _config_from(ns)
        finalize_config(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if ns.command == "all":
            manifest = run_pipeline(config)
            verdict = json.loads(
                (Path(config.out_dir) / "verdict.json").read_text())
            print(json.dumps(verdict, sort_keys=True))
            print(f"manifest: {Path(config.out_dir) / _MANIFEST_NAME} "
                  f"({len(manifest.files)} files)")
        else:
            ctx = {"config": config}
            try:
                _STAGE_MAP[ns.command](ctx)
            except StageError:
                raise
            except HorseshoeError as exc:
                raise StageError(ns.command, exc) from exc
            print(f"{ns.command}: ok (outputs in {config.out_dir})")
    except StageError as exc:
        print(f"{exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
