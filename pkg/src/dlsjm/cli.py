"""Command-line front end.

Every subcommand reads an optional TOML file (``--config``) whose tables mirror
the library configs::

    seed = 7
    workers = 2
    [prior]      sigma_beta_sq, sigma_theta_sq, a_sigma, b_sigma, ordered_pairs
    [sampler]    n_iterations, burn_in, thin, jump_beta, jump_theta, jump_z_scale, dim, ...
    [design]     p11, p12, p21, p22, rho, respondents_per_class, ...
    [clusters]   g_person, g_item, k_candidates_person, k_candidates_item
    [em]         n_classes, n_starts, n_nodes, max_iter, rel_tol

Command-line flags override the file, which overrides the defaults.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 convergence guard.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Optional

from . import io
from .clustering import ClusterAssignment, choose_k_neighbors
from .data import DegenerateItemError, InvalidResponseError, ItemResponseMatrix, load_matrix, read_csv, write_csv
from .likelihood import NumericalError, PriorConfig
from .mixture_rasch import EMConfig, MonotonicityError, class_posteriors, classify_map, em_fit
from .pipeline import ClusterSettings, ConvergenceGuardError, fit_to_directory
from .plots import scatter_svg
from .report import MissingRunError, render_report
from .sampler import SamplerConfig
from .simgen import STUDY_GRID, SimDesign, drv_design, simulate
from .study import run_study, write_study

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["main", "build_parser", "resolve_config", "EXIT_OK", "EXIT_INPUT", "EXIT_NUMERIC", "EXIT_GUARD"]

logger = logging.getLogger("dlsjm")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_GUARD = 0, 2, 3, 4


class UsageError(ValueError):
    pass


# flag name -> (section, key, type); every flag defaults to None so unset flags never override the file
_FLAGS = {
    "sigma-beta-sq": ("prior", "sigma_beta_sq", float),
    "sigma-theta-sq": ("prior", "sigma_theta_sq", float),
    "a-sigma": ("prior", "a_sigma", float),
    "b-sigma": ("prior", "b_sigma", float),
    "iterations": ("sampler", "n_iterations", int),
    "burn-in": ("sampler", "burn_in", int),
    "thin": ("sampler", "thin", int),
    "jump-beta": ("sampler", "jump_beta", float),
    "jump-theta": ("sampler", "jump_theta", float),
    "jump-z-scale": ("sampler", "jump_z_scale", float),
    "adapt-window": ("sampler", "adapt_window", int),
    "dim": ("sampler", "dim", int),
    "g-person": ("clusters", "g_person", int),
    "g-item": ("clusters", "g_item", int),
    "p11": ("design", "p11", float),
    "p12": ("design", "p12", float),
    "p21": ("design", "p21", float),
    "p22": ("design", "p22", float),
    "rho": ("design", "rho", float),
    "per-class": ("design", "respondents_per_class", int),
    "classes": ("em", "n_classes", int),
    "starts": ("em", "n_starts", int),
    "nodes": ("em", "n_nodes", int),
}
_SUBCOMMAND_FLAGS = {
    "fit": ("prior", "sampler", "clusters"),
    "simulate": ("design",),
    "study": ("prior", "sampler", "design", "em"),
    "cluster": ("clusters",),
    "baseline": ("em",),
    "report": (),
}


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlsjm", description="Doubly latent space joint model for binary item responses.",
        epilog="Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 convergence guard.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit": "run the MCMC chain, align, summarize, cluster and write a run directory",
        "simulate": "generate a synthetic dataset with known person classes",
        "study": "repeat simulate/fit/score over a design grid and tabulate class recovery",
        "cluster": "re-cluster persons and items from an existing run directory",
        "baseline": "fit the mixture Rasch model and classify respondents",
        "report": "render report.html for a completed run directory",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        if name != "report":
            p.add_argument("--config", type=Path, help="TOML configuration file")
            p.add_argument("--seed", type=int, default=None, help="RNG seed (required here or in the config)")
        if name in ("fit", "baseline"):
            p.add_argument("--data", type=Path, required=True, help="response matrix (.csv or binary cache)")
            p.add_argument("--row-ids", action="store_true", help="first CSV column holds respondent ids")
        if name in ("fit", "simulate", "study", "baseline"):
            p.add_argument("--out", type=Path, required=True, help="output directory")
        if name in ("cluster", "report"):
            p.add_argument("--run", type=Path, required=True, help="completed run directory")
        if name in ("study", "baseline"):
            p.add_argument("--workers", type=int, default=None, help="parallel processes")
        for flag, (section, key, typ) in _FLAGS.items():
            if section in _SUBCOMMAND_FLAGS[name]:
                p.add_argument(f"--{flag}", dest=f"{section}.{key}", type=typ, default=None)
        if "prior" in _SUBCOMMAND_FLAGS[name]:
            p.add_argument("--ordered-pairs", dest="prior.ordered_pairs", action="store_const", const=True,
                           default=None, help="count each undirected pair twice")
        if "clusters" in _SUBCOMMAND_FLAGS[name]:
            p.add_argument("--k-candidates-person", dest="clusters.k_candidates_person", type=_int_list)
            p.add_argument("--k-candidates-item", dest="clusters.k_candidates_item", type=_int_list)
        if name == "fit":
            p.add_argument("--no-guard", action="store_true", help="skip the acceptance-rate guard")
        if name == "simulate":
            p.add_argument("--drv", action="store_true", help="418-respondent preset shaped like the DRV data")
        if name == "study":
            p.add_argument("--replicates", type=int, default=None)
            p.add_argument("--grid", choices=("full", "single"), default=None,
                           help="all six standard conditions (default), or one condition from the design flags")
    return parser


def _load_toml(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, the TOML file and flags (flags win)."""
    cfg: dict[str, Any] = {"prior": {}, "sampler": {}, "design": {}, "clusters": {}, "em": {}}
    for key, value in _load_toml(getattr(args, "config", None)).items():
        if isinstance(value, dict):
            cfg.setdefault(key, {}).update(value)
        else:
            cfg[key] = value
    for dest, value in vars(args).items():
        if "." in dest and value is not None:
            section, key = dest.split(".", 1)
            cfg[section][key] = value
    for key in ("seed", "workers", "replicates", "grid"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _build(cls, section: dict, **extra):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    values = {**section, **extra}
    for k, v in values.items():
        if isinstance(v, list):
            values[k] = tuple(tuple(x) if isinstance(x, list) else x for x in v)
    return cls(**values)


def _seed(cfg: dict, command: str) -> int:
    if "seed" not in cfg:
        raise UsageError(f"{command} needs --seed (or seed = ... in the config)")
    return int(cfg["seed"])


def _check_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {path} is not writable: {exc}") from exc
    return path


def _load(args) -> ItemResponseMatrix:
    if not args.data.exists():
        raise UsageError(f"input not found: {args.data}")
    if args.row_ids:
        return read_csv(args.data, row_ids=True)
    return load_matrix(args.data)


def _echo(cfg: dict, **objs) -> dict:
    out = {k: asdict(v) for k, v in objs.items()}
    out.update({k: cfg[k] for k in ("seed", "workers") if k in cfg})
    return json.loads(json.dumps(out, default=list))


def cmd_fit(args, cfg) -> int:
    seed = _seed(cfg, "fit")
    out = _check_out(args.out)
    x = _load(args)
    prior = _build(PriorConfig, cfg["prior"])
    sampler = _build(SamplerConfig, cfg["sampler"], seed=seed)
    clusters = _build(ClusterSettings, cfg["clusters"], seed=seed)
    inputs = [args.data] + ([args.config] if args.config else [])
    fit_to_directory(x, out, prior, sampler, clusters, inputs=inputs,
                     config_echo=_echo(cfg, prior=prior, sampler=sampler, clusters=clusters),
                     guard=None if args.no_guard else (0.01, 0.99))
    print(out)
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    seed = _seed(cfg, "simulate")
    out = _check_out(args.out)
    design = drv_design(seed=seed, **cfg["design"]) if args.drv else _build(SimDesign, cfg["design"], seed=seed)
    ds = simulate(design)
    write_csv(ds.responses, out / "responses.csv")
    n_groups = design.n_item_groups
    io.write_rows(out / "truth.csv", ["person", "class"] + [f"group{g + 1}_inside" for g in range(n_groups)],
                  ([f"P{k + 1}", ds.labels[k] + 1] + [bool(v) for v in ds.inside[k]] for k in range(design.n)))
    io.write_rows(out / "copied.csv", [f"I{i + 1}" for i in range(design.p)], ([bool(v) for v in r] for r in ds.copied))
    (out / "design.json").write_text(json.dumps(asdict(design), indent=2, sort_keys=True) + "\n")
    print(out)
    return EXIT_OK


def cmd_study(args, cfg) -> int:
    seed = _seed(cfg, "study")
    out = _check_out(args.out)
    prior = _build(PriorConfig, cfg["prior"])
    sampler = _build(SamplerConfig, cfg["sampler"])
    em_section = dict(cfg["em"])
    em_section.pop("n_classes", None)
    em = _build(EMConfig, em_section)
    design_section = dict(cfg["design"])
    grid = cfg.get("grid", "full")
    if grid == "full":
        for key in ("p11", "p12"):
            design_section.pop(key, None)
        designs = [_build(SimDesign, design_section, p11=a, p12=b) for a, b in STUDY_GRID]
    else:
        designs = [_build(SimDesign, design_section)]
    result = run_study(designs, int(cfg.get("replicates", 1)), sampler, seed, prior, em,
                       n_workers=int(cfg.get("workers", 1)))
    write_study(result, out)
    failed = sum(s.n_failed for s in result.conditions)
    if failed:
        logger.warning("%d replicate(s) failed; see replicates.csv", failed)
    print(out)
    return EXIT_OK


def cmd_cluster(args, cfg) -> int:
    seed = _seed(cfg, "cluster")
    settings = _build(ClusterSettings, cfg["clusters"], seed=seed)
    d = args.run
    for side, g, cands, key in (("person", settings.g_person, settings.k_candidates_person, "person"),
                                ("item", settings.g_item, settings.k_candidates_item, "item")):
        path = d / f"{side}_dist.csv"
        if not path.exists():
            raise UsageError(f"{path} not found; is {d} a fit run directory?")
        dist, names = io.read_matrix_csv(path)
        c: ClusterAssignment = choose_k_neighbors(dist, g, cands, seed)
        io.write_rows(d / f"clusters_{side}.csv", [key, "cluster"],
                      ((names[r], c.labels[r] + 1) for r in range(len(names))))
        pos = d / f"positions_{side}.csv"
        if pos.exists():
            mat, _ = io.read_matrix_csv(pos)
            (d / f"{side}_space.svg").write_text(scatter_svg(mat, c.labels, f"{side.capitalize()} latent space",
                                                             point_names=names))
        print(f"{side}: k_neighbors={c.k_neighbors} explained_variance={c.explained_variance:.4f}")
    return EXIT_OK


def cmd_baseline(args, cfg) -> int:
    seed = _seed(cfg, "baseline")
    out = _check_out(args.out)
    x = _load(args)
    section = dict(cfg["em"])
    G = int(section.pop("n_classes", 3))
    em = _build(EMConfig, section, n_workers=int(cfg.get("workers", 1)))
    fit = em_fit(x, G, em, seed)
    params = fit.model.to_dict()
    params.update({"loglik": fit.loglik, "converged": fit.converged, "iterations": len(fit.trace),
                   "best_start": fit.start, "start_logliks": fit.all_logliks, "seed": seed})
    (out / "mixture_params.json").write_text(json.dumps(params, indent=2, sort_keys=True) + "\n")
    post = class_posteriors(fit.model, x)
    labels = classify_map(fit.model, x).labels
    ids = x.row_ids or tuple(f"P{k + 1}" for k in range(x.n))
    io.write_rows(out / "mixture_classes.csv", ["person", "class"] + [f"prob_{g + 1}" for g in range(G)],
                  ([ids[k], labels[k] + 1] + list(post[k]) for k in range(x.n)))
    print(out)
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    print(render_report(args.run))
    return EXIT_OK


_COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "study": cmd_study,
             "cluster": cmd_cluster, "baseline": cmd_baseline, "report": cmd_report}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(args)
        code = _COMMANDS[args.command](args, cfg)
    except (UsageError, InvalidResponseError, DegenerateItemError, MissingRunError, FileNotFoundError,
            tomllib.TOMLDecodeError, TypeError, ValueError) as exc:
        print(f"dlsjm {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, MonotonicityError, FloatingPointError) as exc:
        print(f"dlsjm {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConvergenceGuardError as exc:
        print(f"dlsjm {args.command}: {exc}", file=sys.stderr)
        return EXIT_GUARD
    logger.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
