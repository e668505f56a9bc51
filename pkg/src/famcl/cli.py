"""Command-line interface: ``famcl fit|scan|simulate|replicate|misleading|fwer``.

Options may also come from a JSON file given with ``--config``; keys are
option names (``n_families`` or ``n-families``).  Command-line flags win.

Exit codes: 0 success, 2 bad arguments or configuration, 3 input/output or
data-format problems.
"""

from __future__ import annotations

import argparse
import inspect
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as fio
from .evidence import support_interval
from .likelihood import CLKind
from .misleading import (
    bump_argmax,
    bump_curve,
    estimate_misleading,
    estimate_misleading_singletons,
    fwer_bound,
)
from .model import InvalidArgumentError
from .profile import default_grid, profile_cl
from .scan import scan_region
from .simulate import replicate_rng, simulate_dataset, simulate_genotypes
from .studies import DESIGNS, make_design, run_replicates

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(InvalidArgumentError):
    pass


COMMON_DEFAULTS = {"out": "-", "format": "csv", "seed": 0, "threads": 1, "cl": "independence"}
DEFAULTS = {
    "fit": {"interest": "beta1", "k": "8,32,100,1000", "grid_or": None, "map": None, "snp": None},
    "scan": {"k": "8,32,100,1000", "grid_or": None, "map": None, "snps": None},
    "simulate": {"design": "sibling", "n_families": 100, "replicate": 0, "null_snps": 0},
    "replicate": {"design": "twelve", "n_families": "30,100,300", "replicates": 1000,
                  "parameter": "beta1", "profile_grid": None},
    "misleading": {"design": "twelve", "n_families": 300, "replicates": 1000, "k": "8",
                   "alt_or": "2.72:12.18:16", "bump_out": None},
    "fwer": {"m0": None, "misleading": None},
}
DESIGN_OPTIONS = ("beta0", "beta1", "psi", "maf", "k_sibs", "n_offspring")


def _floats(text, name) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def _range(text, name) -> np.ndarray:
    """``lo:hi:points`` on the OR scale (log-spaced), or a comma list of ORs."""
    if isinstance(text, str) and ":" in text:
        try:
            lo, hi, pts = text.split(":")
            return default_grid(float(lo), float(hi), int(pts))
        except (ValueError, InvalidArgumentError):
            raise ConfigError(f"--{name}: expected lo:hi:points, got {text!r}") from None
    vals = _floats(text, name)
    if any(v <= 0 for v in vals):
        raise ConfigError(f"--{name}: odds ratios must be positive")
    return np.log(np.asarray(sorted(vals)))


def _kind(text) -> CLKind:
    try:
        return CLKind(text)
    except ValueError:
        raise ConfigError(f"--cl must be one of {[k.value for k in CLKind]}, got {text!r}") from None


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--out", help="output path, '-' for stdout")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--cl", help="independence | pairwise | pairwise-psi")


def _add_data(p):
    p.add_argument("--pedigree", help="pedigree TSV")
    p.add_argument("--genotypes", help="genotype matrix TSV")
    p.add_argument("--map", help="optional SNP map TSV")


def _add_design(p):
    p.add_argument("--design", choices=sorted(DESIGNS))
    p.add_argument("--beta0", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--psi", type=float, help="dependence odds ratio of the design")
    p.add_argument("--maf", type=float)
    p.add_argument("--k-sibs", type=int, help="sibship size of the sibling design")
    p.add_argument("--n-offspring", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="famcl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="profile one SNP and report 1/k intervals")
    _add_common(p)
    _add_data(p)
    p.add_argument("--snp")
    p.add_argument("--interest", help="beta1 (default) or a delta parameter")
    p.add_argument("--k", help="comma-separated thresholds")
    p.add_argument("--grid-or", help="lo:hi:points")

    p = sub.add_parser("scan", help="evidence summary for every SNP of a region")
    _add_common(p)
    _add_data(p)
    p.add_argument("--snps", help="comma-separated SNP ids (default: all)")
    p.add_argument("--k")
    p.add_argument("--grid-or")

    p = sub.add_parser("simulate", help="write a simulated dataset")
    _add_common(p)
    _add_design(p)
    p.add_argument("--n-families", type=int)
    p.add_argument("--replicate", type=int)
    p.add_argument("--null-snps", type=int, help="extra SNPs unrelated to the phenotype")
    p.add_argument("--out-prefix", help="writes PREFIX.ped.tsv, PREFIX.geno.tsv, PREFIX.map.tsv")

    p = sub.add_parser("replicate", help="mean estimates over simulated replicates")
    _add_common(p)
    _add_design(p)
    p.add_argument("--n-families", help="comma-separated family counts")
    p.add_argument("--replicates", type=int)
    p.add_argument("--parameter", help="beta1 or delta")
    p.add_argument("--profile-grid", help="lo:hi:points on the parameter scale")

    p = sub.add_parser("misleading", help="probability of misleading evidence")
    _add_common(p)
    _add_design(p)
    p.add_argument("--n-families", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--k")
    p.add_argument("--alt-or", help="lo:hi:points or comma list of alternative ORs")
    p.add_argument("--bump-out", help="also write the bump curve here")

    p = sub.add_parser("fwer", help="family-wise error bound")
    _add_common(p)
    p.add_argument("--n-eff", type=int)
    p.add_argument("--m0", type=float)
    p.add_argument("--misleading", help="JSON output of the misleading command")
    return ap


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < command-line flags."""
    opts = dict(COMMON_DEFAULTS)
    opts.update(DEFAULTS.get(args.command, {}))
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as err:
            raise OSError(f"cannot read config {args.config}: {err.strerror or err}") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"config {args.config}: invalid JSON ({err})") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"config {args.config}: expected a JSON object")
        known = set(vars(args))
        for key, val in cfg.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"config {args.config}: unknown option {key!r}")
            opts[key] = val
    for key, val in vars(args).items():
        if val is not None:
            opts[key] = val
    return opts


def _design(opts):
    name = opts.get("design")
    overrides = {}
    mapping = {"k_sibs": "k"}
    for key in DESIGN_OPTIONS:
        if opts.get(key) is not None:
            overrides[mapping.get(key, key)] = opts[key]
    factory = DESIGNS[name]
    accepted = set(inspect.signature(factory).parameters)
    bad = sorted(set(overrides) - accepted)
    if bad:
        raise ConfigError(f"design {name!r} does not accept {', '.join(bad)}")
    return make_design(name, **overrides)


def _need(opts, *keys):
    missing = [k for k in keys if opts.get(k) in (None, "")]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m.replace("_", "-")
                                                                      for m in missing))


def cmd_fit(opts):
    _need(opts, "pedigree", "genotypes")
    ds = fio.parse_dataset(opts["pedigree"], opts["genotypes"], opts.get("map"))
    snp = opts.get("snp") or ds.snp_ids[0]
    if snp not in ds.snp_index:
        raise ConfigError(f"unknown SNP {snp!r}")
    grid = _range(opts["grid_or"], "grid-or") if opts.get("grid_or") else None
    curve = profile_cl(ds.packed(snp), _kind(opts["cl"]), interest=opts["interest"], grid=grid)
    intervals = []
    if curve.adjustment is not None:
        for k in sorted(_floats(opts["k"], "k")):
            iv = support_interval(curve, k)
            intervals.append({"k": iv.k, "lower_or": iv.lower_or, "upper_or": iv.upper_or,
                              "lower_open": iv.lower_open, "upper_open": iv.upper_open,
                              "contains_null": iv.contains_null})
    fio.emit_results(curve, opts["format"], opts["out"],
                     extra_meta={"snp_id": snp, "intervals": intervals})


def cmd_scan(opts):
    _need(opts, "pedigree", "genotypes")
    ds = fio.parse_dataset(opts["pedigree"], opts["genotypes"], opts.get("map"))
    snps = [s.strip() for s in opts["snps"].split(",")] if opts.get("snps") else None
    grid = _range(opts["grid_or"], "grid-or") if opts.get("grid_or") else None
    ks = _floats(opts["k"], "k")
    if any(k <= 1 for k in ks):
        raise ConfigError("--k values must exceed 1")
    if snps:
        unknown = [s for s in snps if s not in ds.snp_index]
        if unknown:
            raise ConfigError(f"unknown SNPs: {', '.join(unknown)}")
    records = scan_region(ds, snps, ks, _kind(opts["cl"]), grid, int(opts["threads"]))
    fio.emit_results(records, opts["format"], opts["out"])


def cmd_simulate(opts):
    _need(opts, "out_prefix")
    design = _design(opts)
    cfg = design.config(int(opts["n_families"]), int(opts["seed"]))
    batch = simulate_dataset(cfg, int(opts["replicate"]))
    n_null = int(opts["null_snps"])
    extra = []
    rng = replicate_rng(int(opts["seed"]) + 1, int(opts["replicate"]))
    for _ in range(n_null):
        extra.append(simulate_genotypes(design.template, design.maf, rng, batch.n_families))
    snp_ids = ["snp1"] + [f"null{i + 1}" for i in range(n_null)]
    tmpl = design.template
    obs = tmpl.observed_indices()
    observed_ids = [tmpl.members[i].id for i in obs]
    families = []
    for f in range(batch.n_families):
        fid = f"F{f + 1}"
        members = []
        for i, m in enumerate(tmpl.members):
            mid = f"{fid}_{m.id}"
            fa = f"{fid}_{m.father}" if m.father else None
            mo = f"{fid}_{m.mother}" if m.mother else None
            if m.observed:
                j = observed_ids.index(m.id)
                geno = [int(batch.genotypes[f, j])] + [int(e[f, i]) for e in extra]
                members.append((mid, fa, mo, int(batch.phenotypes[f, j]), geno))
            else:
                members.append((mid, fa, mo, None, None))
        families.append({"family_id": fid, "members": members})
    prefix = str(opts["out_prefix"])
    fio.write_dataset(families, snp_ids, prefix + ".ped.tsv", prefix + ".geno.tsv",
                      prefix + ".map.tsv")


def cmd_replicate(opts):
    design = _design(opts)
    kinds = [_kind(k.strip()) for k in str(opts["cl"]).split(",")]
    grid = None
    if opts.get("profile_grid"):
        try:
            lo, hi, pts = str(opts["profile_grid"]).split(":")
            grid = np.linspace(float(lo), float(hi), int(pts))
        except ValueError:
            raise ConfigError("--profile-grid: expected lo:hi:points") from None
    rows = []
    for n in _floats(opts["n_families"], "n-families"):
        study = run_replicates(design, int(n), int(opts["replicates"]), kinds,
                               opts["parameter"], int(opts["seed"]), int(opts["threads"]), grid)
        rows.extend(study.summary())
    fio.emit_rows("replicate", rows, opts["format"], opts["out"])


def cmd_misleading(opts):
    design = _design(opts)
    alts = _range(opts["alt_or"], "alt-or")
    kind = _kind(opts["cl"])
    ks = _floats(opts["k"], "k")
    if len(ks) != 1:
        raise ConfigError("--k takes a single threshold for the misleading command")
    k = ks[0]
    truth = design.params.beta1
    alts = alts[np.abs(alts - truth) > 1e-12]
    if design.name == "singleton" and kind is CLKind.INDEPENDENCE:
        est = estimate_misleading_singletons(int(opts["n_families"]), design.maf,
                                             design.params.beta0, truth, alts, k,
                                             int(opts["replicates"]), int(opts["seed"]))
    else:
        est = estimate_misleading(design.config(int(opts["n_families"]), int(opts["seed"])),
                                  design.params, alts, k, kind, int(opts["replicates"]),
                                  int(opts["threads"]))
    fio.emit_results(est, opts["format"], opts["out"])
    if opts.get("bump_out"):
        c = np.linspace(0.05, 4 * bump_argmax(k), 200)
        fio.emit_results(bump_curve(c, k), opts["format"], opts["bump_out"])


def cmd_fwer(opts):
    _need(opts, "n_eff")
    n_eff = int(opts["n_eff"])
    rows = []
    if opts.get("misleading"):
        doc = fio.load_json_results(opts["misleading"])
        if doc.get("kind") != "misleading":
            raise fio.DataError(f"{opts['misleading']}: not a misleading-evidence document")
        for r in doc["records"]:
            for col in ("proportion_raw", "proportion_adjusted"):
                rows.append({"alt_or": r["alt_or"], "k": r["k"], "source": col,
                             "m0": r[col], "n_eff": n_eff, "fwer_bound": fwer_bound(n_eff, r[col])})
    elif opts.get("m0") is not None:
        m0 = float(opts["m0"])
        rows.append({"alt_or": None, "k": None, "source": "m0", "m0": m0, "n_eff": n_eff,
                     "fwer_bound": fwer_bound(n_eff, m0)})
    else:
        raise ConfigError("fwer needs --m0 or --misleading")
    fio.emit_rows("fwer", rows, opts["format"], opts["out"])


COMMANDS = {"fit": cmd_fit, "scan": cmd_scan, "simulate": cmd_simulate,
            "replicate": cmd_replicate, "misleading": cmd_misleading, "fwer": cmd_fwer}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        opts = resolve(args)
        COMMANDS[args.command](opts)
    except (fio.DataError, OSError) as err:
        print(f"famcl: error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidArgumentError, ValueError, KeyError) as err:
        print(f"famcl: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
