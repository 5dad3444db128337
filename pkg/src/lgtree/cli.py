"""Command-line entry point.

Subcommands mirror the library operations; every run writes a JSON report
(stdout by default, ``--out`` for a file) embedding the configuration echo
and library version.  Exit codes: 0 success, 1 validation error, 2 runtime
error.  ``--deterministic`` drops the timestamp so identical configurations
produce byte-identical reports.  Configuration may come from ``--config``
(a JSON file of flag values); explicit flags override it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass

from . import __version__
from .errors import ParseError, ValidationError

LN2 = math.log(2.0)


@dataclass
class ExperimentConfig:
    command: str
    tree_path: str | None = None
    seed: int = 7
    samples: int = 100000
    grid_step: float = 0.05
    ry: str | None = None
    rb: str | None = None
    pi: str = "0.5"
    block_length: int = 8
    units: str = "nats"
    out: str | None = None
    deterministic: bool = False
    method: str = "both"
    tv_threshold: float = 0.5
    margin: float = 0.2
    csv: str | None = None
    dump_csv: str | None = None

    def validate(self):
        if self.seed < 0:
            raise ValidationError("cli: field 'seed' must be a non-negative integer")
        if self.samples < 1:
            raise ValidationError("cli: field 'samples' must be positive")
        if self.block_length < 1:
            raise ValidationError("cli: field 'blocklen' must be positive")
        if self.units not in ("nats", "bits"):
            raise ValidationError("cli: field 'units' must be 'nats' or 'bits'")
        if not (0.0 < self.grid_step <= 0.25):
            raise ValidationError("cli: field 'grid' must lie in (0, 0.25]")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lgtree", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")
    commands = [
        "validate", "covariance", "enumerate-signs", "sign-report", "mi",
        "mi-conditional", "optimize-pi", "rate-check", "synthesize",
        "verify-constraints", "report-all",
    ]
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("tree_path")
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--grid", dest="grid_step", type=float, default=None)
        p.add_argument("--ry", default=None)
        p.add_argument("--rb", default=None)
        p.add_argument("--pi", default=None)
        p.add_argument("--blocklen", dest="block_length", type=int, default=None)
        p.add_argument("--units", choices=("nats", "bits"), default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--deterministic", action="store_true", default=None)
        p.add_argument("--method", choices=("both", "closed", "direct"), default=None)
        p.add_argument("--tv-threshold", dest="tv_threshold", type=float, default=None)
        p.add_argument("--margin", type=float, default=None)
        p.add_argument("--csv", default=None)
        p.add_argument("--dump-csv", dest="dump_csv", default=None)
    return parser


def _merge_config(args: argparse.Namespace) -> ExperimentConfig:
    provided = {
        k: v for k, v in vars(args).items()
        if v is not None and k not in ("config",)
    }
    base: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                base = json.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"cli: config file {args.config!r} does not exist")
        except json.JSONDecodeError as exc:
            raise ParseError(f"cli: config file is not valid JSON: {exc}")
    merged = {**base, **provided}
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ValidationError(f"cli: unknown configuration field(s) {sorted(unknown)}")
    config = ExperimentConfig(**merged)
    config.validate()
    return config


def _to_nats(value: float, units: str) -> float:
    return value * LN2 if units == "bits" else value


def _from_nats(value: float, units: str) -> float:
    return value / LN2 if units == "bits" else value


def _parse_pi(spec: str, tree) -> "BernoulliParams":
    from .info import BernoulliParams

    spec = spec.strip()
    if "=" in spec:
        table = {}
        for part in spec.split(","):
            node, _, val = part.partition("=")
            if not val:
                raise ValidationError(f"cli: field 'pi' entry {part!r} is not node=value")
            table[node.strip()] = float(val)
        missing = [h for h in tree.hidden if h not in table]
        if missing:
            raise ValidationError(f"cli: field 'pi' misses hidden node(s) {missing}")
        return BernoulliParams.make(table)
    try:
        shared = float(spec)
    except ValueError:
        raise ValidationError(f"cli: field 'pi' value {spec!r} is not a number")
    if not (0.0 <= shared <= 1.0):
        raise ValidationError("cli: field 'pi' must lie in [0, 1]")
    return BernoulliParams.uniform(tree, shared)


def _parse_rates(config: ExperimentConfig, tree) -> "RateTuple":
    from .synthesis import RateTuple

    if config.ry is None or config.rb is None:
        raise ValidationError("cli: fields 'ry' and 'rb' are required for this command")
    ry = [_to_nats(float(v), config.units) for v in str(config.ry).split(",")]
    rb = [_to_nats(float(v), config.units) for v in str(config.rb).split(",")]
    depth = tree.num_layers
    if len(ry) == 1:
        ry = ry * depth
    if len(rb) == 1:
        rb = rb * depth
    if len(ry) != depth or len(rb) != depth:
        raise ValidationError(
            f"cli: fields 'ry'/'rb' need one rate per layer (tree has {depth})"
        )
    return RateTuple.make(list(zip(ry, rb)), config.block_length)


def _mi_json(result, units: str, seed: int | None = None) -> dict:
    out = result.as_dict()
    out["value"] = _from_nats(result.value, units)
    out["units"] = units
    if seed is not None:
        out["seed"] = seed
    return out


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".lgtree-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(config: ExperimentConfig, result: dict) -> None:
    report = {
        "command": config.command,
        "version": __version__,
        "config": dataclasses.asdict(config),
        "result": result,
    }
    if not config.deterministic:
        import datetime

        report["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if config.out:
        _atomic_write(config.out, text)
    else:
        sys.stdout.write(text)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _load(config: ExperimentConfig):
    from .trees import load_tree

    if not os.path.exists(config.tree_path):
        raise ValidationError(f"cli: tree file {config.tree_path!r} does not exist")
    return load_tree(config.tree_path)


# -- command implementations --------------------------------------------------

def _cmd_validate(config: ExperimentConfig) -> dict:
    tree = _load(config)
    return {
        "valid": True,
        "observed": tree.n,
        "hidden": tree.k,
        "layers": tree.num_layers,
        "layer_sizes": {str(d): len(tree.layer_nodes(d)) for d in range(1, tree.num_layers + 1)},
    }


def _cmd_covariance(config: ExperimentConfig) -> dict:
    from .trees import joint_covariance, tree_determinant

    tree = _load(config)
    model = joint_covariance(tree)
    import numpy as np

    direct = float(np.linalg.det(np.asarray(model.joint)))
    product = tree_determinant(tree)
    return {
        "node_order": [n for n, _ in tree.spec.nodes],
        "joint": np.asarray(model.joint).tolist(),
        "observed_block": np.asarray(model.observed_block).tolist(),
        "determinant_product": product,
        "determinant_direct": direct,
        "determinant_rel_err": abs(direct - product) / abs(product),
    }


def _cmd_enumerate(config: ExperimentConfig) -> dict:
    from .signs import enumerate_equivalent_trees, verify_equivalence
    from .trees import format_tree

    tree = _load(config)
    variants = enumerate_equivalent_trees(tree)
    equivalent = verify_equivalence(variants)
    sign_report = _cmd_sign_report(config)
    docs = [format_tree(t) for t in variants]
    written = None
    if config.out:
        # --out names a directory: one tree file per variant plus report.json
        directory = config.out
        os.makedirs(directory, exist_ok=True)
        written = []
        for i, doc in enumerate(docs):
            path = os.path.join(directory, f"variant_{i:04d}.tree")
            _atomic_write(path, doc)
            written.append(path)
        config.out = os.path.join(directory, "report.json")
    return {
        "count": len(variants),
        "all_equivalent": equivalent,
        "sign_report": sign_report,
        "variant_files": written,
        "variants": None if written else docs,
    }


def _cmd_sign_report(config: ExperimentConfig) -> dict:
    from .signs import sign_class_report

    tree = _load(config)
    report = sign_class_report(tree)
    return {
        "edge_sign_variables": report.edge_sign_variables,
        "constraint_count": report.constraint_count,
        "free_variables": report.free_variables,
        "constraints": [
            {
                "edge_product": [list(v) for v in lhs],
                "class_product": [list(v) for v in rhs],
            }
            for lhs, rhs in report.constraints
        ],
    }


def _cmd_mi(config: ExperimentConfig) -> dict:
    from .info import mi_closed_form, mi_direct
    from .trees import joint_covariance

    tree = _load(config)
    out: dict = {"seed": config.seed}
    if config.method in ("both", "direct"):
        out["direct"] = _mi_json(mi_direct(tree), config.units)
    if config.method in ("both", "closed"):
        sigma = joint_covariance(tree).observed_block
        out["closed_form"] = _mi_json(mi_closed_form(sigma, tree), config.units)
    if config.method == "both":
        out["abs_difference_nats"] = abs(
            out["direct"]["value_nats"] - out["closed_form"]["value_nats"]
        )
    return out


def _cmd_mi_conditional(config: ExperimentConfig) -> dict:
    from .info import mixture_mi_profile, mi_direct, mi_sign_marginal

    tree = _load(config)
    pi = _parse_pi(config.pi, tree)
    profile = mixture_mi_profile(tree, pi, config.samples, config.seed)
    marginal = mi_sign_marginal(tree, pi, config.samples, config.seed)
    fixed = mi_direct(tree)
    chain = profile["inputs"].value + profile["signs_given_inputs"].value
    return {
        "seed": config.seed,
        "pi": pi.as_dict(),
        "signs_given_inputs": _mi_json(profile["signs_given_inputs"], config.units, config.seed),
        "inputs": _mi_json(profile["inputs"], config.units, config.seed),
        "signs_marginal": _mi_json(marginal, config.units, config.seed),
        "chain_sum_nats": chain,
        "fixed_total_nats": fixed.value,
        "chain_gap_nats": chain - fixed.value,
    }


def _cmd_optimize_pi(config: ExperimentConfig) -> dict:
    from .info import optimize_pi

    tree = _load(config)
    best, curve = optimize_pi(tree, config.grid_step, config.samples, config.seed)
    if config.csv:
        rows = []
        for point, est in curve:
            label = ":".join(repr(p) for p in point) if len(point) > 1 else repr(point[0])
            rows.append([label, est.value, est.std_error])
        _write_csv(config.csv, ["pi", "value", "std_error"], rows)
    return {
        "seed": config.seed,
        "grid_step": config.grid_step,
        "pi_star": best.as_dict(),
        "curve": [
            {"pi": list(point), "value_nats": est.value, "std_error": est.std_error}
            for point, est in curve
        ],
    }


def _cmd_rate_check(config: ExperimentConfig) -> dict:
    from .synthesis import rate_region_check

    tree = _load(config)
    pi = _parse_pi(config.pi, tree)
    rates = _parse_rates(config, tree)
    margins = rate_region_check(tree, rates, pi, samples=config.samples, seed=config.seed)
    return {"seed": config.seed, "pi": pi.as_dict(), "margins": margins}


def _run_synthesis(config: ExperimentConfig):
    from .synthesis import build_codebooks, estimate_divergence

    tree = _load(config)
    pi = _parse_pi(config.pi, tree)
    rates = _parse_rates(config, tree)
    codebook = build_codebooks(tree, rates, pi, config.seed)
    report = estimate_divergence(
        tree, codebook, config.samples, config.seed, tv_threshold=config.tv_threshold
    )
    return tree, codebook, report


def _cmd_synthesize(config: ExperimentConfig) -> dict:
    from .synthesis import synthesize

    tree, codebook, report = _run_synthesis(config)
    if config.dump_csv:
        blocks = synthesize(tree, codebook, min(config.samples, 200), config.seed)
        rows = []
        for r, block in enumerate(blocks):
            for t, symbol in enumerate(block):
                for node, value in zip(tree.observed, symbol):
                    rows.append([r, t, node, float(value)])
        _write_csv(config.dump_csv, ["run", "t", "node", "value"], rows)
    return report.as_dict()


def _cmd_verify(config: ExperimentConfig) -> dict:
    from .synthesis import verify_encoding_constraints

    tree, codebook, report = _run_synthesis(config)
    checks = verify_encoding_constraints(tree, codebook, report, seed=config.seed)
    return {
        "report": report.as_dict(),
        "checks": [dataclasses.asdict(c) for c in checks],
        "all_passed": all(c.passed for c in checks),
    }


def _cmd_report_all(config: ExperimentConfig) -> dict:
    from .info import mixture_mi_profile, mi_closed_form, mi_direct
    from .signs import enumerate_equivalent_trees, sign_class_report, verify_equivalence
    from .synthesis import (
        build_codebooks,
        estimate_divergence,
        frontier_rates,
        verify_encoding_constraints,
    )
    from .trees import joint_covariance

    tree = _load(config)
    summary = _cmd_validate(config)
    out: dict = {"validate": summary, "covariance": _cmd_covariance(config)}
    out["sign_report"] = _cmd_sign_report(config)
    if tree.k <= 12:
        variants = enumerate_equivalent_trees(tree)
        out["enumeration"] = {
            "count": len(variants),
            "all_equivalent": verify_equivalence(variants),
        }
    pi = _parse_pi(config.pi, tree)
    mi_d = mi_direct(tree)
    out["mi"] = {"direct": _mi_json(mi_d, config.units)}
    if all(len(tree.adjacency[o]) == 1 for o in tree.observed):
        sigma = joint_covariance(tree).observed_block
        closed = mi_closed_form(sigma, tree)
        out["mi"]["closed_form"] = _mi_json(closed, config.units)
        out["mi"]["abs_difference_nats"] = abs(closed.value - mi_d.value)
    samples = min(config.samples, 50000)
    profile = mixture_mi_profile(tree, pi, samples, config.seed)
    out["mi_conditional"] = {
        "signs_given_inputs": _mi_json(profile["signs_given_inputs"], config.units),
        "inputs": _mi_json(profile["inputs"], config.units),
        "chain_gap_nats": profile["inputs"].value
        + profile["signs_given_inputs"].value
        - mi_d.value,
    }
    rates = frontier_rates(
        tree, pi, config.margin, min(config.block_length, 6),
        samples=samples, seed=config.seed,
    )
    codebook = build_codebooks(tree, rates, pi, config.seed)
    report = estimate_divergence(
        tree, codebook, min(samples, 1500), config.seed, tv_threshold=config.tv_threshold
    )
    checks = verify_encoding_constraints(tree, codebook, report, runs=1500, seed=config.seed)
    out["synthesis"] = report.as_dict()
    out["constraints"] = {
        "checks": [dataclasses.asdict(c) for c in checks],
        "all_passed": all(c.passed for c in checks),
    }
    return out


_COMMANDS = {
    "validate": _cmd_validate,
    "covariance": _cmd_covariance,
    "enumerate-signs": _cmd_enumerate,
    "sign-report": _cmd_sign_report,
    "mi": _cmd_mi,
    "mi-conditional": _cmd_mi_conditional,
    "optimize-pi": _cmd_optimize_pi,
    "rate-check": _cmd_rate_check,
    "synthesize": _cmd_synthesize,
    "verify-constraints": _cmd_verify,
    "report-all": _cmd_report_all,
}


def run(config: ExperimentConfig) -> int:
    handler = _COMMANDS.get(config.command)
    if handler is None:
        raise ValidationError(f"cli: unknown command {config.command!r}")
    result = handler(config)
    _emit(config, result)
    return 0


def main(argv=None) -> int:
    if "LTS_THREADS" in os.environ:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, os.environ["LTS_THREADS"])
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ValidationError("cli: no command given; see --help")
        config = _merge_config(args)
        return run(config)
    except ValidationError as exc:
        module = getattr(exc, "module", "cli")
        print(f"error[{module}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error[runtime]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
