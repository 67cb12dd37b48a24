"""Command line front door.

Every experiment is reachable from flags; given identical flags and seed the
emitted files are byte-identical.  Exit codes: 0 success, 1 usage or config
error, 2 non-elliptic verdict from check-elliptic, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import extension, harness, operators
from .fields import FieldIOError, read_field, write_field
from .operators import NotEllipticError
from .spectral import helmholtz

__all__ = ["main", "RunConfig"]

_USAGE_EXIT = 1
_NONELLIPTIC_EXIT = 2
_NUMERICAL_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Flat key-value mirror of one subcommand invocation."""

    command: str
    values: dict

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump({"command": self.command, **self.values}, fh, indent=2,
                      sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path, command, allowed_keys):
        with open(path) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise _UsageError(f"config {path}: expected a JSON object")
        doc = dict(doc)
        conf_cmd = doc.pop("command", command)
        if conf_cmd != command:
            raise _UsageError(
                f"config {path}: command {conf_cmd!r} does not match {command!r}"
            )
        unknown = set(doc) - set(allowed_keys)
        if unknown:
            raise _UsageError(f"config {path}: unknown keys {sorted(unknown)}")
        return RunConfig(command, doc)


def _int_list(text):
    try:
        return [int(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise _UsageError(f"expected comma-separated integers, got {text!r}")


def _q_value(text):
    if text in ("inf", "Inf", "INF"):
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise _UsageError(f"expected a number or 'inf', got {text!r}")


def _build_parser():
    parser = _Parser(
        prog="kms",
        description="Numerical laboratory for Korn-Maxwell-Sobolev-type "
        "inequalities on periodic grids and cubes.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, parser_class=_Parser)
        p.add_argument("--config", default=None,
                       help="JSON file with flat key-value parameters "
                       "(flags override, unknown keys rejected) (default: none)")
        return p

    p = add("check-elliptic", "decide ellipticity of an operator")
    p.add_argument("--operator", required=True,
                   help="builtin name (grad|sym|dev|skew|trace) or operator JSON file")
    p.add_argument("--samples", type=int, default=2048,
                   help="sphere sweep sample count (default: 2048)")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="ellipticity tolerance on the minimal singular value "
                   "(default: 1e-06)")

    p = add("decompose", "Helmholtz-split a periodic vector field file")
    p.add_argument("--in", dest="infile", required=True, help="input KMSF vector field")
    p.add_argument("--out-div", required=True, help="output KMSF, solenoidal part")
    p.add_argument("--out-curl", required=True, help="output KMSF, curl-free part")

    p = add("verify", "first-kind inequality ratios over a seeded corpus")
    p.add_argument("--operator", required=True,
                   help="builtin name or operator JSON file")
    p.add_argument("--p", type=float, required=True, help="integrability exponent in [1,3)")
    p.add_argument("--grids", type=_int_list, default=[32, 48],
                   help="comma-separated cubic grid sizes (default: 32,48)")
    p.add_argument("--corpus", type=int, default=100,
                   help="number of corpus fields (default: 100)")
    p.add_argument("--seed", type=int, default=0, help="corpus seed (default: 0)")
    p.add_argument("--kmax", type=int, default=None,
                   help="corpus band limit (default: coarsest grid / 8)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel corpus evaluation threads (default: 1)")
    p.add_argument("--out", required=True, help="per-field CSV output path")
    p.add_argument("--summary", required=True, help="JSON summary output path")

    p = add("verify-variant", "BMO / Morrey / Lorentz / fractional variants")
    p.add_argument("--kind", required=True, choices=list(harness.VARIANT_KINDS),
                   help="variant to verify")
    p.add_argument("--operator", default="sym",
                   help="builtin name or operator JSON file (default: sym)")
    p.add_argument("--p", type=float, default=None,
                   help="exponent; range depends on the kind (default: kind-specific)")
    p.add_argument("--q", type=_q_value, default=None,
                   help="Lorentz secondary exponent, number or 'inf' (default: none)")
    p.add_argument("--theta", type=float, default=None,
                   help="fractional smoothness in (0,1) (default: none)")
    p.add_argument("--grids", type=_int_list, default=[12, 16],
                   help="comma-separated cubic grid sizes (default: 12,16)")
    p.add_argument("--corpus", type=int, default=25,
                   help="number of corpus fields (default: 25)")
    p.add_argument("--seed", type=int, default=0, help="corpus seed (default: 0)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel corpus evaluation threads (default: 1)")
    p.add_argument("--out", required=True, help="per-field CSV output path")
    p.add_argument("--summary", required=True, help="JSON summary output path")

    p = add("verify2", "second-kind inequality on the unit cube")
    p.add_argument("--mode", required=True, choices=["sym", "dev"],
                   help="elliptic part: symmetric or deviatoric gradient")
    p.add_argument("--p", type=float, required=True, help="integrability exponent in [1,3)")
    p.add_argument("--grids", type=_int_list, default=[16, 32],
                   help="comma-separated cubic grid sizes (default: 16,32)")
    p.add_argument("--corpus", type=int, default=50,
                   help="number of corpus fields (default: 50)")
    p.add_argument("--seed", type=int, default=0, help="corpus seed (default: 0)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel corpus evaluation threads (default: 1)")
    p.add_argument("--out", required=True, help="per-field CSV output path")
    p.add_argument("--summary", required=True, help="JSON summary output path")

    p = add("counterexample", "blow-up sequence for a non-elliptic operator")
    p.add_argument("--operator", required=True,
                   help="builtin name or operator JSON file (must be non-elliptic)")
    p.add_argument("--ks", type=_int_list, default=[4, 8, 16, 32],
                   help="comma-separated oscillation frequencies (default: 4,8,16,32)")
    p.add_argument("--p", type=float, default=2.0,
                   help="integrability exponent (default: 2.0)")
    p.add_argument("--grid", type=int, default=64, help="cubic grid size (default: 64)")
    p.add_argument("--out", required=True, help="CSV output path")

    p = add("extend", "divergence-free extension of a field on (0,1)^3")
    p.add_argument("--in", dest="infile", required=True, help="input KMSF vector field")
    p.add_argument("--out", required=True, help="output KMSF on (-1,2)^3")
    p.add_argument("--report", required=True, help="JSON report output path")

    return parser


_CONFIG_SKIP = {"command", "config"}


def _apply_config(parser, args):
    """Merge a config file under explicit flags: config overrides defaults,
    flags that differ from their default override the config."""
    if not getattr(args, "config", None):
        return args
    sub = None
    for action in parser._subparsers._group_actions:
        sub = action.choices[args.command]
    defaults = {
        a.dest: a.default
        for a in sub._actions
        if a.dest not in ("help",) and a.dest not in _CONFIG_SKIP
    }
    conf = RunConfig.load(args.config, args.command, sorted(defaults))
    for key, value in conf.values.items():
        if isinstance(value, list):
            value = [int(v) for v in value]
        if getattr(args, key) == defaults[key]:
            setattr(args, key, value)
    return args


def run_config_of(args) -> RunConfig:
    values = {
        k: v for k, v in vars(args).items() if k not in _CONFIG_SKIP
    }
    return RunConfig(args.command, values)


def _json_out(doc):
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _check_no_nan(report):
    for gr in report.grid_results:
        if math.isnan(gr.sup_ratio):
            raise FloatingPointError(f"sup_ratio on grid {gr.dims} is NaN")
        for row in gr.rows:
            if not row.flag and math.isnan(row.ratio):
                raise FloatingPointError(f"row {row.index} on grid {gr.dims} is NaN")


def _cmd_check_elliptic(args):
    A = operators.load_operator(args.operator)
    report = operators.ellipticity(
        A, sphere_samples=args.samples, elliptic_tol=args.tol
    )
    _json_out(report.to_dict())
    return 0 if report.is_elliptic else _NONELLIPTIC_EXIT


def _cmd_decompose(args):
    v = read_field(args.infile)
    if v.component_stack().shape[0] != 3:
        raise _UsageError(f"{args.infile}: decompose expects a 3-component field")
    v_div, v_curl = helmholtz(v)
    write_field(v_div, args.out_div)
    write_field(v_curl, args.out_curl)
    return 0


def _cmd_verify(args):
    A = operators.load_operator(args.operator)
    report = harness.verify_first(
        A, args.p, args.corpus, args.seed, args.grids, kmax=args.kmax, jobs=args.jobs
    )
    report.write_csv(args.out)
    report.write_summary(args.summary)
    _check_no_nan(report)
    return 0


def _cmd_verify_variant(args):
    A = operators.load_operator(args.operator)
    report = harness.verify_variant(
        A,
        args.kind,
        args.corpus,
        args.seed,
        args.grids,
        p=args.p,
        q=args.q,
        theta=args.theta,
        jobs=args.jobs,
    )
    report.write_csv(args.out)
    report.write_summary(args.summary)
    _check_no_nan(report)
    return 0


def _cmd_verify2(args):
    report = harness.verify_second(
        args.mode, args.p, args.corpus, args.seed, args.grids, jobs=args.jobs
    )
    report.write_csv(args.out)
    report.write_summary(args.summary)
    _check_no_nan(report)
    return 0


def _cmd_counterexample(args):
    A = operators.load_operator(args.operator)
    seq = harness.counterexample_sequence(A, args.ks, args.p, args.grid)
    seq.write_csv(args.out)
    if any(math.isnan(r[3]) for r in seq.rows):
        raise FloatingPointError("counterexample ratio is NaN")
    return 0


def _cmd_extend(args):
    phi = read_field(args.infile)
    if phi.component_stack().shape[0] != 3:
        raise _UsageError(f"{args.infile}: extend expects a 3-component field")
    result = extension.extend_divfree(phi)
    write_field(result.extended, args.out)
    doc = {
        "l1_input": result.l1_input,
        "l1_output": result.l1_output,
        "l1_factor": result.l1_output / result.l1_input if result.l1_input else 0.0,
        "weak_div_defect": result.weak_div_defect,
    }
    with open(args.report, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if any(math.isnan(v) for v in doc.values()):
        raise FloatingPointError("extension report contains NaN")
    return 0


_COMMANDS = {
    "check-elliptic": _cmd_check_elliptic,
    "decompose": _cmd_decompose,
    "verify": _cmd_verify,
    "verify-variant": _cmd_verify_variant,
    "verify2": _cmd_verify2,
    "counterexample": _cmd_counterexample,
    "extend": _cmd_extend,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required (see kms --help)")
        args = _apply_config(parser, args)
        if "KMS_SEED" in os.environ and hasattr(args, "seed"):
            args.seed = int(os.environ["KMS_SEED"])
        with np.errstate(all="ignore"):
            return _COMMANDS[args.command](args)
    except _UsageError as exc:
        sys.stderr.write(f"kms: error: {exc}\n")
        return _USAGE_EXIT
    except (FieldIOError, NotEllipticError, ValueError, OSError) as exc:
        sys.stderr.write(f"kms: error: {exc}\n")
        return _USAGE_EXIT
    except FloatingPointError as exc:
        sys.stderr.write(f"kms: numerical failure: {exc}\n")
        return _NUMERICAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
