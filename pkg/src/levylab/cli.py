"""Command-line front end: run, sweep, check-kernel, norms.

Exit code 0 means every certificate passed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import load_config
from .fieldio import canonical_json, read_field
from .grid import Grid
from .kernels import LevyKernel, check_nondegeneracy, tabulate_symbol
from .spaces import (
    MorreyParams,
    NormProfile,
    besov_seminorm,
    holder_norm,
    morrey_norm,
    sobolev_norm,
)
from .verifiers import verify_symbol_bounds


def _cmd_run(args) -> int:
    from .runner import run

    report = run(args.config, output_dir=args.output)
    summary = {
        name: cert.get("verdict", "?") for name, cert in report.certificates.items()
    }
    print(canonical_json({"output_dir": report.output_dir, "certificates": summary}))
    return 0 if report.all_pass else 1


def _parse_values(raw: str):
    vals = []
    for tok in raw.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            vals.append(int(tok))
        except ValueError:
            vals.append(float(tok))
    return vals


def _cmd_sweep(args) -> int:
    from .runner import sweep

    values = _parse_values(args.values)
    out = sweep(args.config, args.axis, values, output_dir=args.output,
                workers=args.workers)
    print(canonical_json({"output_dir": out["output_dir"],
                          "rows": [{k: r[k] for k in ("axis_value", "all_pass")}
                                   for r in out["rows"]]}))
    return 0 if all(r.all_pass for r in out["reports"]) else 1


def _cmd_check_kernel(args) -> int:
    cfg = load_config(args.config)
    grid = Grid(**cfg["grid"])
    kernel = LevyKernel(**cfg["kernel"], n=grid.n)
    nd = check_nondegeneracy(kernel)
    symbol = tabulate_symbol(kernel, grid)
    cert = verify_symbol_bounds(symbol, kernel)
    print(canonical_json({"nondegeneracy": nd.to_dict(), "symbol-bounds": cert.to_dict()}))
    return 0 if (nd.passed and cert.verdict) else 1


def _cmd_norms(args) -> int:
    fld = read_field(args.field_file)
    spec = json.loads(args.spec)
    kind = spec.pop("kind", None)
    if kind == "morrey":
        params = MorreyParams(q=spec.get("q", 2.0), a=spec.get("a", 0.0),
                              local=spec.get("local", False))
        value = morrey_norm(fld, params)
    elif kind == "besov":
        prof = NormProfile(exponent=spec["s"], p=spec.get("p", 2.0))
        value = besov_seminorm(fld, s=prof.exponent, p=prof.p)
    elif kind == "holder":
        prof = NormProfile(exponent=spec["gamma"], p=np.inf)
        value = holder_norm(fld, gamma=prof.exponent)
    elif kind == "sobolev":
        prof = NormProfile(exponent=spec["s"], p=spec.get("p", 2.0))
        value = sobolev_norm(fld, s=prof.exponent, p=prof.p)
    elif kind == "lp":
        p = spec.get("p", 2.0)
        value = fld.lp_norm(np.inf if p == "inf" else float(p))
    else:
        print(f"unknown norm kind {kind!r}", file=sys.stderr)
        return 2
    print(canonical_json({"norm_name": kind, "params": spec, "value": value}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="levylab",
        description="Transport-diffusion laboratory for nondegenerate jump operators",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--output", default=None, help="override output directory")
    p_run.set_defaults(fn=_cmd_run)

    p_sw = sub.add_parser("sweep", help="run a scenario across one scalar axis")
    p_sw.add_argument("config")
    p_sw.add_argument("--axis", required=True, help="dotted config path, e.g. solver.epsilon_visc")
    p_sw.add_argument("--values", required=True, help="comma-separated values")
    p_sw.add_argument("--output", default=None)
    p_sw.add_argument("--workers", type=int, default=None,
                      help="worker pool size (default: LEVYLAB_WORKERS or 1)")
    p_sw.set_defaults(fn=_cmd_sweep)

    p_ck = sub.add_parser("check-kernel", help="nondegeneracy and symbol-bound report")
    p_ck.add_argument("config")
    p_ck.set_defaults(fn=_cmd_check_kernel)

    p_no = sub.add_parser("norms", help="evaluate a norm of a stored field")
    p_no.add_argument("field_file")
    p_no.add_argument("--spec", required=True,
                      help='JSON, e.g. {"kind": "holder", "gamma": 0.4}')
    p_no.set_defaults(fn=_cmd_norms)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
