"""Command-line front end.

Every command reads a JSON problem spec (``--spec``) and writes one JSON
report or CSV table to ``--out`` (standard output by default). Exit status
is 0 on success, 2 for bad input and 3 when a computation fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .extreal import encode
from .geometry import BoxUnion
from .infotheory import conditional_family, info_report
from .kanon import (PASSTHROUGH, SUPPRESS, Bins, GeneralizationScheme, Mechanism, TableError,
                    analyze_release, read_table)
from .policy import PiecewiseConstantPolicy, PolicyError, classify_points
from .query import DomainSpec, QuerySyntaxError, parse_query
from .synthesis import (P2, SynthesisRequest, UnsupportedRelaxationError, quality_Q,
                        relaxed_policy, synthesize_optimal, synthesize_relaxed, tradeoff_sweep)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3


class InputError(Exception):
    """Problem with the spec, flags or input files."""


def load_schema() -> dict:
    text = resources.files(__package__).joinpath("schema/problem_spec.schema.json").read_text()
    return json.loads(text)


# -- spec ingestion --------------------------------------------------------------------

class Problem:
    def __init__(self, spec: dict, base: Path, overrides: dict):
        self.spec = spec
        self.base = base
        self.dim = spec.get("dim")
        self.domain = None
        if "domain" in spec:
            if self.dim is None:
                raise InputError("a domain needs dim")
            for box in spec["domain"]:
                if len(box) != self.dim:
                    raise InputError(f"domain box {box} does not have {self.dim} coordinates")
                if any(lo > hi for lo, hi in box):
                    raise InputError(f"domain box {box} has lo > hi")
            self.domain = DomainSpec(BoxUnion.from_boxes(spec["domain"], dim=self.dim))
        tol = dict(spec.get("tolerances", {}))
        tol.update({k: v for k, v in overrides.items() if v is not None})
        self.tolerances = tol
        self.query = None
        if "query" in spec:
            if self.domain is None:
                raise InputError("a query needs dim and domain")
            try:
                self.query = parse_query(spec["query"], self.dim)
            except (QuerySyntaxError, IndexError) as exc:
                raise InputError(f"query: {exc}") from None
        self.gamma = spec.get("gamma")
        self.metric = spec.get("metric", P2)

    def request(self, gamma: float | None = None) -> SynthesisRequest:
        if self.query is None:
            raise InputError("spec needs a query")
        gamma = self.gamma if gamma is None else gamma
        if gamma is None:
            raise InputError("spec needs gamma")
        t = self.tolerances
        return SynthesisRequest(self.query, self.domain, float(gamma), self.metric,
                                eps_vol=t.get("eps_vol"), delta_a=t.get("delta_a"),
                                max_depth=t.get("max_depth", 40), eps_diam=t.get("eps_diam"))

    def given_policy(self) -> PiecewiseConstantPolicy | None:
        if "policy" not in self.spec:
            return None
        if self.domain is None:
            raise InputError("a policy needs dim and domain")
        try:
            return PiecewiseConstantPolicy.from_dict(self.spec["policy"], self.domain,
                                                     self.tolerances.get("eps_vol"),
                                                     self.tolerances.get("max_depth", 40))
        except (PolicyError, QuerySyntaxError, IndexError, KeyError) as exc:
            raise InputError(f"policy: {exc}") from None


def load_problem(path: str, overrides: dict) -> Problem:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read spec: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"spec is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(spec, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"spec validation failed at {where}: {exc.message}") from None
    return Problem(spec, Path(path).resolve().parent, overrides)


def parse_gammas(text: str) -> list[float]:
    """``"a,b,c"`` or ``"log:lo:hi:steps"`` (log-spaced, both ends included)."""
    try:
        if text.startswith("log:"):
            _, lo, hi, steps = text.split(":")
            lo, hi, steps = float(lo), float(hi), int(steps)
            if steps < 1 or not 0 < lo <= hi:
                raise ValueError
            vals = np.logspace(math.log10(lo), math.log10(hi), steps).tolist()
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"bad gamma list {text!r}") from None
    if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise InputError(f"gammas must be positive and finite: {text!r}")
    return vals


# -- output ------------------------------------------------------------------------------

def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def versioned(body: dict) -> dict:
    # the version sits on its own line so outputs can be compared without it
    return {"nsprivacy_version": __version__, **body}


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_csv_cell(v) for v in r])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, float):
        e = encode(v)
        return e if isinstance(e, str) else repr(e)
    return v


def write_output(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(out)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- commands --------------------------------------------------------------------------

def _synthesize(prob: Problem, mode: str):
    req = prob.request()
    if mode == "auto":
        mode = "relaxed" if req.metric == P2 else "optimal"
    if mode == "relaxed":
        return synthesize_relaxed(req)
    return synthesize_optimal(req)


def cmd_measure(prob: Problem, args) -> str:
    pol = prob.given_policy()
    if pol is None:
        rep = _synthesize(prob, args.mode)
        body = {"info": rep.info.to_dict(), "policy_report": _without_info(rep.to_dict())}
    else:
        t = prob.tolerances
        fam = conditional_family(pol, prob.domain, t.get("eps_vol"), t.get("max_depth", 40))
        info = info_report(fam, t.get("eps_diam"))
        body = {"info": info.to_dict(), "policy": pol.to_dict()}
        if prob.query is not None:
            q = quality_Q(pol, prob.query, prob.domain, eps_vol=t.get("eps_vol"))
            body["quality_Q"] = encode(q.value)
            body["quality_Q_lo"] = encode(q.lo)
            body["quality_Q_hi"] = encode(q.hi)
    return dump_json(versioned(body))


def _without_info(d: dict) -> dict:
    return {k: v for k, v in d.items() if k != "info"}


def cmd_synthesize(prob: Problem, args) -> str:
    return dump_json(versioned(_synthesize(prob, args.mode).to_dict()))


def cmd_regions(prob: Problem, args) -> str:
    if prob.domain is None or prob.dim != 2:
        raise InputError("regions needs a two-dimensional domain")
    if args.grid < 1:
        raise InputError("--grid must be positive")
    pol = prob.given_policy()
    if pol is None:
        req = prob.request()
        mode = args.mode
        if mode == "auto":
            mode = "relaxed" if req.metric == P2 else "optimal"
        pol = relaxed_policy(req) if mode == "relaxed" else synthesize_optimal(req).policy
    lo, hi = prob.domain.domain.bounding_box()
    n = args.grid
    axes = [lo[d] + (np.arange(n) + 0.5) * (hi[d] - lo[d]) / n for d in range(2)]
    g1, g2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    idx, vals = classify_points(pol, pts)
    keep = idx >= 0
    rows = [(float(x1), float(x2), int(c) + 1, float(b))
            for (x1, x2), c, b in zip(pts[keep], idx[keep], vals[keep])]
    return rows_to_csv(["x1", "x2", "cell", "b"], rows)


def cmd_tradeoff(prob: Problem, args) -> str:
    if args.gammas is None:
        raise InputError("tradeoff needs --gammas")
    gammas = parse_gammas(args.gammas)
    if prob.query is None:
        raise InputError("spec needs a query")
    t = prob.tolerances
    sweep = tradeoff_sweep(prob.query, prob.domain, gammas, prob.metric,
                           eps_vol=t.get("eps_vol"), delta_a=t.get("delta_a"),
                           max_depth=t.get("max_depth", 40), eps_diam=t.get("eps_diam"))
    cols = ["gamma", "q", "L0", "L0_lo", "L0_hi", "Istar", "dmin", "dmin_lo", "dmin_hi",
            "dmax", "dmax_lo", "dmax_hi", "Q", "Q_lo", "Q_hi"]
    rows = []
    for r in sweep.table():
        if "error" in r:
            raise RuntimeError(f"gamma={r['gamma']}: {r['error']}")
        rows.append([r[c] for c in cols])
    return rows_to_csv(cols, rows)


def _rule(r):
    if r == "passthrough":
        return PASSTHROUGH
    if r == "suppress":
        return SUPPRESS
    try:
        return Bins(r["bins"])
    except ValueError as exc:
        raise InputError(f"bins: {exc}") from None


def cmd_kanon(prob: Problem, args) -> str:
    spec = prob.spec.get("kanon")
    if spec is None:
        raise InputError("spec needs a kanon section")
    cols = spec["columns"]
    domains = [tuple(c["domain"]) for c in cols]
    path = Path(spec["csv"])
    if not path.is_absolute():
        path = prob.base / path
    try:
        table = read_table(path, domains)
    except (OSError, TableError) as exc:
        raise InputError(f"csv: {exc}") from None
    scheme = GeneralizationScheme([_rule(c["rule"]) for c in cols])
    lead = spec.get("passthrough_rows", 0)
    if lead > len(table):
        raise InputError("passthrough_rows exceeds the number of rows")
    mech = (Mechanism.leading_passthrough(scheme, len(table), lead) if lead
            else Mechanism.uniform(scheme, len(table)))
    rep = analyze_release(table, mech, spec.get("k"))
    return dump_json(versioned(rep.to_dict()))


COMMANDS = {
    "measure": cmd_measure,
    "synthesize": cmd_synthesize,
    "regions": cmd_regions,
    "tradeoff": cmd_tradeoff,
    "kanon": cmd_kanon,
}

# raised by the numeric layers for inputs that make no sense
_INPUT_ERRORS = (InputError, UnsupportedRelaxationError, TableError, QuerySyntaxError)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsprivacy", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--spec", required=True, help="problem spec JSON")
        s.add_argument("--out", help="output file (written atomically); default stdout")
        mode = s.add_mutually_exclusive_group()
        mode.add_argument("--relaxed", dest="mode", action="store_const", const="relaxed",
                          help="uniform quantizer on the query (P2 only)")
        mode.add_argument("--optimal", dest="mode", action="store_const", const="optimal",
                          help="general partition search")
        s.set_defaults(mode="auto")
        s.add_argument("--grid", type=int, default=200, help="raster size for regions")
        s.add_argument("--gammas", help="'a,b,c' or 'log:lo:hi:steps' for tradeoff")
        s.add_argument("--eps-vol", type=float, help="preimage volume tolerance")
        s.add_argument("--delta-a", type=float, help="breakpoint grid step for P1")
        s.add_argument("--max-depth", type=int, help="preimage subdivision depth cap")
        s.add_argument("--eps-diam", type=float, help="diameter tolerance for d_min/d_max")
    return p


def run(argv=None) -> tuple[int, str, str, str | None]:
    """Run a command; returns (exit code, output text, error message, output path)."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0), "", "", None
    overrides = {"eps_vol": args.eps_vol, "delta_a": args.delta_a,
                 "max_depth": args.max_depth, "eps_diam": args.eps_diam}
    try:
        prob = load_problem(args.spec, overrides)
    except _INPUT_ERRORS as exc:
        return EXIT_INPUT, "", str(exc), args.out
    except (ValueError, TypeError) as exc:
        return EXIT_INPUT, "", f"invalid spec: {exc}", args.out
    try:
        text = COMMANDS[args.command](prob, args)
    except _INPUT_ERRORS as exc:
        return EXIT_INPUT, "", str(exc), args.out
    except (ValueError, ArithmeticError, RuntimeError, MemoryError) as exc:
        return EXIT_COMPUTE, "", f"{type(exc).__name__}: {exc}", args.out
    return EXIT_OK, text, "", args.out


def main(argv=None) -> int:
    code, text, err, out = run(argv)
    if err:
        print(f"nsprivacy: error: {err}", file=sys.stderr)
        return code
    if text:
        try:
            write_output(text, out)
        except OSError as exc:
            print(f"nsprivacy: error: cannot write output: {exc}", file=sys.stderr)
            return EXIT_INPUT
    return code


if __name__ == "__main__":
    sys.exit(main())
