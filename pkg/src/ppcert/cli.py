"""Command-line front end.

Exit status: 0 when the checked property holds, 3 when it does not, 4 for
precondition or structural errors and 2 for unreadable input.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io as _stringio
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import __version__, kernels
from .certify import (
    GuaranteeSpec,
    NeighborTwoPoint,
    PROB_TOL,
    certify_average_gaussian,
    certify_pdp,
    certify_pp,
    check_composition,
    check_pdp_pp_equivalence,
    check_receiver_postprocessing,
    default_w_grid,
    search_sender_postprocessing_counterexample,
)
from .errors import ParseError, PreconditionError, PropertyViolation, SamplingExhausted
from .io import (
    dumps,
    load_json,
    parse_gaussian_class_spec,
    parse_guarantee,
    parse_mechanism,
    parse_neighbors,
    write_atomic,
)
from .mechanisms import AVERAGE, complete_neighbors
from .scores import NegLogProb

EXIT_TRUE, EXIT_PARSE, EXIT_FALSE, EXIT_PRECONDITION = 0, 2, 3, 4
COMMANDS = ("certify-pp", "certify-pdp", "equivalence", "compose", "postprocess", "average", "search-ce", "suite")
SAMPLED = ("average", "search-ce", "suite")


@dataclass
class RunConfig:
    command: str
    mechanisms: list = field(default_factory=list)
    guarantees: list = field(default_factory=list)
    neighbors: str | None = None
    eps: float | None = None
    delta: float | None = None
    kappa: float | None = None
    seed: int | None = None
    samples: int | None = None
    grid: int | None = None
    tolerance: float | None = None
    out: str | None = None
    format: str = "json"
    rows: str | None = None

    def validate(self):
        if self.command not in COMMANDS:
            raise ParseError(f"unknown command {self.command!r}")
        if self.command in SAMPLED and self.seed is None:
            raise ParseError(f"--seed is required for {self.command}")
        if self.seed is not None and not -(2**63) <= self.seed < 2**64:
            raise ParseError("--seed must fit in 64 bits")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ParseError("--tolerance must be positive")
        if self.samples is not None and self.samples < 1:
            raise ParseError("--samples must be positive")
        if self.grid is not None and self.grid < 2:
            raise ParseError("--grid must be at least 2")
        if self.rows not in (None, "pair", "dataset", "output"):
            raise ParseError("--rows must be pair, dataset or output")
        if self.format not in ("json", "csv"):
            raise ParseError("--format must be json or csv")

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "mechanisms": list(self.mechanisms),
            "guarantees": list(self.guarantees),
            "neighbors": self.neighbors,
            "eps": self.eps,
            "delta": self.delta,
            "kappa": self.kappa,
            "seed": self.seed,
            "samples": self.samples,
            "grid": self.grid,
            "tolerance": self.tolerance,
            "format": self.format,
            "rows": self.rows,
        }


@dataclass
class Outcome:
    holds: bool
    result: dict
    rows: list = field(default_factory=list)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def _need(values, count, flag):
    if len(values) < count:
        raise ParseError(f"{flag} must be given {count} time(s)")
    return values


def _neighbors(cfg, mech):
    if cfg.neighbors is None:
        return complete_neighbors(mech.universe)
    return parse_neighbors(cfg.neighbors, mech.universe)


def _guarantee(cfg, source, universe, where="guarantee"):
    spec = parse_guarantee(source, universe, cfg.grid, where)
    if cfg.kappa is not None or cfg.delta is not None:
        spec = spec.with_budget(
            cfg.kappa if cfg.kappa is not None else spec.kappa,
            cfg.delta if cfg.delta is not None else spec.delta,
        )
    return spec


def _default_guarantee(cfg, mech):
    if cfg.kappa is None:
        raise ParseError("give --guarantee or --kappa")
    grid = default_w_grid(cfg.grid) if cfg.grid else default_w_grid()
    return GuaranteeSpec((NegLogProb(),), NeighborTwoPoint(_neighbors(cfg, mech), grid), cfg.kappa, cfg.delta or 0.0)


def _pp_rows(report):
    return [
        {"score": e.score, "dataset": e.dataset, "prior": e.prior, "tail": e.tail, "compliant": e.tail >= 1 - report.delta - PROB_TOL}
        for e in report.evaluations
    ]


def cmd_certify_pp(cfg: RunConfig) -> Outcome:
    source = _need(cfg.mechanisms, 1, "--mechanism")[0]
    if source == "average":
        spec = _guarantee(cfg, _need(cfg.guarantees, 1, "--guarantee")[0], None)
        cls = spec.prior_class
        if cfg.samples is not None or cfg.seed is not None:
            cls = type(cls)(cls.spec, cfg.samples or cls.samples, cfg.seed if cfg.seed is not None else cls.seed)
            spec = GuaranteeSpec(spec.scores, cls, spec.kappa, spec.delta)
        report = certify_pp(AVERAGE, spec)
    else:
        mech = parse_mechanism(source)
        spec = _guarantee(cfg, cfg.guarantees[0], mech.universe) if cfg.guarantees else _default_guarantee(cfg, mech)
        report = certify_pp(mech, spec)
    result = report.to_dict()
    holds = report.verdict
    if cfg.tolerance is not None:
        holds = report.attained >= 1 - report.delta - cfg.tolerance
        result["verdict"] = holds
    return Outcome(holds, result, _pp_rows(report))


def cmd_certify_pdp(cfg: RunConfig) -> Outcome:
    mech = parse_mechanism(_need(cfg.mechanisms, 1, "--mechanism")[0])
    if cfg.eps is None:
        raise ParseError("--eps is required")
    delta = cfg.delta if cfg.delta is not None else 0.0
    report = certify_pdp(mech, _neighbors(cfg, mech), cfg.eps, delta)
    holds = report.verdict if cfg.tolerance is None else float(report.attained_delta) <= delta + cfg.tolerance
    result = report.to_dict()
    result["verdict"] = holds
    rows = [{"dataset": x, "neighbor": y, "violation_mass": float(m)} for (x, y), m in report.per_pair.items()]
    return Outcome(holds, result, rows)


def cmd_equivalence(cfg: RunConfig) -> Outcome:
    mech = parse_mechanism(_need(cfg.mechanisms, 1, "--mechanism")[0])
    if cfg.eps is None:
        raise ParseError("--eps is required")
    grid = default_w_grid(cfg.grid) if cfg.grid else None
    delta = cfg.delta if cfg.delta is not None else 0.0
    try:
        rep = check_pdp_pp_equivalence(mech, _neighbors(cfg, mech), cfg.eps, delta, grid)
    except PropertyViolation as exc:
        return Outcome(False, {"agree": False, "message": str(exc)})
    result = {
        "agree": True,
        "eps": rep.eps,
        "delta": rep.delta,
        "pdp_verdict": rep.pdp_verdict,
        "pp_verdict": rep.pp_verdict,
        "pdp_attained_delta": rep.pdp_attained,
        "pp_attained": rep.pp_attained,
        "monotone": rep.monotone,
    }
    return Outcome(True, result)


def _same_class(cfg, specs):
    raw = [load_json(g) for g in cfg.guarantees[:2]]
    if len(raw) == 2 and raw[0].get("prior_class") != raw[1].get("prior_class"):
        raise ParseError("guarantee[1].prior_class: both guarantees must use the same prior class")
    first = specs[0]
    return [first] + [GuaranteeSpec(s.scores, first.prior_class, s.kappa, s.delta) for s in specs[1:]]


def cmd_compose(cfg: RunConfig) -> Outcome:
    m1, m2 = (parse_mechanism(s, f"mechanism[{i}]") for i, s in enumerate(_need(cfg.mechanisms, 2, "--mechanism")[:2]))
    _need(cfg.guarantees, 1, "--guarantee")
    specs = [parse_guarantee(g, m1.universe, cfg.grid, f"guarantee[{i}]") for i, g in enumerate(cfg.guarantees[:2])]
    if len(specs) == 1:
        specs.append(specs[0])
    spec1, spec2 = _same_class(cfg, specs)
    try:
        rep = check_composition(m1, m2, spec1, spec2, cfg.rows or "auto")
    except PropertyViolation as exc:
        return Outcome(False, {"consistent": False, "message": str(exc)})
    result = {
        "consistent": rep.consistent,
        "conjugate": rep.conjugate,
        "first_passes": rep.first_passes,
        "slices_pass": rep.slices_pass,
        "kappa": rep.kappa,
        "delta": rep.delta,
        "composed": rep.composed.to_dict(),
    }
    return Outcome(rep.consistent, result, _pp_rows(rep.composed))


def cmd_postprocess(cfg: RunConfig) -> Outcome:
    m, k = (parse_mechanism(s, f"mechanism[{i}]") for i, s in enumerate(_need(cfg.mechanisms, 2, "--mechanism")[:2]))
    spec = _guarantee(cfg, cfg.guarantees[0], m.universe) if cfg.guarantees else _default_guarantee(cfg, m)
    rows = cfg.rows or ("pair" if set(k.universe) == {(x, t) for x in m.universe for t in m.alphabet} else "output")
    try:
        rep = check_receiver_postprocessing(m, k, spec, rows)
    except PropertyViolation as exc:
        return Outcome(False, {"preserved": False, "message": str(exc)})
    result = {
        "preserved": True,
        "multisets_equal": rep.multisets_equal,
        "max_discrepancy": rep.max_discrepancy,
        "verdicts_equal": rep.verdicts_equal,
        "verdict": rep.verdict,
        "comparisons": rep.comparisons,
    }
    return Outcome(True, result)


def cmd_average(cfg: RunConfig) -> Outcome:
    obj = load_json(_need(cfg.guarantees, 1, "--guarantee")[0])
    cls = obj.get("prior_class", obj) if isinstance(obj, dict) else obj
    spec = parse_gaussian_class_spec(cls, "guarantee")
    rep = certify_average_gaussian(spec, cfg.samples or 10_000, cfg.seed)
    rows = [{"quantile": q, "slack": s} for q, s in rep.slack_quantiles.items()]
    return Outcome(rep.verdict, rep.to_dict(), rows)


def cmd_search_ce(cfg: RunConfig) -> Outcome:
    found = search_sender_postprocessing_counterexample(seed=cfg.seed, budget=cfg.samples or 1_000_000)
    return Outcome(found.found, found.to_dict())


def cmd_suite(cfg: RunConfig) -> Outcome:
    from .suite import run_suite

    res = run_suite(seed=cfg.seed, samples=cfg.samples or 10_000)
    print(res.table(), file=sys.stderr)
    rows = [c.row() for c in res.checks]
    return Outcome(res.passed, {"passed": res.passed, "checks": rows}, rows)


HANDLERS = {
    "certify-pp": cmd_certify_pp,
    "certify-pdp": cmd_certify_pdp,
    "equivalence": cmd_equivalence,
    "compose": cmd_compose,
    "postprocess": cmd_postprocess,
    "average": cmd_average,
    "search-ce": cmd_search_ce,
    "suite": cmd_suite,
}


# --------------------------------------------------------------------------
# Report emission
# --------------------------------------------------------------------------


def report_hash(report: dict) -> str:
    """SHA-256 of the report without its timestamp and hash fields."""
    body = {k: v for k, v in report.items() if k not in ("timestamp", "report_hash")}
    return hashlib.sha256(dumps(body).encode("utf-8")).hexdigest()


def build_report(cfg: RunConfig, outcome: Outcome) -> dict:
    report = {
        "tool": "ppcert",
        "version": __version__,
        "backend": kernels.BACKEND,
        "config": cfg.as_dict(),
        "holds": outcome.holds,
        "result": outcome.result,
    }
    report["report_hash"] = report_hash(report)
    report["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return report


def _csv_cell(v):
    if isinstance(v, float):
        return "inf" if v == math.inf else f"{v:.17g}"
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v, default=str)
    return v


def render_csv(outcome: Outcome) -> str:
    rows = outcome.rows or [{"key": k, "value": v} for k, v in outcome.result.items()]
    columns = []
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    buf = _stringio.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _csv_cell(r.get(k, "")) for k in columns})
    return buf.getvalue()


def run(cfg: RunConfig) -> int:
    """Execute ``cfg``, write the report and return the exit status."""
    try:
        cfg.validate()
        outcome = HANDLERS[cfg.command](cfg)
    except ParseError as exc:
        print(f"ppcert: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (PreconditionError, SamplingExhausted) as exc:
        print(f"ppcert: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    text = render_csv(outcome) if cfg.format == "csv" else dumps(build_report(cfg, outcome))
    if cfg.out:
        write_atomic(cfg.out, text)
        print(f"{cfg.command}: {'holds' if outcome.holds else 'fails'} -> {cfg.out}")
    else:
        sys.stdout.write(text)
    return EXIT_TRUE if outcome.holds else EXIT_FALSE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppcert", description="Certify persuasive-privacy guarantees of finite mechanisms.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--mechanism", action="append", default=[], help="mechanism JSON file or inline JSON; 'average' for the mean release")
    p.add_argument("--guarantee", action="append", default=[], help="guarantee JSON file or inline JSON")
    p.add_argument("--neighbors", help="pair-list JSON or 'complete' (default)")
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, help="Monte Carlo samples, or candidate budget for search-ce")
    p.add_argument("--grid", type=int, help="number of w grid points for two-point priors")
    p.add_argument("--tolerance", type=float, help="probability slack applied to the final verdict")
    p.add_argument("--out", help="report path (written atomically); stdout when omitted")
    p.add_argument("--format", default="json", choices=("json", "csv"))
    p.add_argument("--rows", choices=("pair", "dataset", "output"), help="how the second kernel of compose/postprocess is indexed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        command=args.command,
        mechanisms=args.mechanism,
        guarantees=args.guarantee,
        neighbors=args.neighbors,
        eps=args.eps,
        delta=args.delta,
        kappa=args.kappa,
        seed=args.seed,
        samples=args.samples,
        grid=args.grid,
        tolerance=args.tolerance,
        out=args.out,
        format=args.format,
        rows=args.rows,
    )
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
