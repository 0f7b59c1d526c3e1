"""JSON reading and writing for beliefs, mechanisms, rules and guarantees.

Every loader accepts either a parsed JSON value, an inline JSON string or a
path to a file. Schema problems raise :class:`ParseError` naming the field
path (``kernel[2]``) and, for syntax errors, the line and column.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from .beliefs import FiniteBelief, GaussianBelief, GaussianClassSpec
from .certify import (
    ExplicitFinite,
    GaussianClass,
    GuaranteeSpec,
    NeighborTwoPoint,
    default_w_grid,
)
from .errors import ParseError, PPCertError
from .mechanisms import FiniteMechanism, KernelRowError, NeighborRelation, complete_neighbors
from .scores import Interval, MarginalDSS, NegLogProb, ScoringRule


# --------------------------------------------------------------------------
# Source handling
# --------------------------------------------------------------------------


def load_json(source):
    """Parse ``source``: a JSON value, inline JSON text or a file path."""
    if not isinstance(source, (str, os.PathLike)):
        return source
    text = str(source)
    origin = "<inline>"
    stripped = text.lstrip()
    if not stripped or stripped[0] not in "[{":
        path = Path(text)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read {path}: {exc.strerror}") from None
        origin = str(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{origin}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _ident(value):
    # JSON arrays become tuples so they can serve as dataset / output ids
    if isinstance(value, list):
        return tuple(_ident(v) for v in value)
    return value


def _field(obj, key, where, kind=None):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    if key not in obj:
        raise ParseError(f"{where}.{key}: missing field")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return value


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _entry(value, where):
    # exact rationals may be written as strings such as "1/3"
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"{where}: cannot read {value!r} as a rational") from None
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    return _number(value, where)


def _numeric_list(values, where):
    if not isinstance(values, list):
        raise ParseError(f"{where}: expected an array")
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(values)]


# --------------------------------------------------------------------------
# Beliefs, mechanisms, neighbours
# --------------------------------------------------------------------------


def parse_belief(source, where="belief"):
    obj = load_json(source)
    kind = obj.get("kind", "finite") if isinstance(obj, dict) else None
    try:
        if kind == "finite":
            universe = [_ident(z) for z in _field(obj, "universe", where, list)]
            probs = [_entry(p, f"{where}.probs[{i}]") for i, p in enumerate(_field(obj, "probs", where, list))]
            return FiniteBelief(tuple(universe), tuple(probs))
        if kind == "gaussian":
            mean = _numeric_list(_field(obj, "mean", where), f"{where}.mean")
            cov = [_numeric_list(r, f"{where}.cov[{i}]") for i, r in enumerate(_field(obj, "cov", where, list))]
            return GaussianBelief(np.array(mean), np.array(cov))
    except ParseError:
        raise
    except PPCertError as exc:
        raise ParseError(f"{where}: {exc}") from None
    raise ParseError(f"{where}.kind: expected 'finite' or 'gaussian', got {kind!r}")


def belief_to_json(belief) -> dict:
    if isinstance(belief, FiniteBelief):
        return {"kind": "finite", "universe": list(belief.universe), "probs": [_num_out(p) for p in belief.probs]}
    return {"kind": "gaussian", "mean": belief.mean.tolist(), "cov": belief.cov.tolist()}


def parse_mechanism(source, where="mechanism") -> FiniteMechanism:
    obj = load_json(source)
    universe = [_ident(z) for z in _field(obj, "universe", where, list)]
    alphabet = [_ident(t) for t in _field(obj, "alphabet", where, list)]
    rows = _field(obj, "kernel", where, list)
    kernel = []
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise ParseError(f"{where}.kernel[{i}]: expected an array")
        kernel.append([_entry(v, f"{where}.kernel[{i}][{j}]") for j, v in enumerate(row)])
    flat = [v for row in kernel for v in row]
    exact = any(isinstance(v, Fraction) for v in flat) and all(isinstance(v, (Fraction, int)) for v in flat)
    if not exact:
        kernel = [[float(v) for v in row] for row in kernel]
    try:
        return FiniteMechanism(tuple(universe), tuple(alphabet), kernel)
    except KernelRowError as exc:
        raise ParseError(f"{where}.kernel[{exc.row}]: {exc}") from None
    except PPCertError as exc:
        raise ParseError(f"{where}: {exc}") from None


def mechanism_to_json(mech: FiniteMechanism) -> dict:
    return {
        "universe": list(mech.universe),
        "alphabet": list(mech.alphabet),
        "kernel": [[_num_out(v) for v in row] for row in mech.kernel],
    }


def parse_neighbors(source, universe=None, where="neighbors") -> NeighborRelation:
    """A list of ``[a, b]`` pairs, or the string ``"complete"``."""
    obj = load_json(source) if not (isinstance(source, str) and source == "complete") else "complete"
    if obj == "complete" or (isinstance(obj, dict) and obj.get("kind") == "complete"):
        if universe is None:
            raise ParseError(f"{where}: 'complete' needs a mechanism universe")
        return complete_neighbors(universe)
    if not isinstance(obj, list):
        raise ParseError(f"{where}: expected a list of pairs")
    pairs = []
    for i, p in enumerate(obj):
        if not isinstance(p, list) or len(p) != 2:
            raise ParseError(f"{where}[{i}]: expected a pair [a, b]")
        pair = (_ident(p[0]), _ident(p[1]))
        if universe is not None and not set(pair) <= set(universe):
            raise ParseError(f"{where}[{i}]: {list(p)!r} names a dataset outside the mechanism universe")
        pairs.append(pair)
    try:
        return NeighborRelation.from_pairs(pairs)
    except PPCertError as exc:
        raise ParseError(f"{where}: {exc}") from None


# --------------------------------------------------------------------------
# Scoring rules and guarantees
# --------------------------------------------------------------------------


def parse_rule(obj, where="score") -> ScoringRule:
    rule = _field(obj, "rule", where, str)
    try:
        if rule == "neglogprob":
            return NegLogProb()
        if rule == "interval":
            return Interval(_number(_field(obj, "s", where), f"{where}.s"))
        if rule == "dss":
            i = _field(obj, "i", where)
            if isinstance(i, bool) or not isinstance(i, int):
                raise ParseError(f"{where}.i: expected an integer")
            return MarginalDSS(i)
    except ParseError:
        raise
    except PPCertError as exc:
        raise ParseError(f"{where}: {exc}") from None
    raise ParseError(f"{where}.rule: unknown rule {rule!r}")


def rule_to_json(rule: ScoringRule) -> dict:
    if isinstance(rule, NegLogProb):
        return {"rule": "neglogprob"}
    if isinstance(rule, Interval):
        return {"rule": "interval", "s": rule.s}
    if isinstance(rule, MarginalDSS):
        return {"rule": "dss", "i": rule.i}
    raise ParseError(f"rule {rule.name!r} has no JSON form")


def parse_gaussian_class_spec(obj, where="class") -> GaussianClassSpec:
    r1 = _number(_field(obj, "r1", where), f"{where}.r1")
    r2 = _number(_field(obj, "r2", where), f"{where}.r2")
    x = _numeric_list(_field(obj, "x", where), f"{where}.x")
    try:
        return GaussianClassSpec(r1, r2, np.array(x))
    except PPCertError as exc:
        raise ParseError(f"{where}: {exc}") from None


def _parse_grid(value, where):
    if value is None:
        return default_w_grid()
    if isinstance(value, int) and not isinstance(value, bool):
        return default_w_grid(value)
    grid = _numeric_list(value, where)
    if any(not 0 < w <= 1 for w in grid):
        raise ParseError(f"{where}: grid points must lie in (0, 1]")
    return tuple(grid)


def parse_prior_class(obj, universe=None, grid=None, where="prior_class"):
    kind = _field(obj, "kind", where, str)
    if kind == "explicit":
        if "per_dataset" in obj:
            table = {}
            for i, entry in enumerate(_field(obj, "per_dataset", where, list)):
                w = f"{where}.per_dataset[{i}]"
                x = _ident(_field(entry, "dataset", w))
                table[x] = tuple(parse_belief(b, f"{w}.priors[{k}]") for k, b in enumerate(_field(entry, "priors", w, list)))
            return ExplicitFinite(per_dataset=table)
        priors = _field(obj, "priors", where, list)
        return ExplicitFinite(tuple(parse_belief(b, f"{where}.priors[{k}]") for k, b in enumerate(priors)))
    if kind == "two-point":
        neighbors = parse_neighbors(obj.get("neighbors", "complete"), universe, f"{where}.neighbors")
        w_grid = _parse_grid(grid if grid is not None else obj.get("grid"), f"{where}.grid")
        return NeighborTwoPoint(
            neighbors,
            w_grid,
            include_limit=bool(obj.get("include_limit", True)),
            truth_supported_only=bool(obj.get("truth_supported_only", False)),
        )
    if kind == "gaussian":
        spec = parse_gaussian_class_spec(obj, where)
        samples = obj.get("samples", 10_000)
        seed = obj.get("seed", 0)
        if not isinstance(samples, int) or samples < 1:
            raise ParseError(f"{where}.samples: expected a positive integer")
        if not isinstance(seed, int):
            raise ParseError(f"{where}.seed: expected an integer")
        return GaussianClass(spec, samples, seed)
    raise ParseError(f"{where}.kind: unknown prior class {kind!r}")


def parse_guarantee(source, universe=None, grid=None, where="guarantee") -> GuaranteeSpec:
    obj = load_json(source)
    scores = _field(obj, "scores", where, list)
    if not scores:
        raise ParseError(f"{where}.scores: at least one rule is required")
    rules = tuple(parse_rule(s, f"{where}.scores[{i}]") for i, s in enumerate(scores))
    cls = parse_prior_class(_field(obj, "prior_class", where), universe, grid, f"{where}.prior_class")
    kappa = _number(_field(obj, "kappa", where), f"{where}.kappa")
    delta = _number(obj.get("delta", 0.0), f"{where}.delta")
    try:
        return GuaranteeSpec(rules, cls, kappa, delta)
    except PPCertError as exc:
        raise ParseError(f"{where}: {exc}") from None


# --------------------------------------------------------------------------
# Report output
# --------------------------------------------------------------------------


def _num_out(v):
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else int(v)
    return float(v)


def _encode(value, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return '"nan"'
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        text = f"{v:.17g}"
        if not any(c in text for c in ".en"):
            text += ".0"
        return text
    if isinstance(value, Fraction):
        return json.dumps(str(value))
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(value, np.ndarray):
        return _encode(value.tolist(), indent, level)
    return json.dumps(str(value), ensure_ascii=False)


def dumps(value, indent: int = 2) -> str:
    """JSON text with doubles written to 17 significant digits.

    Infinities and NaN, which JSON cannot represent, become strings.
    """
    return _encode(value, indent, 0) + "\n"


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
