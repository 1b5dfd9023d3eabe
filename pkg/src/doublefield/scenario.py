"""Declarative YAML scenarios: loading, validation, task execution and reports."""

from __future__ import annotations

import copy
import itertools
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import yaml

from .algebroid import c_bracket, gen_lie_derivative, star_product
from .connection import (
    action_value,
    bianchi_residual,
    connection_for,
    curvature_at,
    gualtieri_torsion,
    scalar_curvature,
    scalar_curvature_contracted,
)
from .density import Density, covariant_density, lie_density, volume_density
from .dirac import (
    CRITERIA,
    ParaDirac,
    check_integrability,
    dirac_from_isometry,
    graph_dirac,
    isometry_from_dirac,
    psi_triple,
)
from .genmetric import FieldError, FieldSpec, gen_lie_H, killing_criterion
from .randgen import random_field
from .symcore import CoordSystem, ScalarExpr, SymcoreError
from .tensor import TensorField, frame, vector

TASKS = (
    "check-axioms", "bracket", "star", "lie", "torsion", "curvature", "scalar-curvature",
    "action", "dirac", "killing", "density", "bianchi", "identity-suite",
)


class ScenarioError(ValueError):
    """Parse or validation failure; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


# --- parsing helpers ---------------------------------------------------------------

def _expr(cs: CoordSystem, value, key: str) -> ScalarExpr:
    if isinstance(value, bool) or value is None:
        raise ScenarioError(key, f"expected an expression, got {value!r}")
    try:
        return cs.parse(str(value))
    except SymcoreError as exc:
        raise ScenarioError(key, str(exc)) from None


def parse_matrix_text(text: str) -> list[list[str]]:
    """``"a,b;c,d"`` -> ``[["a","b"],["c","d"]]``."""
    return [[c.strip() for c in row.split(",")] for row in text.split(";")]


def _matrix(cs: CoordSystem, value, rows: int, cols: int, key: str) -> list[list[ScalarExpr]]:
    if isinstance(value, str):
        value = parse_matrix_text(value)
    if not isinstance(value, list) or len(value) != rows or any(
            not isinstance(r, list) or len(r) != cols for r in value):
        raise ScenarioError(key, f"expected a {rows}x{cols} matrix")
    return [[_expr(cs, v, f"{key}[{i}][{j}]") for j, v in enumerate(r)] for i, r in enumerate(value)]


def _vector(cs: CoordSystem, value, key: str) -> TensorField:
    if isinstance(value, str):
        value = [c.strip() for c in value.split(",")]
    if not isinstance(value, list) or len(value) != cs.n:
        raise ScenarioError(key, f"expected {cs.n} components")
    return vector(cs, [_expr(cs, v, f"{key}[{i}]") for i, v in enumerate(value)])


def _point(value, n: int, key: str) -> list[Fraction]:
    if not isinstance(value, list) or len(value) != n:
        raise ScenarioError(key, f"expected a list of {n} rationals")
    try:
        return [Fraction(str(v)) for v in value]
    except (ValueError, ZeroDivisionError):
        raise ScenarioError(key, "entries must be rationals") from None


def _mapping(value, key: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ScenarioError(key, "expected a mapping")
    return value


def _int(value, key: str, lo: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(key, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ScenarioError(key, f"must be >= {lo}")
    return value


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``a.b.0.c=value`` overrides; values are read as YAML scalars or flow collections."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ScenarioError(item, "override must look like key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ScenarioError(path, f"cannot parse override value: {exc}") from None
        node = doc
        for depth, k in enumerate(keys):
            last = depth == len(keys) - 1
            here = ".".join(keys[: depth + 1])
            if isinstance(node, list):
                try:
                    idx = int(k)
                    node[idx]
                except (ValueError, IndexError):
                    raise ScenarioError(here, "invalid list index") from None
                if last:
                    node[idx] = value
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if last:
                    node[k] = value
                else:
                    node = node.setdefault(k, {})
            else:
                raise ScenarioError(here, "cannot descend into a scalar")
    return doc


# --- scenario model ----------------------------------------------------------------

@dataclass
class Task:
    name: str
    args: dict
    expect: object = None
    key: str = ""


@dataclass
class Scenario:
    doc: dict
    cs: CoordSystem
    seed: int
    field: FieldSpec
    vectors: dict[str, TensorField]
    dirac: dict[str, tuple[str, ParaDirac]]
    quad_order: int
    quad_domain: list | None
    tasks: list[Task] = field(default_factory=list)

    def vector(self, name, key) -> TensorField:
        if isinstance(name, list) or (isinstance(name, str) and "," in name):
            return _vector(self.cs, name, key)
        if name in self.vectors:
            return self.vectors[name]
        if isinstance(name, str) and name.startswith("e") and name[1:].isdigit():
            a = int(name[1:])
            if 0 <= a < self.cs.n:
                return frame(self.cs, a)
        raise ScenarioError(key, f"unknown vector {name!r}")


_TOP_KEYS = {"m", "signature", "coords", "seed", "field", "vectors", "dirac", "quadrature", "tasks", "name"}


def build_scenario(doc) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("", "scenario must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown top-level key")
    if "m" not in doc:
        raise ScenarioError("m", "missing")
    m = _int(doc["m"], "m", 1)
    try:
        cs = CoordSystem(m, tuple(doc.get("coords") or ()))
    except SymcoreError as exc:
        raise ScenarioError("coords", str(exc)) from None
    seed = _int(doc.get("seed", 0), "seed")
    sig = _mapping(doc.get("signature"), "signature")
    p = sig.get("p")
    q = sig.get("q")
    if p is not None:
        p = _int(p, "signature.p", 0)
    if q is not None:
        q = _int(q, "signature.q", 0)

    fdoc = _mapping(doc.get("field"), "field")
    if fdoc.get("random"):
        degree = _int(fdoc.get("degree", 1), "field.degree", 0)
        fs = random_field(cs, seed, p=p, degree=degree)
    else:
        zero = [["0"] * m for _ in range(m)]
        ident = [["1" if i == j else "0" for j in range(m)] for i in range(m)]
        g = _matrix(cs, fdoc.get("g", ident), m, m, "field.g")
        B = _matrix(cs, fdoc.get("B", zero), m, m, "field.B")
        phi = _expr(cs, fdoc.get("phi", "0"), "field.phi")
        ref = fdoc.get("reference_point")
        ref = None if ref is None else _point(ref, cs.n, "field.reference_point")
        try:
            fs = FieldSpec(cs, g, B, phi=phi, p=p, q=q, reference_point=ref)
        except FieldError as exc:
            raise ScenarioError("field", str(exc)) from None

    vectors = {}
    for name, val in _mapping(doc.get("vectors"), "vectors").items():
        vectors[str(name)] = _vector(cs, val, f"vectors.{name}")

    dirac = {}
    for name, block in _mapping(doc.get("dirac"), "dirac").items():
        key = f"dirac.{name}"
        block = _mapping(block, key)
        kind = block.get("kind")
        data = block.get("data")
        if data is None:
            raise ScenarioError(f"{key}.data", "missing")
        try:
            if kind == "span":
                if not isinstance(data, list):
                    raise ScenarioError(f"{key}.data", "expected a list of vectors")
                D = ParaDirac(cs, [_vector(cs, v, f"{key}.data[{i}]") for i, v in enumerate(data)],
                              fs.reference_point)
            elif kind in ("two_form", "bivector"):
                D = graph_dirac(kind, _matrix(cs, data, m, m, f"{key}.data"), cs, fs.reference_point)
            elif kind == "isometry":
                D = dirac_from_isometry(_matrix(cs, data, m, m, f"{key}.data"), fs)
            else:
                raise ScenarioError(f"{key}.kind", "expected span, two_form, bivector or isometry")
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(key, str(exc)) from None
        dirac[str(name)] = (kind, D)

    qdoc = _mapping(doc.get("quadrature"), "quadrature")
    order = _int(qdoc.get("order", 8), "quadrature.order", 1)
    domain = qdoc.get("domain")
    if domain is not None:
        if not isinstance(domain, list) or len(domain) != cs.n or any(
                not isinstance(d, list) or len(d) != 2 for d in domain):
            raise ScenarioError("quadrature.domain", f"expected {cs.n} intervals [lo, hi]")
        try:
            domain = [[float(Fraction(str(a))), float(Fraction(str(b)))] for a, b in domain]
        except (ValueError, ZeroDivisionError):
            raise ScenarioError("quadrature.domain", "bounds must be numbers") from None
        if any(b <= a for a, b in domain):
            raise ScenarioError("quadrature.domain", "each interval needs lo < hi")

    tasks = []
    raw_tasks = doc.get("tasks")
    if not isinstance(raw_tasks, list) or not raw_tasks:
        raise ScenarioError("tasks", "expected a non-empty list")
    for i, t in enumerate(raw_tasks):
        key = f"tasks[{i}]"
        if isinstance(t, str):
            t = {"task": t}
        t = _mapping(t, key)
        name = t.get("task")
        if name not in TASKS:
            raise ScenarioError(f"{key}.task", f"unknown task {name!r}")
        extra = set(t) - {"task", "args", "expect"}
        if extra:
            raise ScenarioError(f"{key}.{sorted(extra)[0]}", "unknown task key")
        tasks.append(Task(name, _mapping(t.get("args"), f"{key}.args"), t.get("expect"), key))

    sc = Scenario(doc, cs, seed, fs, vectors, dirac, order, domain, tasks)
    for task in tasks:  # resolve names early so errors surface before any work
        for k in ("X", "Y", "Z"):
            if k in task.args:
                sc.vector(task.args[k], f"{task.key}.args.{k}")
        if task.name == "dirac" and "name" in task.args and task.args["name"] not in dirac:
            raise ScenarioError(f"{task.key}.args.name", f"unknown dirac block {task.args['name']!r}")
    return sc


def load_scenario(path, overrides=()) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError("", f"cannot read {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(where, f"YAML error: {getattr(exc, 'problem', exc)}") from None
    return build_scenario(apply_overrides(doc, overrides))


# --- task execution ----------------------------------------------------------------

def _vec_out(X: TensorField) -> list[str]:
    return [str(c) for c in X.components]


def _match_vector(sc: Scenario, X: TensorField, expect, key) -> bool:
    return (X - _vector(sc.cs, expect, f"{key}.expect")).is_zero()


def _residual(values) -> str:
    return "exact-zero" if all(v.is_zero() for v in values) else "nonzero"


def _conn(sc: Scenario, args, cache):
    kind = args.get("connection", "vtc")
    if kind not in ("vtc", "cwt"):
        raise ScenarioError("connection", f"expected vtc or cwt, got {kind!r}")
    if kind not in cache:
        cache[kind] = connection_for(sc.field, kind)
    return kind, cache[kind]


def _triples(sc: Scenario, task: Task):
    a = task.args
    if all(k in a for k in ("X", "Y", "Z")):
        return [tuple(sc.vector(a[k], f"{task.key}.args.{k}") for k in ("X", "Y", "Z"))]
    pool = list(sc.vectors.values()) or [frame(sc.cs, i) for i in range(sc.cs.n)]
    if len(pool) < 3:
        pool = pool + [frame(sc.cs, i) for i in range(sc.cs.n)]
    return list(itertools.combinations(pool, 3))


def _task_check_axioms(sc, task, cache):
    from .suite import axiom_residuals

    f = sc.field.phi if not sc.field.phi.is_zero() else sc.cs.coord(0)
    acc: dict[str, list] = {}
    for X, Y, Z in _triples(sc, task):
        for label, v in axiom_residuals(X, Y, Z, f).items():
            acc.setdefault(label, []).append(v)
    res = {k: _residual(v) for k, v in acc.items()}
    return all(r == "exact-zero" for r in res.values()), {"residuals": res}


def _binary(op):
    def run(sc, task, cache):
        X = sc.vector(task.args.get("X"), f"{task.key}.args.X")
        Y = sc.vector(task.args.get("Y"), f"{task.key}.args.Y")
        if op == "lie":
            out = gen_lie_derivative(X, Y)
        elif op == "star":
            out = star_product(X, Y)
        else:
            out = c_bracket(X, Y)
        ok = True if task.expect is None else _match_vector(sc, out, task.expect, task.key)
        return ok, {"result": _vec_out(out)}
    return run


def _task_torsion(sc, task, cache):
    kind, conn = _conn(sc, task.args, cache)
    vals = [gualtieri_torsion(conn, *t) for t in _triples(sc, task)]
    expect_zero = task.expect in (None, "zero") and kind == "vtc" or task.expect == "zero"
    res = _residual(vals)
    ok = res == "exact-zero" if expect_zero else True
    return ok, {"connection": kind, "residual": res, "values": [str(v) for v in vals]}


def _eval_point(sc, task):
    pt = task.args.get("point")
    return list(sc.field.reference_point) if pt is None else _point(pt, sc.cs.n, f"{task.key}.args.point")


def _task_curvature(sc, task, cache):
    kind, conn = _conn(sc, task.args, cache)
    pt = _eval_point(sc, task)
    R = curvature_at(conn, pt)
    nonzero = {
        ",".join(map(str, idx)): str(v) for idx, v in sorted(
            ((tuple(int(i) for i in idx), R[idx]) for idx in itertools.product(range(sc.cs.n), repeat=4)))
        if v != 0
    }
    return True, {"connection": kind, "point": [str(p) for p in pt], "nonzero_components": nonzero}


def _task_scalar(sc, task, cache):
    kind, conn = _conn(sc, task.args, cache)
    pt = _eval_point(sc, task)
    R = curvature_at(conn, pt)
    seed = _int(task.args.get("basis_seed", sc.seed), f"{task.key}.args.basis_seed")
    k0 = scalar_curvature(conn, sc.field, pt, seed=0, R=R)
    k1 = scalar_curvature(conn, sc.field, pt, seed=seed, R=R)
    kc = scalar_curvature_contracted(conn, sc.field, pt, R=R)
    ok = k0 == k1 == kc
    if task.expect is not None:
        ok = ok and k0 == Fraction(str(task.expect))
    return ok, {"connection": kind, "point": [str(p) for p in pt], "kappa": str(k0),
                "basis_independence": "exact-zero" if k0 == k1 == kc else "nonzero"}


def _task_action(sc, task, cache):
    kind, conn = _conn(sc, task.args, cache)
    order = _int(task.args.get("order", sc.quad_order), f"{task.key}.args.order", 1)
    value = action_value(sc.field, kind, sc.quad_domain, order, conn=conn)
    ok = True
    if task.expect is not None:
        tol = float(task.args.get("tol", 1e-10))
        target = float(Fraction(str(task.expect)))
        ok = abs(value - target) <= tol * max(1.0, abs(target))
    return ok, {"connection": kind, "order": order, "action": repr(value)}


def _task_dirac(sc, task, cache):
    names = [task.args["name"]] if "name" in task.args else sorted(sc.dirac)
    if not names:
        raise ScenarioError(f"{task.key}.args.name", "no dirac blocks declared")
    out, ok = {}, True
    for name in names:
        kind, D = sc.dirac[name]
        entry = {"kind": kind, "isotropic": D.isotropic}
        if D.isotropic:
            crit = list(CRITERIA[:5]) + (["paraint5"] if D.strongly_foliated() else [])
            values = {str(c): check_integrability(D, c) for c in crit}
            entry["integrability"] = values
            entry["criteria_agree"] = len(set(values.values())) == 1
            ok = ok and entry["criteria_agree"]
            try:
                J = isometry_from_dirac(D, sc.field)
                entry["J"] = [[str(x) for x in row] for row in J]
                entry["psi_invariants"] = psi_triple(D, sc.field).invariants()
                ok = ok and all(entry["psi_invariants"].values())
            except ValueError as exc:
                entry["J"] = f"unavailable: {exc}"
        if isinstance(task.expect, dict) and name in task.expect:
            want = task.expect[name]
            ok = ok and entry.get("integrability", {}).get("1") == bool(want)
        elif isinstance(task.expect, bool) and len(names) == 1:
            ok = ok and entry.get("integrability", {}).get("1") == task.expect
        out[name] = entry
    return ok, {"structures": out}


def _task_killing(sc, task, cache):
    X = sc.vector(task.args.get("X"), f"{task.key}.args.X")
    direct = gen_lie_H(X, sc.field).is_zero()
    crit = killing_criterion(X, sc.field)
    ok = direct == crit and (task.expect is None or bool(task.expect) == direct)
    return ok, {"lie_derivative_zero": direct, "criterion": crit}


def _task_density(sc, task, cache):
    a = task.args
    info = {}
    ok = True
    if "theta" in a:
        d = Density(Fraction(str(a.get("weight", 1))), _expr(sc.cs, a["theta"], f"{task.key}.args.theta"))
        X = sc.vector(a.get("X"), f"{task.key}.args.X")
        try:
            out = lie_density(X, d)
        except ValueError as exc:
            raise ScenarioError(f"{task.key}.args", str(exc)) from None
        info["lie_derivative"] = str(out.theta)
        if task.expect is not None:
            ok = (out.theta - _expr(sc.cs, task.expect, f"{task.key}.expect")).is_zero()
    kind, conn = _conn(sc, a, cache)
    try:
        vol = volume_density(sc.field)
        par = covariant_density(conn, vol)
        info["volume_parallel"] = "exact-zero" if par.is_zero() else "nonzero"
        ok = ok and par.is_zero()
    except ValueError as exc:
        info["volume_parallel"] = f"unavailable: {exc}"
    return ok, info


def _task_bianchi(sc, task, cache):
    kind, conn = _conn(sc, task.args, cache)
    res = _residual([bianchi_residual(conn, *t) for t in _triples(sc, task)])
    return res == "exact-zero", {"connection": kind, "residual": res}


def _task_suite(sc, task, cache):
    from .suite import run_identity_suite

    level = task.args.get("level", "quick")
    if level not in ("quick", "full"):
        raise ScenarioError(f"{task.key}.args.level", "expected quick or full")
    results, code = run_identity_suite(level, _int(task.args.get("seed", sc.seed), f"{task.key}.args.seed"))
    return code == 0, {"checks": [r.as_dict() for r in results]}


_RUNNERS = {
    "check-axioms": _task_check_axioms,
    "bracket": _binary("bracket"),
    "star": _binary("star"),
    "lie": _binary("lie"),
    "torsion": _task_torsion,
    "curvature": _task_curvature,
    "scalar-curvature": _task_scalar,
    "action": _task_action,
    "dirac": _task_dirac,
    "killing": _task_killing,
    "density": _task_density,
    "bianchi": _task_bianchi,
    "identity-suite": _task_suite,
}


@dataclass
class Report:
    scenario: dict
    tasks: list[dict]
    timings: list[float]

    @property
    def passed(self) -> bool:
        return all(t["status"] == "PASS" for t in self.tasks)

    def as_dict(self) -> dict:
        return {"scenario": self.scenario, "tasks": self.tasks, "status": "PASS" if self.passed else "FAIL"}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = []
        for t, dt in zip(self.tasks, self.timings):
            lines.append(f"[{t['status']}] {t['task']}  ({dt:.2f}s)")
            for k, v in sorted(t["result"].items()):
                lines.extend(_text_item(k, v, "    "))
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _text_item(k, v, indent):
    if isinstance(v, dict):
        out = [f"{indent}{k}:"]
        for kk, vv in sorted(v.items()):
            out.extend(_text_item(kk, vv, indent + "  "))
        return out
    if isinstance(v, list) and v and isinstance(v[0], dict):
        out = [f"{indent}{k}:"]
        for item in v:
            out.append(f"{indent}  - " + ", ".join(f"{a}={b}" for a, b in item.items() if b != ""))
        return out
    return [f"{indent}{k}: {v}"]


def run_tasks(sc: Scenario) -> Report:
    cache: dict = {}
    out, timings = [], []
    for task in sc.tasks:
        t0 = time.perf_counter()
        ok, result = _RUNNERS[task.name](sc, task, cache)
        timings.append(time.perf_counter() - t0)
        entry = {"task": task.name, "status": "PASS" if ok else "FAIL", "result": result}
        if task.args:
            entry["args"] = task.args
        out.append(entry)
    return Report(sc.doc, out, timings)


def run_scenario(path, overrides=()) -> tuple[Report | None, int, str]:
    """Returns ``(report, exit_code, error_message)``."""
    try:
        sc = load_scenario(path, overrides)
        report = run_tasks(sc)
    except ScenarioError as exc:
        return None, 2, str(exc)
    return report, 0 if report.passed else 1, ""
