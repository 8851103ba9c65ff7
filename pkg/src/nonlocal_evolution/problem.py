"""Problem specification and the TOML problem-file loader.

A problem file has the sections ``[space]``, ``[time]``, ``[generator]``,
``[nonlinearity]``, ``[nonlocal]``, ``[envelope]``, ``[tube]`` and the
optional ``[solver]`` and ``[kamke]``. See ``problems/`` for examples.
Structure is checked against :data:`SCHEMA` before any expression is parsed
or any numerics run.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .certificates import KamkeFunction, TubeRadius
from .evolution import CoefficientFamily
from .expr import Expr, ExprError
from .grid import TimeGrid
from .nonlinearity import GrowthEnvelope, Nonlinearity, sample_monotone
from .nonlocal_map import NonlocalMap
from .numerics import NormKind, vec_norms


class ConfigError(ValueError):
    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location
        self.message = message


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 500
    damping: float = 1.0

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def _zero(t):
    return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Everything needed to certify and solve one nonlocal problem.

    ``E`` holds one growth envelope per component, ``tube`` one radius per
    component. ``gamma_blocks[i][j]`` is the slope of component ``i`` in
    variable ``j``; by default the envelope's ``gamma`` sits on the diagonal.
    """

    grid: TimeGrid
    A: CoefficientFamily
    P: Nonlinearity
    F: NonlocalMap
    E: tuple
    tube: TubeRadius
    norm_kind: NormKind = NormKind.ELL2
    partition: tuple = ()
    gamma_blocks: Optional[tuple] = None
    omega: Optional[KamkeFunction] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    name: str = ""

    def __post_init__(self):
        d = self.A.d
        object.__setattr__(self, "norm_kind", NormKind(self.norm_kind))
        part = tuple(self.partition) or (d,)
        if sum(part) != d or any(p < 1 for p in part):
            raise ValueError(f"partition {part} does not cover dimension {d}")
        object.__setattr__(self, "partition", part)
        if self.F.d != d:
            raise ValueError(f"nonlocal map has dimension {self.F.d}, generator has {d}")
        if tuple(self.F.partition) != part:
            object.__setattr__(self, "F", dataclasses.replace(self.F, partition=part))
        E = (self.E,) if isinstance(self.E, GrowthEnvelope) else tuple(self.E)
        if len(E) != len(part):
            raise ValueError(f"need {len(part)} growth envelopes, got {len(E)}")
        object.__setattr__(self, "E", E)
        tube = self.tube if isinstance(self.tube, TubeRadius) else TubeRadius(self.tube)
        if len(tube) != len(part):
            raise ValueError(f"need {len(part)} tube radii, got {len(tube)}")
        object.__setattr__(self, "tube", tube)
        n = len(part)
        if self.gamma_blocks is None:
            gb = tuple(tuple(E[i].gamma if i == j else _zero for j in range(n)) for i in range(n))
            object.__setattr__(self, "gamma_blocks", gb)
        if abs(self.A.a - self.grid.a) > 1e-12 * max(1.0, self.grid.a):
            raise ValueError("generator horizon and grid horizon differ")
        if n > 1:
            self._check_block_diagonal()

    def _check_block_diagonal(self):
        mask = np.ones((self.d, self.d), dtype=bool)
        for blk in self.blocks:
            mask[blk, blk] = False
        for t in self.grid.nodes:
            A = self.A(t)
            if np.any(A[mask] != 0):
                raise ValueError(f"A(t) is not block-diagonal at t = {t:.6g}")

    @property
    def d(self) -> int:
        return self.A.d

    @property
    def n_components(self) -> int:
        return len(self.partition)

    @property
    def blocks(self) -> list:
        out, start = [], 0
        for size in self.partition:
            out.append(slice(start, start + size))
            start += size
        return out

    def component_norms(self, values: np.ndarray) -> np.ndarray:
        """``|x_i|`` per component for rows of ``values``; shape ``(m, n)``."""
        values = np.atleast_2d(values)
        return np.stack([vec_norms(values[:, b], self.norm_kind) for b in self.blocks], axis=-1)

    def norms(self, values: np.ndarray) -> np.ndarray:
        """Product-space norm: the max over component norms."""
        return np.max(self.component_norms(values), axis=-1)

    def with_grid(self, n_steps: int) -> "ProblemSpec":
        return dataclasses.replace(self, grid=TimeGrid(self.grid.a, n_steps))

    def with_F(self, F: NonlocalMap) -> "ProblemSpec":
        return dataclasses.replace(self, F=F)

    def with_solver(self, **kw) -> "ProblemSpec":
        return dataclasses.replace(self, solver=dataclasses.replace(self.solver, **kw))


# -- file schema --------------------------------------------------------------

_EXPR = {"type": ["string", "number"]}
_EXPR_LIST = {"type": "array", "items": _EXPR, "minItems": 1}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _EXPR, "minItems": 1}, "minItems": 1}
_COEFF = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}]}

SCHEMA = {
    "type": "object",
    "required": ["space", "time", "generator", "nonlinearity", "nonlocal", "envelope", "tube"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "space": {
            "type": "object",
            "required": ["d"],
            "additionalProperties": False,
            "properties": {
                "d": {"type": "integer", "minimum": 1, "maximum": 64},
                "norm": {"enum": ["ell1", "ell2", "ellinf"]},
                "components": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            },
        },
        "time": {
            "type": "object",
            "required": ["a", "n_steps"],
            "additionalProperties": False,
            "properties": {
                "a": {"type": "number", "exclusiveMinimum": 0},
                "n_steps": {"type": "integer", "minimum": 2},
            },
        },
        "generator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "A": _MATRIX,
                "blocks": {"type": "array", "items": _MATRIX, "minItems": 1},
            },
        },
        "nonlinearity": {
            "type": "object",
            "required": ["variant"],
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["superposition", "integro_volterra", "deviated_argument", "zero"]},
                "f": _EXPR_LIST,
                "kernel": _MATRIX,
                "theta": _EXPR,
            },
        },
        "nonlocal": {
            "type": "object",
            "required": ["variant"],
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["multipoint", "quadrature", "zero"]},
                "points": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["t", "C"],
                        "additionalProperties": False,
                        "properties": {"t": {"type": "number"}, "C": _COEFF},
                    },
                },
                "nodes": {"type": "array", "items": {"type": "number"}},
                "weights": {"type": "array", "items": _COEFF},
            },
        },
        "envelope": {
            "type": "object",
            "required": ["delta", "psi"],
            "additionalProperties": False,
            "properties": {
                "delta": _EXPR_LIST,
                "psi": _EXPR_LIST,
                "gamma": {"oneOf": [_EXPR_LIST, _MATRIX]},
            },
        },
        "tube": {
            "type": "object",
            "required": ["R"],
            "additionalProperties": False,
            "properties": {"R": _EXPR_LIST},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "kamke": {
            "type": "object",
            "required": ["omega"],
            "additionalProperties": False,
            "properties": {"omega": _EXPR},
        },
    },
}


def _loc(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _expr(src, allowed, where: str) -> Expr:
    text = str(src) if not isinstance(src, str) else src
    try:
        return Expr(text, allowed)
    except ExprError as exc:
        raise ConfigError(where, f"{exc.message} (byte offset {exc.offset}) in {text!r}") from exc


# Wrappers turn parsed expressions into the vectorised callables the numerics
# expect. Constant expressions return scalars, hence the broadcasting.


def _fn_t(e: Expr):
    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(e.eval(t=t), t.shape).astype(float)
    return fn


def _fn_r(e: Expr):
    def fn(r):
        r = np.asarray(r, dtype=float)
        return np.broadcast_to(e.eval(r=r, s=r), r.shape).astype(float)
    return fn


def _fn_ts(e: Expr, second=("s",)):
    def fn(t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        shape = np.broadcast_shapes(t.shape, s.shape)
        return np.broadcast_to(e.eval(t=t, **{k: s for k in second}), shape).astype(float)
    return fn


def _matrix_fn(es, d):
    def A(t):
        return np.array([[float(e.eval(t=t)) for e in row] for row in es]).reshape(d, d)
    return A


def _f_fn(es, d):
    names = [f"x{k + 1}" for k in range(d)]

    def f(t, x):
        t = np.asarray(t, dtype=float)
        bind = {n: x[..., k] for k, n in enumerate(names)}
        return np.stack([np.broadcast_to(e.eval(t=t, **bind), t.shape) for e in es], axis=-1).astype(float)
    return f


def _kernel_fn(es, d):
    def k(t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        rows = [[np.broadcast_to(e.eval(t=t, s=s), t.shape) for e in row] for row in es]
        return np.moveaxis(np.array(rows, dtype=float), (0, 1), (-2, -1))
    return k


def _coeff(C, d, where):
    C = np.asarray(C, dtype=float)
    if C.ndim == 0:
        return float(C) * np.eye(d)
    if C.shape != (d, d):
        raise ConfigError(where, f"coefficient must be a number or a {d}x{d} matrix")
    return C


def load_raw_text(text: str, source: str = "<string>") -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(source, f"TOML syntax error: {exc}") from exc


def load_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(str(path), "file is not valid UTF-8") from exc
    return load_raw_text(text, str(path))


def load_problem_text(text: str, source: str = "<string>") -> ProblemSpec:
    return build_problem(load_raw_text(text, source), source)


def load_problem(path) -> ProblemSpec:
    return build_problem(load_raw(path), str(path))


def build_problem(raw: dict, source: str = "<dict>") -> ProblemSpec:
    """Validate a parsed problem document and assemble the :class:`ProblemSpec`."""
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        raise ConfigError(_loc(err.absolute_path), err.message)
    try:
        return _assemble(raw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(source, str(exc)) from exc


def _assemble(raw: dict) -> ProblemSpec:
    sp = raw["space"]
    d = sp["d"]
    comps = tuple(sp.get("components", [d]))
    if sum(comps) != d:
        raise ConfigError("space.components", f"sizes {list(comps)} do not sum to d = {d}")
    n = len(comps)
    norm = NormKind(sp.get("norm", "ell2"))

    tm = raw["time"]
    if tm["n_steps"] % 2:
        raise ConfigError("time.n_steps", "must be even")
    grid = TimeGrid(float(tm["a"]), tm["n_steps"])

    A = _generator(raw["generator"], d, comps, grid.a)
    P = _nonlinearity(raw["nonlinearity"], d)
    F = _nonlocal(raw["nonlocal"], d, comps, grid)

    env = raw["envelope"]
    for key in ("delta", "psi"):
        if len(env[key]) != n:
            raise ConfigError(f"envelope.{key}", f"need {n} entries, one per component")
    gamma_raw = env.get("gamma", [0] * n)
    gamma_blocks = None
    tube_raw = raw["tube"]["R"]
    if len(tube_raw) != n:
        raise ConfigError("tube.R", f"need {n} entries, one per component")
    tube = TubeRadius(tuple(_fn_t(_expr(r, ("t",), f"tube.R[{i}]")) for i, r in enumerate(tube_raw)))
    for i in range(n):
        if not _positive(tube, grid, i):
            raise ConfigError(f"tube.R[{i}]", "radius must be positive on [0, a]")
    if gamma_raw and isinstance(gamma_raw[0], list):
        if len(gamma_raw) != n or any(len(row) != n for row in gamma_raw):
            raise ConfigError("envelope.gamma", f"matrix form must be {n}x{n}")
        gamma_blocks = tuple(
            tuple(_fn_t(_expr(g, ("t",), f"envelope.gamma[{i}][{j}]")) for j, g in enumerate(row))
            for i, row in enumerate(gamma_raw)
        )
        diag = [gamma_blocks[i][i] for i in range(n)]
    else:
        if len(gamma_raw) != n:
            raise ConfigError("envelope.gamma", f"need {n} entries, one per component")
        diag = [_fn_t(_expr(g, ("t",), f"envelope.gamma[{i}]")) for i, g in enumerate(gamma_raw)]
    E = []
    for i in range(n):
        delta = _fn_t(_expr(env["delta"][i], ("t",), f"envelope.delta[{i}]"))
        psi = _fn_r(_expr(env["psi"][i], ("r", "s"), f"envelope.psi[{i}]"))
        if np.any(delta(grid.nodes) < 0):
            raise ConfigError(f"envelope.delta[{i}]", "delta must be nonnegative")
        if np.any(diag[i](grid.nodes) < 0):
            raise ConfigError(f"envelope.gamma[{i}]", "gamma must be nonnegative")
        upper = 2.0 * float(np.max(tube.values(grid, i)))
        try:
            sample_monotone(psi, upper)
        except (ValueError, ExprError) as exc:
            raise ConfigError(f"envelope.psi[{i}]", str(exc)) from exc
        E.append(GrowthEnvelope(delta, psi, diag[i]))
    if gamma_blocks is not None:
        for i in range(n):
            for j in range(n):
                if np.any(gamma_blocks[i][j](grid.nodes) < 0):
                    raise ConfigError(f"envelope.gamma[{i}][{j}]", "gamma must be nonnegative")

    s = raw.get("solver", {})
    solver = SolverConfig(float(s.get("tol", 1e-10)), int(s.get("max_iter", 500)), float(s.get("damping", 1.0)))
    omega = None
    if "kamke" in raw:
        if n != 1:
            raise ConfigError("kamke", "the comparison iteration is defined for scalar problems only")
        omega = KamkeFunction(_fn_ts(_expr(raw["kamke"]["omega"], ("t", "r", "s"), "kamke.omega"), ("r", "s")))

    try:
        return ProblemSpec(
            grid, A, P, F, tuple(E), tube, norm, comps, gamma_blocks, omega, solver, raw.get("name", "")
        )
    except ValueError as exc:
        raise ConfigError("generator" if "block-diagonal" in str(exc) else "<problem>", str(exc)) from exc


def _positive(tube, grid, i) -> bool:
    try:
        tube.values(grid, i)
    except (ValueError, ExprError):
        return False
    return True


def _generator(g: dict, d: int, comps: tuple, a: float) -> CoefficientFamily:
    if ("A" in g) == ("blocks" in g):
        raise ConfigError("generator", "give exactly one of 'A' or 'blocks'")
    if "A" in g:
        rows = g["A"]
        if len(rows) != d or any(len(r) != d for r in rows):
            raise ConfigError("generator.A", f"must be a {d}x{d} matrix")
        es = [[_expr(x, ("t",), f"generator.A[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(rows)]
    else:
        blocks = g["blocks"]
        if len(blocks) != len(comps):
            raise ConfigError("generator.blocks", f"need {len(comps)} blocks")
        es = [[_expr(0, ("t",), "generator") for _ in range(d)] for _ in range(d)]
        start = 0
        for b, (rows, size) in enumerate(zip(blocks, comps)):
            if len(rows) != size or any(len(r) != size for r in rows):
                raise ConfigError(f"generator.blocks[{b}]", f"must be a {size}x{size} matrix")
            for i, r in enumerate(rows):
                for j, x in enumerate(r):
                    es[start + i][start + j] = _expr(x, ("t",), f"generator.blocks[{b}][{i}][{j}]")
            start += size
    return CoefficientFamily(d, a, _matrix_fn(es, d))


def _nonlinearity(nl: dict, d: int) -> Nonlinearity:
    variant = nl["variant"]
    xs = ("t",) + tuple(f"x{k + 1}" for k in range(d))
    if variant == "zero":
        return Nonlinearity.superposition(lambda t, x: np.zeros_like(x))
    if "f" not in nl:
        raise ConfigError("nonlinearity", "missing 'f'")
    if len(nl["f"]) != d:
        raise ConfigError("nonlinearity.f", f"need {d} expressions")
    f = _f_fn([_expr(x, xs, f"nonlinearity.f[{i}]") for i, x in enumerate(nl["f"])], d)
    if variant == "superposition":
        return Nonlinearity.superposition(f)
    if variant == "integro_volterra":
        if "kernel" not in nl:
            raise ConfigError("nonlinearity", "integro_volterra needs 'kernel'")
        rows = nl["kernel"]
        if len(rows) != d or any(len(r) != d for r in rows):
            raise ConfigError("nonlinearity.kernel", f"must be a {d}x{d} matrix")
        es = [[_expr(x, ("t", "s"), f"nonlinearity.kernel[{i}][{j}]") for j, x in enumerate(r)]
              for i, r in enumerate(rows)]
        return Nonlinearity.integro_volterra(f, _kernel_fn(es, d))
    if "theta" not in nl:
        raise ConfigError("nonlinearity", "deviated_argument needs 'theta'")
    return Nonlinearity.deviated_argument(f, _fn_t(_expr(nl["theta"], ("t",), "nonlinearity.theta")))


def _nonlocal(nl: dict, d: int, comps: tuple, grid: TimeGrid) -> NonlocalMap:
    variant = nl["variant"]
    if variant == "zero":
        return NonlocalMap.zero(d, comps)
    if variant == "multipoint":
        pts = nl.get("points") or []
        if not pts:
            raise ConfigError("nonlocal.points", "a multi-point condition needs at least one point")
        points = []
        for k, p in enumerate(pts):
            if not grid.is_node(p["t"]) or p["t"] <= 0:
                raise ConfigError(f"nonlocal.points[{k}].t", f"{p['t']} is not a grid node in (0, a]")
            points.append((p["t"], _coeff(p["C"], d, f"nonlocal.points[{k}].C")))
        try:
            return NonlocalMap.multipoint(points, d, comps)
        except ValueError as exc:
            raise ConfigError("nonlocal.points", str(exc)) from exc
    nodes = nl.get("nodes") or []
    weights = nl.get("weights") or []
    if len(nodes) != len(weights):
        raise ConfigError("nonlocal", "'nodes' and 'weights' must have equal length")
    for k, t in enumerate(nodes):
        if not grid.is_node(t):
            raise ConfigError(f"nonlocal.nodes[{k}]", f"{t} is not a grid node")
    W = [_coeff(w, d, f"nonlocal.weights[{k}]") for k, w in enumerate(weights)]
    try:
        return NonlocalMap.quadrature(nodes, W, d, comps)
    except ValueError as exc:
        raise ConfigError("nonlocal.nodes", str(exc)) from exc
