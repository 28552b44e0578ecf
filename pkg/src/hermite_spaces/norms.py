"""Weighted Hermite Besov / Triebel-Lizorkin norms and their sequence-space counterparts.

Function norms of ``f`` in ``V_{4^J}`` sum the levels ``0..J+2`` (all others
vanish) and evaluate ``L^p_w`` norms with one quadrature rule shared by all
levels, so that Besov and Triebel-Lizorkin values agree exactly when
``p = q``.  Sequence norms are exact finite computations; the
Triebel-Lizorkin one integrates the piecewise-constant integrand over the
arrangement of tile boundaries of all levels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ResourceError, ValidationError
from .frames import FrameSequence, analysis_levels, log_tile_masses
from .hermite_core import HermiteExpansion, evaluate_product_grid, hermite_table
from .multipliers import MultiplierSystem, apply_multiplier
from .quadrature import (
    DEFAULT_MARGIN,
    DEFAULT_ORDER,
    DEFAULT_PANEL,
    domain_half_width,
    expansion_roots,
    line_rule,
    needs_breakpoints,
    tail_factor,
    tensor_rule,
)
from .tiles import TileGrid
from .weights import Weight

KINDS = ("besov", "triebel")
EXPONENT_FLOOR = 0.1
ARRANGEMENT_CAP = 1_000_000
LOG2 = math.log(2.0)


@dataclass(frozen=True)
class SpaceParams:
    """Smoothness ``alpha``, integrability ``p`` and fine index ``q`` of a B or F scale."""

    alpha: float
    p: float
    q: float
    kind: str = "besov"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"scale must be one of {KINDS}, got {self.kind!r}")
        for name in ("alpha", "p", "q"):
            v = float(getattr(self, name))
            if math.isnan(v):
                raise ValidationError(f"{name} must be a number")
            object.__setattr__(self, name, v)
        if not math.isfinite(self.alpha):
            raise ValidationError("alpha must be finite")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not v >= EXPONENT_FLOOR:
                raise ValidationError(f"{name} must be at least {EXPONENT_FLOOR}, got {v}")
        if self.kind == "triebel" and math.isinf(self.p):
            raise ValidationError("Triebel-Lizorkin scales need p < inf")

    @classmethod
    def parse(cls, text: str, kind: str = "besov") -> "SpaceParams":
        """Read ``"a=0.5,p=2,q=2"`` (``alpha`` and ``inf`` accepted)."""
        vals = {}
        for part in str(text).split(","):
            if not part.strip():
                continue
            if "=" not in part:
                raise ValidationError(f"bad space parameter {part!r}; expected key=value")
            k, v = (s.strip() for s in part.split("=", 1))
            k = {"alpha": "a"}.get(k, k)
            if k not in ("a", "p", "q"):
                raise ValidationError(f"unknown space parameter {k!r}")
            if k in vals:
                raise ValidationError(f"space parameter {k!r} given twice")
            try:
                vals[k] = float(v)
            except ValueError:
                raise ValidationError(f"space parameter {k}={v!r} is not a number") from None
        missing = {"a", "p", "q"} - set(vals)
        if missing:
            raise ValidationError(f"missing space parameters {sorted(missing)}")
        return cls(vals["a"], vals["p"], vals["q"], kind)

    def with_kind(self, kind: str) -> "SpaceParams":
        return SpaceParams(self.alpha, self.p, self.q, kind)

    def to_json_dict(self) -> dict:
        return {"alpha": self.alpha, "p": _num(self.p), "q": _num(self.q), "kind": self.kind}


def _num(v: float):
    return "inf" if math.isinf(v) else v


def _lq_log(logs: np.ndarray, q: float, axis=None):
    """``log (sum exp(q logs))^(1/q)``, or the max for ``q = inf``."""
    if math.isinf(q):
        return np.max(logs, axis=axis, initial=-np.inf)
    return special.logsumexp(q * np.asarray(logs), axis=axis) / q


@dataclass(frozen=True)
class NormResult:
    """Norm value with its per-level breakdown ``2^(j alpha) ||level_j||``."""

    value: float
    per_level: dict
    params: SpaceParams
    tail_bound: float | None = None
    quadrature_points: int | None = None
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {
            "value": self.value,
            "breakdown": {str(j): v for j, v in sorted(self.per_level.items())},
            "params": self.params.to_json_dict(),
        }
        if self.tail_bound is not None:
            out["tail_bound"] = self.tail_bound
        if self.quadrature_points is not None:
            out["quadrature_points"] = self.quadrature_points
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# function norms


def _levels(sys: MultiplierSystem, f: HermiteExpansion, J: int):
    if J < 0:
        raise ValidationError("J must be nonnegative")
    if f.effective_degree() > 4**J:
        raise ValidationError(f"expansion has degree {f.effective_degree()} > 4^J = {4**J}")
    f = f.truncated(min(f.N, 4**J))
    return f, {j: apply_multiplier(sys, j, f) for j in analysis_levels(J)}


def level_values(
    sys: MultiplierSystem,
    f: HermiteExpansion,
    w: Weight,
    J: int,
    p: float,
    q: float | None = None,
    refine: int = 0,
    panel: float = DEFAULT_PANEL,
    order: int = DEFAULT_ORDER,
    margin: float = DEFAULT_MARGIN,
):
    """Values of every ``phi_j(sqrt(L)) f`` on one shared quadrature rule.

    Returns ``(levels, values, weights, X)`` where ``values[:, i]`` belongs
    to ``levels[i]`` and the weight ``w`` is folded into ``weights``.
    ``refine`` halves the panel width that many times.
    """
    f, gs = _levels(sys, f, J)
    levels = sorted(gs)
    pp = 2.0 if math.isinf(p) else p
    X = domain_half_width(f.N, f.n, w, pp, margin)
    if not math.isfinite(X):
        return levels, None, None, X
    width = panel / 2**refine
    if f.n == 1:
        C = np.stack([gs[j].coeffs for j in levels], axis=1)
        smooth = not needs_breakpoints(p) and (q is None or not needs_breakpoints(q))
        breaks = () if smooth else expansion_roots(C, X)
        rule = line_rule(X, w, breaks, width, order)
        V = hermite_table(f.N, rule.points) @ C
        return levels, V, rule.weights, X
    rule = tensor_rule(X, f.n, w, width, order)
    V = np.stack([evaluate_product_grid(gs[j], rule.axes).reshape(-1) for j in levels], axis=1)
    return levels, V, rule.weights.reshape(-1), X


def _tail(f: HermiteExpansion, w: Weight, p: float, X: float):
    if math.isinf(p) or not math.isfinite(X):
        return None
    t = tail_factor(f.N, p, w, X, f.n)
    return None if t is None else t * f.norm() ** p


def besov_norm(sys: MultiplierSystem, f: HermiteExpansion, params: SpaceParams, w: Weight, J: int, **rule_kw) -> NormResult:
    """``(sum_j (2^(j alpha) ||phi_j(sqrt L) f||_{L^p_w})^q)^(1/q)`` over ``j <= J+2``."""
    p, q, a = params.p, params.q, params.alpha
    if math.isinf(p) and w.family == "power" and w.param("eps") < 0:
        raise ValidationError("p = inf needs a locally bounded weight")
    levels, V, W, X = level_values(sys, f, w, J, p, None, **rule_kw)
    if V is None:
        val = math.inf if np.any(f.coeffs) else 0.0
        return NormResult(val, {j: val for j in levels}, params)
    A = np.abs(V)
    with np.errstate(divide="ignore"):
        if math.isinf(p):
            lv = np.log(np.max(A[W > 0], axis=0, initial=0.0))
        else:
            lv = special.logsumexp(p * np.log(A) + np.log(W)[:, None], axis=0) / p
    lv = lv + LOG2 * a * np.asarray(levels)
    value = float(np.exp(_lq_log(lv, q)))
    return NormResult(value, dict(zip(levels, np.exp(lv).tolist())), params, _tail(f, w, p, X), V.shape[0])


def triebel_norm(sys: MultiplierSystem, f: HermiteExpansion, params: SpaceParams, w: Weight, J: int, **rule_kw) -> NormResult:
    """``||(sum_j (2^(j alpha) |phi_j(sqrt L) f|)^q)^(1/q)||_{L^p_w}`` over ``j <= J+2``."""
    p, q, a = params.p, params.q, params.alpha
    if math.isinf(p):
        raise ValidationError("Triebel-Lizorkin norms need p < inf")
    levels, V, W, X = level_values(sys, f, w, J, p, q, **rule_kw)
    if V is None:
        val = math.inf if np.any(f.coeffs) else 0.0
        return NormResult(val, {j: val for j in levels}, params)
    with np.errstate(divide="ignore"):
        L = np.log(np.abs(V)) + LOG2 * a * np.asarray(levels)[None, :]
        G = _lq_log(L, q, axis=1)
        value = float(np.exp(special.logsumexp(p * G + np.log(W)) / p))
        per = special.logsumexp(p * L + np.log(W)[:, None], axis=0) / p
    return NormResult(value, dict(zip(levels, np.exp(per).tolist())), params, _tail(f, w, p, X), V.shape[0])


def function_norm(sys: MultiplierSystem, f: HermiteExpansion, params: SpaceParams, w: Weight, J: int, **rule_kw) -> NormResult:
    fn = besov_norm if params.kind == "besov" else triebel_norm
    return fn(sys, f, params, w, J, **rule_kw)


# ---------------------------------------------------------------------------
# sequence norms


class TileMasses:
    """Per-level ``log w(R)`` and ``log |R|`` for one weight and grid, computed on demand."""

    def __init__(self, w: Weight, grid: TileGrid):
        self.w = w
        self.grid = grid
        self._mass = {}
        self._measure = {}

    def log_mass(self, j: int) -> np.ndarray:
        if j not in self._mass:
            self._mass[j] = log_tile_masses(self.w, self.grid, j)
        return self._mass[j]

    def log_measure(self, j: int) -> np.ndarray:
        if j not in self._measure:
            self._measure[j] = np.log(self.grid.measures(j))
        return self._measure[j]


def _masses(w, grid, masses):
    if masses is None:
        return TileMasses(w, grid)
    if masses.w != w or masses.grid is not grid:
        raise ValidationError("tile-mass cache belongs to a different weight or grid")
    return masses


def _log_entries(s: FrameSequence, j: int, masses: TileMasses, alpha: float, p: float):
    """Indices and ``log(2^(j alpha) w(R)^(1/p) |R|^(-1/2) |s_R|)`` of the nonzero entries."""
    arr = s.level(j)
    idx = np.flatnonzero(arr)
    if idx.size == 0:
        return idx, np.array([])
    lw = 0.0 if math.isinf(p) else masses.log_mass(j)[idx] / p
    out = j * alpha * LOG2 + lw - 0.5 * masses.log_measure(j)[idx] + np.log(np.abs(arr[idx]))
    return idx, out


def seq_besov_norm(s: FrameSequence, params: SpaceParams, w: Weight, grid: TileGrid, masses: TileMasses | None = None) -> NormResult:
    """``{sum_j 2^(j alpha q) (sum_R (w(R)^(1/p) |R|^(-1/2) |s_R|)^p)^(q/p)}^(1/q)``."""
    s.compatible(grid)
    masses = _masses(w, grid, masses)
    per = {}
    for j in sorted(s.levels):
        _, logs = _log_entries(s, j, masses, params.alpha, params.p)
        if logs.size:
            per[j] = float(_lq_log(logs, params.p))
    if not per:
        return NormResult(0.0, {}, params.with_kind("besov"))
    value = float(np.exp(_lq_log(np.array(list(per.values())), params.q)))
    return NormResult(value, {j: float(np.exp(v)) for j, v in per.items()}, params.with_kind("besov"))


def seq_triebel_norm(
    s: FrameSequence,
    params: SpaceParams,
    w: Weight,
    grid: TileGrid,
    masses: TileMasses | None = None,
    cap: int = ARRANGEMENT_CAP,
) -> NormResult:
    """``||(sum_j 2^(j alpha q) sum_R (|R|^(-1/2) |s_R| 1_R)^q)^(1/q)||_{L^p_w}``, exactly.

    The integrand is constant on every cell of the arrangement formed by the
    boundaries of all tiles carrying a nonzero coefficient, so the integral
    is a finite sum of cell values times cell masses.
    """
    if math.isinf(params.p):
        raise ValidationError("Triebel-Lizorkin sequence norms need p < inf")
    s.compatible(grid)
    masses = _masses(w, grid, masses)
    n, p, q = s.n, params.p, params.q
    active = {}
    for j in sorted(s.levels):
        idx, logs = _log_entries(s, j, masses, params.alpha, math.inf)
        if idx.size:
            active[j] = (idx, logs)
    if not active:
        return NormResult(0.0, {}, params.with_kind("triebel"))
    # per-axis breakpoints of the arrangement
    cuts = [[] for _ in range(n)]
    for j, (idx, _) in active.items():
        ax = grid.axis(j)
        pos = np.array(np.unravel_index(idx, grid.shape(j)))
        for d in range(n):
            cuts[d].append(ax.lo[pos[d]])
            cuts[d].append(ax.hi[pos[d]])
    edges = [np.unique(np.concatenate(c)) for c in cuts]
    cells = int(np.prod([e.size - 1 for e in edges]))
    if cells > cap:
        raise ResourceError(f"arrangement has {cells} cells, above the cap of {cap}")
    mids = [0.5 * (e[:-1] + e[1:]) for e in edges]
    shape = tuple(m.size for m in mids)
    acc = np.full(shape, -np.inf)
    per = {}
    for j, (idx, logs) in active.items():
        ax = grid.axis(j)
        dense = np.full(grid.tile_count(j), -np.inf)
        dense[idx] = logs
        dense = dense.reshape(grid.shape(j))
        locs = [ax.locate(m) for m in mids]
        inside = [l >= 0 for l in locs]
        sel = np.ix_(*[np.maximum(l, 0) for l in locs])
        vals = dense[sel]
        mask = np.ones(shape, dtype=bool)
        for d in range(n):
            sh = [1] * n
            sh[d] = -1
            mask = mask & inside[d].reshape(sh)
        vals = np.where(mask, vals, -np.inf)
        acc = np.maximum(acc, vals) if math.isinf(q) else np.logaddexp(acc, q * vals)
        # level contribution ||2^(j alpha) sum_R |R|^(-1/2)|s_R| 1_R||_{L^p_w}
        per[j] = float(_lq_log(logs + masses.log_mass(j)[idx] / p, p))
    G = acc if math.isinf(q) else acc / q
    lo = [e[:-1] for e in edges]
    hi = [e[1:] for e in edges]
    if n == 1:
        logm = w.log_mass_boxes(lo[0][:, None], hi[0][:, None])
    elif w.family in ("constant", "gaussian"):
        w1 = Weight.constant(w.param("c") ** (1.0 / n)) if w.family == "constant" else w
        parts = [w1.log_mass_boxes(a[:, None], b[:, None]) for a, b in zip(lo, hi)]
        logm = parts[0]
        for part in parts[1:]:
            logm = np.add.outer(logm, part)
    else:
        mesh_lo = np.stack(np.meshgrid(*lo, indexing="ij"), axis=-1).reshape(-1, n)
        mesh_hi = np.stack(np.meshgrid(*hi, indexing="ij"), axis=-1).reshape(-1, n)
        logm = w.log_mass_boxes(mesh_lo, mesh_hi).reshape(shape)
    logm = np.asarray(logm).reshape(shape)
    with np.errstate(invalid="ignore"):
        terms = np.where(np.isfinite(G), p * G + logm, -np.inf)
    value = float(np.exp(special.logsumexp(terms) / p))
    return NormResult(value, {j: float(np.exp(v)) for j, v in per.items()}, params.with_kind("triebel"), extra={"cells": cells})


def sequence_norm(s: FrameSequence, params: SpaceParams, w: Weight, grid: TileGrid, masses: TileMasses | None = None) -> NormResult:
    fn = seq_besov_norm if params.kind == "besov" else seq_triebel_norm
    return fn(s, params, w, grid, masses)


def singleton_value(params: SpaceParams, w: Weight, grid: TileGrid, j: int, alpha) -> float:
    """``2^(j alpha) w(R)^(1/p) |R|^(-1/2)``, the norm of the unit sequence at ``R``."""
    tile = grid.tile(j, alpha)
    lw = 0.0 if math.isinf(params.p) else math.log(w.mass(tile)) / params.p
    return math.exp(j * params.alpha * LOG2 + lw - 0.5 * math.log(tile.measure))


__all__ = [
    "ARRANGEMENT_CAP",
    "EXPONENT_FLOOR",
    "KINDS",
    "NormResult",
    "SpaceParams",
    "TileMasses",
    "besov_norm",
    "function_norm",
    "level_values",
    "seq_besov_norm",
    "seq_triebel_norm",
    "sequence_norm",
    "singleton_value",
    "triebel_norm",
]
