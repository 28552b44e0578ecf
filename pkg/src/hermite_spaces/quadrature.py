"""Weighted ``L^p`` quadrature for band-limited Hermite expansions.

A function in ``V_K`` lives, up to a Gaussian tail, inside
``|x|_inf <= sqrt(2K + n)``.  The rule covers ``[-X, X]^n`` with
``X = sqrt(2K + n) + margin`` by composite Gauss-Legendre panels.  In 1-D
the panels are cut at caller-supplied breakpoints (sign changes of the
integrand, table nodes, the origin for power weights), and the panels next
to the origin use Gauss-Jacobi nodes that absorb ``|x|^eps`` exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import ResourceError, ValidationError
from .hermite_core import hermite_table
from .weights import Weight

DEFAULT_PANEL = 0.25
DEFAULT_ORDER = 20
DEFAULT_MARGIN = 10.0
GRADING_RATIO = 0.15
GRADING_LAYERS = 4
POINT_CAP = 20_000_000


@lru_cache(maxsize=None)
def gauss_legendre(m: int):
    return np.polynomial.legendre.leggauss(m)


@lru_cache(maxsize=None)
def gauss_jacobi(m: int, beta: float):
    """Nodes and weights for ``int_{-1}^{1} f(t) (1 + t)^beta dt``."""
    return special.roots_jacobi(m, 0.0, beta)


def domain_half_width(K: int, n: int, w: Weight, p: float, margin: float = DEFAULT_MARGIN) -> float:
    """Half side ``X`` of the quadrature box for ``|f|^p w`` with ``f`` in ``V_K``.

    Beyond the turning point ``sqrt(2K + n)`` the integrand decays at least
    like ``exp(-(p/2 - eps) x^2)``; Gaussian-growth weights stretch the margin.
    """
    rate = 0.5 * p
    if w.family == "gaussian":
        rate -= w.param("eps")
    if rate <= 0:
        return math.inf
    return math.sqrt(2.0 * K + n) + margin / math.sqrt(rate / (0.5 * p))


def _panels(a: float, b: float, width: float) -> np.ndarray:
    m = max(1, int(math.ceil((b - a) / width - 1e-12)))
    return np.linspace(a, b, m + 1)


def _graded(lo: float, hi: float, at_lo: bool, at_hi: bool) -> np.ndarray:
    """Edges of ``[lo, hi]`` refined geometrically toward kink endpoints.

    ``|x - r|^p`` is only Hoelder at a sign change ``r``; geometric grading
    restores fast convergence of Gauss-Legendre next to it.
    """
    h = hi - lo
    ks = GRADING_RATIO ** np.arange(1, GRADING_LAYERS + 1)
    edges = [lo, hi]
    if at_lo:
        edges.extend(lo + h * 0.5 * ks)
    if at_hi:
        edges.extend(hi - h * 0.5 * ks)
    return np.unique(edges)


@dataclass(frozen=True)
class LineRule:
    """1-D rule ``int g w ~ sum weights * g(points)`` with ``w`` folded into the weights."""

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    X: float

    @property
    def size(self) -> int:
        return self.points.size


def line_rule(
    X: float,
    w: Weight | None = None,
    breaks=(),
    panel: float = DEFAULT_PANEL,
    order: int = DEFAULT_ORDER,
    weighted: bool = True,
) -> LineRule:
    """Composite rule on ``[-X, X]`` cut at ``breaks``; ``w`` folded in when ``weighted``."""
    if not (math.isfinite(X) and X > 0):
        raise ValidationError("quadrature half-width must be finite and positive")
    cuts = [-X, X]
    jacobi_eps = None
    if w is not None and weighted:
        if w.family == "power":
            cuts.append(0.0)
            if w.param("eps") != 0.0:
                jacobi_eps = w.param("eps")
        elif w.family == "table":
            xs = np.asarray(w.param("x"))
            cuts.extend(xs[(xs > -X) & (xs < X)].tolist())
    b = np.asarray(breaks, dtype=float).ravel()
    kinks = set(b[(b > -X) & (b < X)].tolist())
    cuts.extend(kinks)
    cuts = np.unique(np.asarray(cuts))
    t, wt = gauss_legendre(order)
    pts, wts, fold = [], [], []
    for a, c in zip(cuts[:-1], cuts[1:]):
        edges = _panels(a, c, panel)
        for lo, hi in zip(edges[:-1], edges[1:]):
            h = 0.5 * (hi - lo)
            if jacobi_eps is not None and (lo == 0.0 or hi == 0.0):
                # |x|^eps = (h (1 +- t))^eps on a panel touching the origin
                tj, wj = gauss_jacobi(order, jacobi_eps)
                if lo == 0.0:
                    x = lo + h * (1.0 + tj)
                else:
                    x = hi - h * (1.0 + tj)
                pts.append(x)
                wts.append(h ** (1.0 + jacobi_eps) * wj)
                fold.append(np.zeros(x.size, dtype=bool))
                continue
            sub = _graded(lo, hi, lo in kinks, hi in kinks) if kinks else (lo, hi)
            for a2, b2 in zip(sub[:-1], sub[1:]):
                h2 = 0.5 * (b2 - a2)
                x = a2 + h2 * (1.0 + t)
                pts.append(x)
                wts.append(h2 * wt)
                fold.append(np.ones(x.size, dtype=bool))
    points = np.concatenate(pts)
    weights = np.concatenate(wts)
    if w is not None and weighted:
        # one vectorized weight call for every panel without a folded-in singularity
        mask = np.concatenate(fold)
        if mask.sum() >= 2:
            weights[mask] = weights[mask] * w(points[mask])
        elif mask.any():
            weights[mask] = weights[mask] * w(float(points[mask][0]))
    order_ = np.argsort(points, kind="stable")
    return LineRule(points[order_], weights[order_], float(X))


def sign_change_roots(fn, a: float, b: float, step: float, iters: int = 60) -> np.ndarray:
    """Zeros of a real vectorized ``fn`` on ``[a, b]`` located by sign changes on a ``step`` grid.

    ``fn`` maps an array of points to an array of shape ``(P, L)`` (``L``
    functions at once); the roots of all ``L`` functions are returned
    together.  Each bracket is refined by vectorized bisection.
    """
    m = max(2, int(math.ceil((b - a) / step)) + 1)
    x = np.linspace(a, b, m)
    v = np.atleast_2d(np.asarray(fn(x)).reshape(m, -1))
    left, right, cols = [], [], []
    exact = []
    for l in range(v.shape[1]):
        s = np.sign(v[:, l])
        exact.append(x[s == 0])
        idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
        left.append(x[idx])
        right.append(x[idx + 1])
        cols.append(np.full(idx.size, l))
    lo, hi, col = np.concatenate(left), np.concatenate(right), np.concatenate(cols)
    if lo.size:
        flo = np.asarray(fn(lo)).reshape(lo.size, -1)[np.arange(lo.size), col]
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            fm = np.asarray(fn(mid)).reshape(mid.size, -1)[np.arange(mid.size), col]
            same = np.sign(fm) == np.sign(flo)
            lo = np.where(same, mid, lo)
            flo = np.where(same, fm, flo)
            hi = np.where(same, hi, mid)
    roots = np.concatenate([0.5 * (lo + hi)] + exact)
    return np.unique(roots)


def _separable(w: Weight) -> bool:
    return w.family in ("constant", "gaussian")


@dataclass(frozen=True)
class TensorRule:
    """Tensor-product rule on ``[-X, X]^n`` as per-axis nodes plus full weights."""

    axes: tuple = field(repr=False)
    weights: np.ndarray = field(repr=False)
    X: float

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def size(self) -> int:
        return self.weights.size


def tensor_rule(X: float, n: int, w: Weight, panel: float = DEFAULT_PANEL, order: int = DEFAULT_ORDER) -> TensorRule:
    """Product of unweighted 1-D rules with ``w`` evaluated on the full grid."""
    base = line_rule(X, None, (0.0,) if w.family == "power" else (), panel, order)
    P = base.size**n
    if P > POINT_CAP:
        raise ResourceError(f"{P} quadrature points exceed the cap of {POINT_CAP}")
    W = base.weights
    for _ in range(n - 1):
        W = np.multiply.outer(W, base.weights)
    mesh = np.stack(np.meshgrid(*([base.points] * n), indexing="ij"), axis=-1)
    W = W * w(mesh.reshape(-1, n), n).reshape(W.shape)
    return TensorRule((base.points,) * n, W, float(X))


def tail_factor(K: int, p: float, w: Weight, X: float, n: int = 1, order: int = 60) -> float | None:
    """Bound factor ``t`` with ``int_{|x|_inf > X} |f|^p w <= ||f||_2^p t`` for ``f`` in ``V_K``.

    Uses ``|f(x)|^2 <= ||f||_2^2 Q_K(x, x)`` and integrates
    ``Q_K^(p/2) w`` over ``[X, X + 20]`` (beyond which it is negligible).
    For ``n > 1`` the product bound ``Q_K <= prod_d Q_K(x_d, x_d)`` is used
    with separable weights; ``None`` when no bound is available.
    """
    if not math.isfinite(X):
        return math.inf
    t, wt = gauss_legendre(order)

    def one_sided(a, b, weight1d):
        edges = _panels(a, b, 1.0)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
            T = hermite_table(K, x)
            total += 0.5 * (hi - lo) * float(np.sum(wt * np.sum(T * T, axis=1) ** (0.5 * p) * weight1d(x)))
        return total

    if n == 1:
        if w.family == "table":
            return 2.0 * one_sided(X, X + 20.0, lambda x: np.maximum(w(x), w(-x)))
        return 2.0 * one_sided(X, X + 20.0, lambda x: w(x))
    if not _separable(w):
        return None
    w1 = Weight.gaussian(w.param("eps")) if w.family == "gaussian" else Weight.constant(w.param("c") ** (1.0 / n))
    tail = 2.0 * one_sided(X, X + 20.0, lambda x: w1(x))
    full = tail + one_sided(-X, X, lambda x: w1(x))
    return n * tail * full ** (n - 1)


def needs_breakpoints(p: float) -> bool:
    """``|F|^p`` is smooth across zeros of a real ``F`` only for even integer ``p``."""
    return not (float(p).is_integer() and int(p) % 2 == 0)


def expansion_roots(coeff_columns: np.ndarray, X: float, step: float | None = None) -> np.ndarray:
    """Sign changes of the 1-D real expansions given as columns ``(K+1, L)`` inside ``[-X, X]``."""
    C = np.asarray(coeff_columns)
    if np.iscomplexobj(C) or not np.any(C):
        return np.array([])
    K = C.shape[0] - 1
    if step is None:
        # well below the smallest zero spacing of h_K (about pi / sqrt(2K + 1))
        step = 0.1 / math.sqrt(2.0 * K + 1.0)
    return sign_change_roots(lambda x: hermite_table(K, x) @ C, -X, X, step)


def weighted_lp_norm(f, w: Weight, p: float, panel: float = DEFAULT_PANEL, order: int = DEFAULT_ORDER, margin: float = DEFAULT_MARGIN) -> float:
    """``||f||_{L^p_w}`` for a Hermite expansion ``f`` (``p = inf`` gives the sup over the rule nodes)."""
    from .hermite_core import evaluate_product_grid

    if not p > 0:
        raise ValidationError("p must be positive")
    pp = 2.0 if math.isinf(p) else p
    X = domain_half_width(f.N, f.n, w, pp, margin)
    if not math.isfinite(X):
        return math.inf if np.any(f.coeffs) else 0.0
    if f.n == 1:
        breaks = expansion_roots(f.coeffs[:, None], X) if needs_breakpoints(p) else ()
        rule = line_rule(X, w, breaks, panel, order)
        vals = np.abs(hermite_table(f.N, rule.points) @ f.coeffs)
        wts = rule.weights
    else:
        rule = tensor_rule(X, f.n, w, panel, order)
        vals = np.abs(evaluate_product_grid(f, rule.axes)).ravel()
        wts = rule.weights.ravel()
    if math.isinf(p):
        return float(np.max(vals[wts > 0], initial=0.0))
    return float(np.sum(wts * vals**p)) ** (1.0 / p)


__all__ = [
    "expansion_roots",
    "needs_breakpoints",
    "weighted_lp_norm",
    "DEFAULT_MARGIN",
    "DEFAULT_ORDER",
    "DEFAULT_PANEL",
    "LineRule",
    "TensorRule",
    "domain_half_width",
    "gauss_jacobi",
    "gauss_legendre",
    "line_rule",
    "sign_change_roots",
    "tail_factor",
    "tensor_rule",
]
