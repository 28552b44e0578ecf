"""Needlets, cubature, analysis/synthesis operators and the frame probes.

For a tile ``R`` of level ``j`` with node ``x_R`` and weight ``tau_R`` the
needlet is ``phi_R = tau_R^(1/2) phi_j(sqrt(L))(., x_R)``.  The analysis
coefficients of a band-limited ``f`` are computed without quadrature as

    s_R = <f, phi_R> = tau_R^(1/2) (phi_j(sqrt(L)) f)(x_R),

and synthesis accumulates ``s_R tau_R^(1/2) psi_j(sqrt(lambda_mu)) h_mu(x_R)``
into the coefficient of ``h_mu``.  Level arrays are dense and follow the
lexicographic tile order of :class:`~hermite_spaces.tiles.TileGrid`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConstraintError, ValidationError
from .hermite_core import (
    HermiteExpansion,
    as_points,
    evaluate_product_grid,
    from_coefficient_tensor,
    hermite_table,
)
from .multipliers import MultiplierSystem, apply_multiplier, kernel_expansion, multiplier_kernel, support_index_set
from .quadrature import weighted_lp_norm
from .tiles import DEFAULT_DELTA_STAR, TileGrid, level_size, position_to_alpha
from .weights import GridFunction, Weight, maximal


# ---------------------------------------------------------------------------
# cubature and needlets


def cubature_integrate(grid: TileGrid, j: int, f, g):
    """``sum_R tau_R f(x_R) g(x_R)`` over the level-``j`` tiles.

    ``f`` and ``g`` are callables on ``(P, n)`` point arrays or arrays of
    node values in lexicographic tile order.  Exact when ``f g`` is a product
    of expansions with total degree at most ``4 N_j - 1``.
    """
    nodes = grid.nodes(j)
    fv = np.asarray(f(nodes) if callable(f) else f).reshape(-1)
    gv = np.asarray(g(nodes) if callable(g) else g).reshape(-1)
    if fv.size != nodes.shape[0] or gv.size != nodes.shape[0]:
        raise ValidationError("node values do not match the number of tiles")
    return np.sum(grid.taus(j) * fv * gv)


def needlet_eval(sys: MultiplierSystem, grid: TileGrid, j: int, alpha, x) -> np.ndarray:
    """``phi_R(x) = tau_R^(1/2) K_j(x, x_R)`` for the tile with label ``alpha``."""
    tile = grid.tile(j, alpha)
    x = as_points(x, grid.n)
    y = np.broadcast_to(tile.node, x.shape)
    k = multiplier_kernel(sys, j, x if grid.n > 1 else x[:, 0], y if grid.n > 1 else y[:, 0], grid.n)
    return math.sqrt(tile.tau) * np.asarray(k).reshape(x.shape[0])


def needlet_expansion(sys: MultiplierSystem, grid: TileGrid, j: int, alpha) -> HermiteExpansion:
    """The needlet ``phi_R`` as a Hermite expansion."""
    tile = grid.tile(j, alpha)
    return kernel_expansion(sys, j, tile.node, grid.n) * math.sqrt(tile.tau)


# ---------------------------------------------------------------------------
# frame sequences


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Coefficients ``s_R`` indexed by tiles of levels ``0..J``.

    ``levels[j]`` is a dense array of length ``(2 N_j)^n`` in lexicographic
    tile order; missing levels are zero.
    """

    n: int
    J: int
    levels: dict = field(repr=False)
    delta_star: float = DEFAULT_DELTA_STAR

    def __post_init__(self):
        if self.n < 1 or self.J < 0:
            raise ValidationError("need n >= 1 and J >= 0")
        clean = {}
        for j, arr in self.levels.items():
            j = int(j)
            if not 0 <= j <= self.J:
                raise ValidationError(f"level {j} outside 0..{self.J}")
            arr = np.asarray(arr)
            if arr.ndim != 1 or arr.size != self.size(j):
                raise ValidationError(f"level {j} needs {self.size(j)} coefficients, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError("coefficients must be finite")
            clean[j] = arr
        object.__setattr__(self, "levels", clean)

    def size(self, j: int) -> int:
        return (2 * level_size(j, self.delta_star)) ** self.n

    def shape(self, j: int) -> tuple[int, ...]:
        return (2 * level_size(j, self.delta_star),) * self.n

    @classmethod
    def zeros(cls, n: int, J: int, delta_star: float = DEFAULT_DELTA_STAR, dtype=float) -> "FrameSequence":
        seq = cls(n, J, {}, delta_star)
        return cls(n, J, {j: np.zeros(seq.size(j), dtype=dtype) for j in range(J + 1)}, delta_star)

    def level(self, j: int) -> np.ndarray:
        if j in self.levels:
            return self.levels[j]
        if not 0 <= j <= self.J:
            raise ValidationError(f"level {j} outside 0..{self.J}")
        return np.zeros(self.size(j))

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(a) for a in self.levels.values())

    def support_size(self) -> int:
        return int(sum(np.count_nonzero(a) for a in self.levels.values()))

    def is_zero(self) -> bool:
        return self.support_size() == 0

    def entry(self, j: int, alpha):
        N = level_size(j, self.delta_star)
        alpha = np.asarray(alpha, dtype=int).reshape(self.n)
        p = np.where(alpha < 0, alpha + N, alpha + N - 1)
        return self.level(j)[np.ravel_multi_index(tuple(p), self.shape(j))]

    def compatible(self, grid: TileGrid):
        if grid.n != self.n or grid.delta_star != self.delta_star:
            raise ValidationError("sequence and tile grid disagree on n or delta_star")
        if grid.J < max(self.levels, default=0):
            raise ValidationError(f"tile grid has levels up to {grid.J}, sequence needs {max(self.levels)}")

    def _combine(self, other, op):
        if not isinstance(other, FrameSequence):
            return NotImplemented
        if (other.n, other.delta_star) != (self.n, self.delta_star):
            raise ValidationError("incompatible sequences")
        J = max(self.J, other.J)
        keys = set(self.levels) | set(other.levels)
        a = FrameSequence(self.n, J, self.levels, self.delta_star)
        b = FrameSequence(other.n, J, other.levels, other.delta_star)
        return FrameSequence(self.n, J, {j: op(a.level(j), b.level(j)) for j in keys}, self.delta_star)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return FrameSequence(self.n, self.J, {j: a * scalar for j, a in self.levels.items()}, self.delta_star)

    __rmul__ = __mul__

    def max_abs_diff(self, other: "FrameSequence") -> float:
        d = self - other
        return float(max((np.max(np.abs(a), initial=0.0) for a in d.levels.values()), default=0.0))

    # -- serialization -----------------------------------------------------------

    def to_json_dict(self) -> dict:
        entries = []
        for j in sorted(self.levels):
            arr = self.levels[j]
            N = level_size(j, self.delta_star)
            for i in np.flatnonzero(arr):
                pos = np.unravel_index(int(i), self.shape(j))
                alpha = position_to_alpha(np.array(pos), N)
                c = complex(arr[i])
                entries.append({"j": j, "node": [int(a) for a in alpha], "re": c.real, "im": c.imag})
        return {"J": self.J, "n": self.n, "delta_star": self.delta_star, "entries": entries}

    @classmethod
    def from_json_dict(cls, data: dict) -> "FrameSequence":
        if not isinstance(data, dict):
            raise ValidationError("sequence JSON must be an object")
        extra = set(data) - {"J", "n", "delta_star", "entries"}
        if extra or "J" not in data or "entries" not in data:
            raise ValidationError(f"sequence JSON needs 'J' and 'entries' (unknown: {sorted(extra)})")
        J, n = data["J"], data.get("n", 1)
        if not (isinstance(J, int) and isinstance(n, int)) or J < 0 or n < 1:
            raise ValidationError("sequence JSON: J and n must be nonnegative/positive integers")
        delta = float(data.get("delta_star", DEFAULT_DELTA_STAR))
        any_imag = any(float(e.get("im", 0.0)) != 0.0 for e in data["entries"] if isinstance(e, dict))
        seq = cls.zeros(n, J, delta, complex if any_imag else float)
        seen = set()
        for e in data["entries"]:
            if not isinstance(e, dict) or set(e) - {"j", "node", "re", "im"} or not {"j", "node", "re"} <= set(e):
                raise ValidationError(f"sequence JSON: bad entry {e!r}")
            j, node = e["j"], e["node"]
            if not isinstance(j, int) or not 0 <= j <= J:
                raise ValidationError(f"sequence JSON: level {j!r} outside 0..{J}")
            N = level_size(j, delta)
            if (
                not isinstance(node, list)
                or len(node) != n
                or not all(isinstance(a, int) and a != 0 and abs(a) <= N for a in node)
            ):
                raise ValidationError(f"sequence JSON: {node!r} is not a level-{j} tile")
            key = (j, tuple(node))
            if key in seen:
                raise ValidationError(f"sequence JSON: duplicate tile {key}")
            seen.add(key)
            alpha = np.array(node)
            p = np.where(alpha < 0, alpha + N, alpha + N - 1)
            val = complex(float(e["re"]), float(e.get("im", 0.0)))
            seq.levels[j][np.ravel_multi_index(tuple(p), seq.shape(j))] = val if any_imag else val.real
        return seq


# ---------------------------------------------------------------------------
# analysis and synthesis


def analysis_levels(J: int) -> range:
    """Levels whose bands meet the spectrum of ``V_{4^J}``: ``0..J+2``."""
    return range(J + 3)


def analyze(sys: MultiplierSystem, grid: TileGrid, f: HermiteExpansion, J: int) -> FrameSequence:
    """``S_phi f`` for ``f`` in ``V_{4^J}`` on levels ``0..J+2``."""
    if f.n != grid.n:
        raise ValidationError("expansion and grid dimensions differ")
    if J < 0:
        raise ValidationError("J must be nonnegative")
    if f.effective_degree() > 4**J:
        raise ValidationError(f"expansion has degree {f.effective_degree()} > 4^J = {4**J}")
    if grid.J < J + 2:
        raise ValidationError(f"analysis of V_(4^{J}) needs tile levels up to {J + 2}, grid has {grid.J}")
    f = f.truncated(min(f.N, 4**J))
    levels = {}
    for j in analysis_levels(J):
        g = apply_multiplier(sys, j, f)
        if not np.any(g.coeffs):
            levels[j] = np.zeros(grid.tile_count(j), dtype=f.coeffs.dtype)
            continue
        vals = evaluate_product_grid(g, [grid.axis(j).nodes] * grid.n).reshape(-1)
        levels[j] = np.sqrt(grid.taus(j)) * vals
    return FrameSequence(grid.n, J + 2, levels, grid.delta_star)


def synthesis_degree(sys: MultiplierSystem, s: FrameSequence) -> int:
    """Largest degree any nonzero level of ``s`` can reach."""
    top = 0
    for j, arr in s.levels.items():
        if np.any(arr):
            ks = support_index_set(sys, j, s.n)
            if ks.size:
                top = max(top, int(ks[-1]))
    return top


def synthesize(sys_dual: MultiplierSystem, grid: TileGrid, s: FrameSequence, N: int | None = None) -> HermiteExpansion:
    """``T_psi s = sum_R s_R psi_R`` accumulated in coefficient space up to degree ``N``."""
    s.compatible(grid)
    N = synthesis_degree(sys_dual, s) if N is None else int(N)
    n = s.n
    dtype = complex if s.is_complex else float
    C = np.zeros((N + 1,) * n, dtype=dtype)
    kgrid = np.indices((N + 1,) * n).sum(axis=0)
    for j in sorted(s.levels):
        arr = s.levels[j]
        if not np.any(arr):
            continue
        m = sys_dual.multipliers(j, n, n * N)[np.minimum(kgrid, n * N)]
        m = np.where(kgrid <= N, m, 0.0)
        if not np.any(m):
            continue
        T = hermite_table(N, grid.axis(j).nodes)
        S = (np.sqrt(grid.taus(j)) * arr).reshape(grid.shape(j))
        for d in range(n):
            S = np.moveaxis(np.tensordot(T, S, axes=([0], [d])), 0, d)
        C += m * S
    return from_coefficient_tensor(C, N)


def reconstruction_error(sys: MultiplierSystem, sys_dual: MultiplierSystem, grid: TileGrid, f: HermiteExpansion, J: int) -> float:
    """Relative coefficient error ``||T_psi S_phi f - f|| / ||f||``."""
    g = synthesize(sys_dual, grid, analyze(sys, grid, f, J))
    N = max(g.N, f.N)
    d = g.padded(N) - f.padded(N)
    nf = f.norm()
    return d.norm() / nf if nf else d.norm()


# ---------------------------------------------------------------------------
# probes


def tile_sample_axes(grid: TileGrid, j: int, per_piece: int = 5):
    """Per-axis sample points (``per_piece`` equispaced points per subdivided piece) and tile offsets."""
    pts, starts = [], []
    count = 0
    for edges in grid.axis_pieces(j):
        starts.append(count)
        chunk = np.concatenate([np.linspace(a, b, per_piece) for a, b in zip(edges[:-1], edges[1:])])
        pts.append(chunk)
        count += chunk.size
    return np.concatenate(pts), np.asarray(starts)


def tile_maxima(grid: TileGrid, j: int, g: HermiteExpansion, per_piece: int = 5) -> np.ndarray:
    """``max_{x in R} |g(x)|`` over the sample grid, per level-``j`` tile (lexicographic order)."""
    axis_pts, starts = tile_sample_axes(grid, j, per_piece)
    vals = np.abs(evaluate_product_grid(g, [axis_pts] * grid.n))
    for d in range(grid.n):
        vals = np.maximum.reduceat(vals, starts, axis=d)
    return vals.reshape(-1)


def log_tile_masses(w: Weight, grid: TileGrid, j: int) -> np.ndarray:
    """``log w(R)`` for every level-``j`` tile, via per-axis factors for separable weights."""
    ax = grid.axis(j)
    if grid.n == 1 or w.family in ("constant", "gaussian"):
        if w.family == "constant" and grid.n > 1:
            c = w.param("c")
            w1 = Weight.constant(c ** (1.0 / grid.n))
        else:
            w1 = w
        one = w1.log_mass_boxes(ax.lo[:, None], ax.hi[:, None])
        out = one
        for _ in range(grid.n - 1):
            out = np.add.outer(out, one).ravel()
        return out
    lo, hi = grid.bounds(j)
    return w.log_mass_boxes(lo, hi)


def plancherel_polya_probe(grid: TileGrid, g: HermiteExpansion, j: int, p: float, w: Weight, per_piece: int = 5) -> float:
    """``(sum_R w(R) max_R |g|^p)^(1/p) / ||g||_{L^p_w}`` over level-``j`` tiles.

    The tile maxima are taken over ``per_piece^n`` samples in every
    subdivided cube, an under-estimate of the true supremum.
    """
    if g.n != grid.n:
        raise ValidationError("expansion and grid dimensions differ")
    if g.effective_degree() > 4**j:
        raise ValidationError(f"g must lie in V_(4^{j})")
    if not p > 0:
        raise ValidationError("p must be positive")
    if not np.any(g.coeffs):
        return 0.0
    mx = tile_maxima(grid, j, g, per_piece)
    logm = log_tile_masses(w, grid, j)
    with np.errstate(divide="ignore"):
        lnum = special.logsumexp(p * np.log(mx) + logm) / p
    den = weighted_lp_norm(g, w, p)
    return float(np.exp(lnum - math.log(den)))


def peetre_constraint(sigma: float, s: float, theta: float, n: int):
    if not s > 0 or theta < 0:
        raise ConstraintError("need s > 0 and theta >= 0")
    bound = theta / s + max(n, n / s)
    if not sigma > bound:
        raise ConstraintError(f"need sigma > theta/s + max(n, n/s) = {bound}, got {sigma}")


def tile_grid_function(grid: TileGrid, j: int, values: np.ndarray) -> GridFunction:
    """``sum_R values_R 1_R`` as a cellwise-constant function on the level-``j`` tiles."""
    ax = grid.axis(j)
    edges = np.concatenate((ax.lo, ax.hi[-1:]))
    return GridFunction((edges,) * grid.n, np.asarray(values).reshape(grid.shape(j)))


@dataclass(frozen=True)
class PeetreReport:
    max_ratio: float
    argmax: tuple
    ratios: np.ndarray = field(repr=False)


def peetre_probe(
    grid: TileGrid,
    j: int,
    a: np.ndarray,
    sigma: float,
    s: float,
    theta: float,
    points=None,
    c_tilde: float | None = None,
    inner: int = 3,
) -> PeetreReport:
    """Compare ``a*_j(x) = sum_R |a_R| (1 + 2^j |x - x_R|)^(-sigma)`` with the maximal bound.

    The right side is ``min`` over ``inner^n`` points ``y`` of the cube
    ``Q(x, c_tilde 2^-j)`` of ``M_s^theta(sum_R |a_R| 1_R)(y)``, with the
    maximal operator restricted to the dyadic lattice family.  Returns the
    maximum of left/right over ``points`` (default: the level-``j`` nodes).
    """
    n = grid.n
    peetre_constraint(sigma, s, theta, n)
    a = np.abs(np.asarray(a)).reshape(-1)
    if a.size != grid.tile_count(j):
        raise ValidationError("one value per level-j tile is required")
    nodes = grid.nodes(j)
    x = nodes if points is None else as_points(points, n)
    c_tilde = grid.c4 if c_tilde is None else c_tilde
    if not 0 < c_tilde <= 2 * grid.c4:
        raise ConstraintError(f"c_tilde must lie in (0, 2 c4] = (0, {2 * grid.c4}]")
    nz = np.flatnonzero(a)
    if nz.size == 0:
        return PeetreReport(0.0, (), np.zeros(x.shape[0]))
    dist = np.linalg.norm(x[:, None, :] - nodes[None, nz, :], axis=-1)
    lhs = np.sum(a[nz] * (1.0 + 2.0**j * dist) ** (-sigma), axis=1)
    gf = tile_grid_function(grid, j, a)
    r = c_tilde * 2.0**-j
    r_min = 0.5 * grid.c4 * 2.0**-j
    levels = int(math.ceil(math.log2(4.0 * grid.half_width(j) / r_min)))
    offs = np.linspace(-r, r, inner) * (1 - 1e-9)
    mesh = np.stack(np.meshgrid(*([offs] * n), indexing="ij"), axis=-1).reshape(-1, n)
    rhs = np.empty(x.shape[0])
    for i, xi in enumerate(x):
        ys = xi + mesh
        vals = np.atleast_1d(maximal(gf, s, theta, ys, r_min=r_min, levels=levels))
        rhs[i] = np.min(vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    k = int(np.argmax(ratios))
    return PeetreReport(float(ratios[k]), tuple(float(v) for v in x[k]), ratios)


__all__ = [
    "FrameSequence",
    "PeetreReport",
    "analysis_levels",
    "analyze",
    "cubature_integrate",
    "log_tile_masses",
    "needlet_eval",
    "needlet_expansion",
    "peetre_constraint",
    "peetre_probe",
    "plancherel_polya_probe",
    "reconstruction_error",
    "synthesis_degree",
    "synthesize",
    "tile_grid_function",
    "tile_maxima",
    "tile_sample_axes",
]
