"""Hermite tiles: nodes, boxes and cubature weights built from zeros of H_{2N_j}.

At level ``j`` the 1-D construction uses the ``2 N_j`` zeros
``zeta_{-N} < ... < zeta_{-1} < 0 < zeta_1 < ... < zeta_N`` of ``H_{2N_j}``
(``N = N_j``) and the intervals

    I_1 = [0, (zeta_1 + zeta_2)/2],
    I_nu = [(zeta_{nu-1} + zeta_nu)/2, (zeta_nu + zeta_{nu+1})/2],   1 < nu < N,
    I_N = [(zeta_{N-1} + zeta_N)/2, zeta_N + 2^(-j/6)],
    I_{-nu} = -I_nu.

Tiles in ``R^n`` are products of these intervals with node ``x_R`` the tuple
of zeros, and cubature weight ``tau_R`` the product of the Gauss-Hermite
Christoffel numbers ``1 / Q_{2N_j}(zeta, zeta)``.  Each axis interval is
labelled by its signed index ``alpha`` and by its position ``p`` in ``0..2N-1``
(left to right).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ValidationError
from .hermite_core import ZeroSet, christoffel, hermite_zeros

DEFAULT_DELTA_STAR = 1.0 / 40.0
DELTA_STAR_MAX = 1.0 / 37.0


def level_size(j: int, delta_star: float = DEFAULT_DELTA_STAR) -> int:
    """``N_j = floor((1 + 11 delta) (4/pi)^2 4^j) + 3``."""
    if j < 0:
        raise ValidationError("level must be nonnegative")
    _check_delta(delta_star)
    return math.floor((1.0 + 11.0 * delta_star) * (4.0 / math.pi) ** 2 * 4.0**j) + 3


def _check_delta(delta_star: float):
    if not 0.0 < delta_star < DELTA_STAR_MAX:
        raise ValidationError(f"delta_star must lie in (0, 1/37), got {delta_star}")


def alpha_to_position(alpha, N: int):
    """Position ``0..2N-1`` of the signed index ``alpha`` (no zero index)."""
    alpha = np.asarray(alpha)
    return np.where(alpha < 0, alpha + N, alpha + N - 1)


def position_to_alpha(p, N: int):
    p = np.asarray(p)
    return np.where(p < N, p - N, p - N + 1)


@dataclass(frozen=True)
class AxisLevel:
    """The 1-D factor of level ``j``: nodes, intervals and weights in position order."""

    j: int
    N: int
    zeros: ZeroSet = field(repr=False)
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)

    @property
    def nodes(self) -> np.ndarray:
        return self.zeros.values

    @property
    def size(self) -> int:
        return 2 * self.N

    @property
    def half_width(self) -> float:
        """Half side of the outer box ``Q_j``."""
        return float(self.hi[-1])

    @cached_property
    def alpha(self) -> np.ndarray:
        return position_to_alpha(np.arange(self.size), self.N)

    @cached_property
    def lengths(self) -> np.ndarray:
        return self.hi - self.lo

    def locate(self, t: np.ndarray) -> np.ndarray:
        """Positions of the intervals containing ``t`` (``[lo, hi)``, last closed); -1 outside."""
        t = np.asarray(t, dtype=float)
        p = np.searchsorted(self.lo, t, side="right") - 1
        p = np.where(t == self.hi[-1], self.size - 1, p)
        inside = (t >= self.lo[0]) & (t <= self.hi[-1])
        return np.where(inside, p, -1)


def build_axis_level(j: int, delta_star: float = DEFAULT_DELTA_STAR) -> AxisLevel:
    N = level_size(j, delta_star)
    zs = hermite_zeros(2 * N)
    z = zs.positive
    mids = 0.5 * (z[:-1] + z[1:])
    pos_lo = np.concatenate(([0.0], mids))
    pos_hi = np.concatenate((mids, [z[-1] + 2.0 ** (-j / 6.0)]))
    lo = np.concatenate((-pos_hi[::-1], pos_lo))
    hi = np.concatenate((-pos_lo[::-1], pos_hi))
    # h_{2N} vanishes at the nodes, so Q_{2N} and Q_{2N-1} agree there
    tau = christoffel(2 * N, zs.values)
    # the weights inherit the exact symmetry of the zeros
    tau = 0.5 * (tau + tau[::-1])
    for arr in (lo, hi, tau):
        arr.setflags(write=False)
    return AxisLevel(j, N, zs, lo, hi, tau)


@dataclass(frozen=True)
class Tile:
    """One tile ``R`` of level ``j``."""

    j: int
    alpha: tuple[int, ...]
    node: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    measure: float
    tau: float

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))


@dataclass(frozen=True)
class TileGrid:
    """All tile families ``E_0..E_J`` in dimension ``n``.

    Tiles of a level are enumerated in lexicographic order of their position
    multi-index, so that flat tile number ``i`` corresponds to
    ``np.unravel_index(i, (2N,) * n)``.
    """

    n: int
    delta_star: float
    axes: tuple[AxisLevel, ...] = field(repr=False)
    subdivide: bool = False

    @property
    def J(self) -> int:
        return len(self.axes) - 1

    def axis(self, j: int) -> AxisLevel:
        if not 0 <= j <= self.J:
            raise ValidationError(f"level {j} not built (J = {self.J})")
        return self.axes[j]

    def N(self, j: int) -> int:
        return self.axis(j).N

    def tile_count(self, j: int) -> int:
        return self.axis(j).size ** self.n

    def shape(self, j: int) -> tuple[int, ...]:
        return (self.axis(j).size,) * self.n

    def half_width(self, j: int) -> float:
        return self.axis(j).half_width

    def outer_measure(self, j: int) -> float:
        return (2.0 * self.half_width(j)) ** self.n

    # -- flattened per-level arrays ------------------------------------------

    def positions(self, j: int) -> np.ndarray:
        """``(P, n)`` position multi-indices in lexicographic order."""
        return np.indices(self.shape(j)).reshape(self.n, -1).T

    def _product(self, j: int, values: np.ndarray, op):
        out = values
        for _ in range(self.n - 1):
            out = op.outer(out, values).ravel()
        return out

    def measures(self, j: int) -> np.ndarray:
        return self._product(j, self.axis(j).lengths, np.multiply)

    def taus(self, j: int) -> np.ndarray:
        return self._product(j, self.axis(j).tau, np.multiply)

    def nodes(self, j: int) -> np.ndarray:
        """``(P, n)`` node coordinates."""
        return self.axis(j).nodes[self.positions(j)]

    def bounds(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        ax, pos = self.axis(j), self.positions(j)
        return ax.lo[pos], ax.hi[pos]

    def alphas(self, j: int) -> np.ndarray:
        return self.axis(j).alpha[self.positions(j)]

    def flat_index(self, j: int, alpha) -> int:
        ax = self.axis(j)
        alpha = np.asarray(alpha, dtype=int).reshape(self.n)
        if np.any(alpha == 0) or np.any(np.abs(alpha) > ax.N):
            raise ValidationError(f"index {alpha.tolist()} is not a level-{j} tile")
        return int(np.ravel_multi_index(tuple(alpha_to_position(alpha, ax.N)), self.shape(j)))

    def tile(self, j: int, alpha) -> Tile:
        ax = self.axis(j)
        alpha = tuple(int(a) for a in np.atleast_1d(alpha))
        self.flat_index(j, alpha)
        p = alpha_to_position(np.array(alpha), ax.N)
        return Tile(
            j,
            alpha,
            ax.nodes[p],
            ax.lo[p],
            ax.hi[p],
            float(np.prod(ax.lengths[p])),
            float(np.prod(ax.tau[p])),
        )

    def locate(self, j: int, x) -> Tile | None:
        """The level-``j`` tile containing ``x``; intervals are ``[lo, hi)`` except the last."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.n,):
            raise ValidationError(f"point must have {self.n} coordinates")
        ax = self.axis(j)
        p = ax.locate(x)
        if np.any(p < 0):
            return None
        return self.tile(j, position_to_alpha(p, ax.N))

    def locate_many(self, j: int, points) -> np.ndarray:
        """Flat tile numbers for ``(P, n)`` points (-1 outside ``Q_j``)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.n)
        p = self.axis(j).locate(pts)
        out = np.ravel_multi_index(tuple(np.maximum(p, 0).T), self.shape(j))
        return np.where(np.all(p >= 0, axis=1), out, -1)

    # -- subdivision -----------------------------------------------------------

    @cached_property
    def c4(self) -> float:
        """Subdivision constant: smallest ``2^j |I|`` over all built intervals."""
        return float(min(np.min(ax.lengths) * 2.0**ax.j for ax in self.axes))

    def axis_pieces(self, j: int) -> list[np.ndarray]:
        """Edges of the equal pieces splitting each 1-D interval of level ``j``.

        Interval ``I`` is cut into ``floor(2^j |I| / c4)`` pieces, so every
        piece has length in ``[c4 2^-j, 2 c4 2^-j)``.
        """
        ax = self.axis(j)
        counts = np.maximum(np.floor(ax.lengths * 2.0**j / self.c4 * (1 + 1e-12)), 1).astype(int)
        return [np.linspace(a, b, m + 1) for a, b, m in zip(ax.lo, ax.hi, counts)]

    def subcubes(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """``(lo, hi)`` arrays of shape ``(M, n)`` for the subdivided cube family of level ``j``."""
        edges = self.axis_pieces(j)
        lo1 = np.concatenate([e[:-1] for e in edges])
        hi1 = np.concatenate([e[1:] for e in edges])
        idx = np.indices((lo1.size,) * self.n).reshape(self.n, -1).T
        return lo1[idx], hi1[idx]

    # -- export ----------------------------------------------------------------

    def to_json_dict(self) -> dict:
        levels = []
        for ax in self.axes:
            levels.append(
                {
                    "j": ax.j,
                    "N": ax.N,
                    "half_width": ax.half_width,
                    "alpha": ax.alpha.tolist(),
                    "nodes": ax.nodes.tolist(),
                    "lo": ax.lo.tolist(),
                    "hi": ax.hi.tolist(),
                    "measure": ax.lengths.tolist(),
                    "tau": ax.tau.tolist(),
                }
            )
        return {
            "n": self.n,
            "delta_star": self.delta_star,
            "J": self.J,
            "product_structure": "tiles are products of the per-axis intervals",
            "levels": levels,
        }


def build_grid(n: int = 1, delta_star: float = DEFAULT_DELTA_STAR, J: int = 3, subdivide: bool = False) -> TileGrid:
    """Tile families ``E_0..E_J`` in dimension ``n``."""
    if n < 1:
        raise ValidationError("dimension must be positive")
    if J < 0:
        raise ValidationError("J must be nonnegative")
    _check_delta(delta_star)
    axes = tuple(build_axis_level(j, delta_star) for j in range(J + 1))
    return TileGrid(n, float(delta_star), axes, subdivide)


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class GeometryReport:
    """Measured containment constants per level and overall."""

    per_level: dict
    constants: dict
    lower_containment: bool
    stable_levels: tuple[int, ...]
    stability: dict
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "per_level": {str(j): v for j, v in self.per_level.items()},
            "constants": self.constants,
            "lower_containment": self.lower_containment,
            "stable_levels": list(self.stable_levels),
            "stability": self.stability,
            "verdict": "PASS" if self.passed else "FAIL",
        }


def verify_geometry(grid: TileGrid, stable_from: int = 2, factor: float = 2.0) -> GeometryReport:
    """Smallest constants for the tile containments at every built level.

    With ``r_-`` and ``r_+`` the distances from a node to the ends of its
    interval (all axes, so these are the n-D constants as well):

    * ``c0 = max 2^j r_+`` over tiles with ``|x_R|_inf <= (1+4 delta) 2^(j+1)``;
    * ``c1 = min 2^j min(r_-, r_+)`` and ``c2 = max 2^(j/3) max(r_-, r_+)``;
    * ``c3 = half_width / 2^j``, and ``Q(0, 2^j)`` inside ``Q_j`` is checked;
    * ``c4`` is the subdivision constant, with measured piece ratios.

    The verdict is PASS when the lower containment holds, every constant is
    finite and positive, and each lies within ``factor`` of itself across the
    levels ``j >= stable_from``.
    """
    per_level = {}
    lower_ok = True
    for ax in grid.axes:
        j = ax.j
        left = ax.nodes - ax.lo
        right = ax.hi - ax.nodes
        reach = np.maximum(left, right)
        near = np.abs(ax.nodes) <= (1 + 4 * grid.delta_star) * 2.0 ** (j + 1)
        pieces = grid.axis_pieces(j)
        sides = np.concatenate([np.diff(e) for e in pieces]) * 2.0**j / grid.c4
        lower = ax.half_width >= 2.0**j
        lower_ok &= bool(lower)
        per_level[j] = {
            "N": ax.N,
            "c0": float(np.max(reach[near]) * 2.0**j),
            "c1": float(np.min(np.minimum(left, right)) * 2.0**j),
            "c2": float(np.max(reach) * 2.0 ** (j / 3.0)),
            "c3": float(ax.half_width / 2.0**j),
            "c4_piece_min": float(np.min(sides)),
            "c4_piece_max": float(np.max(sides)),
            "partition_error": float(abs(np.sum(ax.lengths) - 2.0 * ax.half_width) / (2.0 * ax.half_width)),
            "lower_containment": bool(lower),
        }
    constants = {
        "c0": max(v["c0"] for v in per_level.values()),
        "c1": min(v["c1"] for v in per_level.values()),
        "c2": max(v["c2"] for v in per_level.values()),
        "c3": max(v["c3"] for v in per_level.values()),
        "c4": grid.c4,
    }
    levels = tuple(j for j in per_level if j >= stable_from)
    stability = {}
    for key in ("c0", "c1", "c2", "c3"):
        vals = [per_level[j][key] for j in levels]
        stability[key] = float(max(vals) / min(vals)) if vals else 1.0
    pieces_ok = all(1.0 - 1e-12 <= v["c4_piece_min"] and v["c4_piece_max"] < 2.0 for v in per_level.values())
    finite = all(math.isfinite(c) and c > 0 for c in constants.values())
    passed = lower_ok and finite and pieces_ok and all(r <= factor for r in stability.values())
    return GeometryReport(per_level, constants, lower_ok, levels, stability, passed)


__all__ = [
    "DEFAULT_DELTA_STAR",
    "AxisLevel",
    "GeometryReport",
    "Tile",
    "TileGrid",
    "alpha_to_position",
    "build_axis_level",
    "build_grid",
    "level_size",
    "position_to_alpha",
    "verify_geometry",
]
