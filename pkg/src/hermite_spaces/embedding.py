"""Lower-bound scans for weights and numerical probes of sequence-space embeddings.

A weight has the Hermite lower-bound property of order ``gamma`` when
``w(B(x, r)) >= C r^gamma`` for ``0 < r <= rho(x) = 1 / (1 + |x|_inf)``, or
equivalently ``w(R) >= C 2^(-j gamma)`` for every tile ``R`` of level ``j``.
Finite scans cannot prove asymptotics, so verdicts are three-valued and
compare the two deepest levels of the scan.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .frames import FrameSequence
from .norms import LOG2, SpaceParams, TileMasses, sequence_norm
from .tiles import TileGrid, position_to_alpha
from .weights import Weight

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
STABLE_FACTOR = 2.0
DECAY_FACTOR = 4.0
PER_LEVEL_CAP = 200
BALL_CENTER_CAP = 200_000


def verdict_from_log_minima(log_minima) -> str:
    """Verdict from the logs of the cumulative minima of the scan levels.

    PASS when the last level keeps the minimum within ``STABLE_FACTOR`` of
    the previous one, FAIL when it drops by ``DECAY_FACTOR`` or more.
    """
    m = [float(v) for v in log_minima]
    if len(m) < 2:
        return INCONCLUSIVE
    drop = m[-2] - m[-1]
    if math.isnan(drop):
        return FAIL if m[-1] == -math.inf else INCONCLUSIVE
    if drop <= math.log(STABLE_FACTOR):
        return PASS
    if drop >= math.log(DECAY_FACTOR):
        return FAIL
    return INCONCLUSIVE


def verdict_from_log_maxima(log_maxima) -> str:
    """Mirror of :func:`verdict_from_log_minima` for quantities that should stay bounded."""
    return verdict_from_log_minima([-v for v in log_maxima])


def _cumulative_min(values):
    out, cur = [], math.inf
    for v in values:
        cur = min(cur, v)
        out.append(cur)
    return out


@dataclass(frozen=True)
class EmbeddingParams:
    """Source ``(alpha2, p2, q2)``, target ``(alpha1, p1, q1)``, order ``gamma`` and scale ``b`` or ``f``."""

    source: SpaceParams
    target: SpaceParams
    gamma: float
    scale: str = "b"

    def __post_init__(self):
        errors = []
        if self.scale not in ("b", "f"):
            raise ValidationError(f"scale must be 'b' or 'f', got {self.scale!r}")
        kind = "besov" if self.scale == "b" else "triebel"
        object.__setattr__(self, "source", self.source.with_kind(kind))
        object.__setattr__(self, "target", self.target.with_kind(kind))
        g = float(self.gamma)
        if not (math.isfinite(g) and g > 0):
            raise ValidationError("gamma must be positive")
        object.__setattr__(self, "gamma", g)
        s, t = self.source, self.target
        lhs = t.alpha - g / t.p
        rhs = s.alpha - g / s.p
        if abs(lhs - rhs) > 1e-12 * max(1.0, abs(lhs), abs(rhs)):
            errors.append(f"need alpha1 - gamma/p1 = alpha2 - gamma/p2, got {lhs} vs {rhs}")
        if t.alpha > s.alpha + 1e-12 * max(1.0, abs(s.alpha)):
            errors.append("need alpha1 <= alpha2")
        if self.scale == "b":
            if s.q > t.q:
                errors.append("b-scale needs q2 <= q1")
            if s.p > t.p:
                errors.append("b-scale needs p2 <= p1")
        if errors:
            raise ValidationError("; ".join(errors))

    @classmethod
    def parse(cls, source: str, target: str, gamma: float, scale: str = "b") -> "EmbeddingParams":
        kind = "besov" if scale == "b" else "triebel"
        return cls(SpaceParams.parse(source, kind), SpaceParams.parse(target, kind), gamma, scale)

    @property
    def exponent(self) -> float:
        """``1/p1 - 1/p2`` (nonpositive for admissible parameters)."""
        return 1.0 / self.target.p - 1.0 / self.source.p

    def to_json_dict(self) -> dict:
        return {
            "source": self.source.to_json_dict(),
            "target": self.target.to_json_dict(),
            "gamma": self.gamma,
            "scale": self.scale,
        }


# ---------------------------------------------------------------------------
# lower bounds


@dataclass(frozen=True)
class LowerBoundReport:
    """Per-level minima of the lower-bound ratio, the cumulative minima and a witness."""

    form: str
    gamma: float
    per_level: dict
    cumulative: list
    minimum: float
    witness: dict
    verdict: str

    def to_json_dict(self) -> dict:
        return {
            "form": self.form,
            "gamma": self.gamma,
            "per_level": {str(k): v for k, v in self.per_level.items()},
            "cumulative_minimum": self.cumulative,
            "minimum": self.minimum,
            "witness": self.witness,
            "verdict": self.verdict,
        }


def lower_bound_tiles(w: Weight, grid: TileGrid, gamma: float, J: int | None = None, masses: TileMasses | None = None) -> LowerBoundReport:
    """Exact scan of ``w(R) 2^(j gamma)`` over every tile of levels ``0..J``."""
    J = grid.J if J is None else J
    if not 0 <= J <= grid.J:
        raise ValidationError(f"scan depth {J} outside the grid levels 0..{grid.J}")
    masses = TileMasses(w, grid) if masses is None else masses
    per_level, log_level, wit = {}, {}, {}
    for j in range(J + 1):
        logs = masses.log_mass(j) + j * gamma * LOG2
        i = int(np.argmin(logs))
        log_level[j] = float(logs[i])
        per_level[j] = float(np.exp(logs[i]))
        tile = grid.tile(j, position_to_alpha(np.array(np.unravel_index(i, grid.shape(j))), grid.axis(j).N))
        wit[j] = {
            "level": j,
            "alpha": list(tile.alpha),
            "node": np.asarray(tile.node).tolist(),
            "log_ratio": float(logs[i]),
            "ratio": per_level[j],
        }
    cum = _cumulative_min(log_level.values())
    jmin = min(log_level, key=lambda k: log_level[k])
    return LowerBoundReport("tiles", gamma, per_level, np.exp(cum).tolist(), per_level[jmin], wit[jmin], verdict_from_log_minima(cum))


def lower_bound_balls(w: Weight, gamma: float, grid: TileGrid, J: int | None = None, radii: int | None = None) -> LowerBoundReport:
    """Sampled ``w(B(x, r)) / r^gamma`` for ``0 < r <= rho(x)``.

    Depth ``d`` uses centers on the lattice ``2^-d Z^n`` inside ``Q_d`` (the
    level-``d`` tile cube, so the scan depth matches :func:`lower_bound_tiles`)
    and radii ``rho(x) 2^-k`` for ``k = 0..2d`` (``radii`` overrides the count).
    Balls are taken in the sup norm, i.e. cubes ``Q(x, r)``; in one dimension
    they are the usual intervals.
    """
    J = grid.J if J is None else J
    if not 0 <= J <= grid.J:
        raise ValidationError(f"scan depth {J} outside the grid levels 0..{grid.J}")
    n = grid.n
    per_level, log_level, wit = {}, {}, {}
    for d in range(J + 1):
        X = grid.half_width(d)
        step = 2.0**-d
        m1 = int(math.floor(X / step))
        while (2 * m1 + 1) ** n > BALL_CENTER_CAP:
            step *= 2.0
            m1 = int(math.floor(X / step))
        axis = step * np.arange(-m1, m1 + 1)
        centers = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
        rho = 1.0 / (1.0 + np.max(np.abs(centers), axis=1))
        ks = range(2 * d + 1) if radii is None else range(radii)
        best, arg = math.inf, None
        for k in ks:
            r = rho * 2.0**-k
            logs = w.log_mass_boxes(centers - r[:, None], centers + r[:, None]) - gamma * np.log(r)
            i = int(np.argmin(logs))
            if logs[i] < best:
                best, arg = float(logs[i]), (centers[i].tolist(), float(r[i]))
        per_level[d] = math.exp(best)
        log_level[d] = best
        wit[d] = {"level": d, "center": arg[0], "radius": arg[1], "log_ratio": best, "ratio": per_level[d]}
    cum = _cumulative_min(log_level.values())
    dmin = min(log_level, key=lambda k: log_level[k])
    return LowerBoundReport("balls", gamma, per_level, np.exp(cum).tolist(), per_level[dmin], wit[dmin], verdict_from_log_minima(cum))


# ---------------------------------------------------------------------------
# embedding probes


@dataclass(frozen=True)
class NecessityReport:
    per_level: dict  # max singleton ratio per level
    log_per_level: dict
    maximum: float
    witness: dict
    verdict: str

    def to_json_dict(self) -> dict:
        return {
            "per_level": {str(k): v for k, v in self.per_level.items()},
            "log_per_level": {str(k): v for k, v in self.log_per_level.items()},
            "maximum": self.maximum,
            "witness": self.witness,
            "verdict": self.verdict,
        }


def singleton_log_ratios(params: EmbeddingParams, masses: TileMasses, j: int) -> np.ndarray:
    """``log`` of target over source norm of every unit sequence at level ``j``.

    Equals ``(1/p1 - 1/p2) log(w(R) 2^(j gamma))``.
    """
    s, t = params.source, params.target
    lw = masses.log_mass(j)
    a = 0.0 if math.isinf(t.p) else 1.0 / t.p
    b = 0.0 if math.isinf(s.p) else 1.0 / s.p
    with np.errstate(invalid="ignore"):
        return j * (t.alpha - s.alpha) * LOG2 + (a - b) * lw


def necessity_probe(params: EmbeddingParams, w: Weight, grid: TileGrid, J: int | None = None, masses: TileMasses | None = None) -> NecessityReport:
    """Max over tiles of the embedding ratio on unit sequences, level by level."""
    J = grid.J if J is None else J
    masses = TileMasses(w, grid) if masses is None else masses
    per, logs_out, wit = {}, {}, {}
    for j in range(J + 1):
        logs = singleton_log_ratios(params, masses, j)
        i = int(np.argmax(logs))
        logs_out[j] = float(logs[i])
        with np.errstate(over="ignore"):
            per[j] = float(np.exp(logs[i]))
        alpha = position_to_alpha(np.array(np.unravel_index(i, grid.shape(j))), grid.axis(j).N)
        wit[j] = {"level": j, "alpha": np.atleast_1d(alpha).tolist(), "log_ratio": logs_out[j]}
    cummax = [-v for v in _cumulative_min(-v for v in logs_out.values())]
    jmax = max(logs_out, key=lambda k: logs_out[k])
    verdict = verdict_from_log_maxima(cummax)
    return NecessityReport(per, logs_out, per[jmax], wit[jmax], verdict)


def random_sequence(rng: np.random.Generator, grid: TileGrid, J: int, cap: int = PER_LEVEL_CAP) -> FrameSequence:
    """Sparse sequence: per level a uniform random support of random size, log-normal magnitudes, random signs."""
    levels = {}
    for j in range(J + 1):
        size = grid.tile_count(j)
        k = int(rng.integers(0, min(cap, size) + 1))
        arr = np.zeros(size)
        if k:
            idx = rng.choice(size, size=k, replace=False)
            arr[idx] = rng.lognormal(0.0, 1.0, k) * rng.choice((-1.0, 1.0), k)
        levels[j] = arr
    if not any(np.any(a) for a in levels.values()):
        j = int(rng.integers(0, J + 1))
        levels[j][int(rng.integers(0, levels[j].size))] = rng.lognormal(0.0, 1.0)
    return FrameSequence(grid.n, J, levels, grid.delta_star)


@dataclass(frozen=True)
class SufficiencyReport:
    trials: int
    maximum: float
    ratios: np.ndarray = field(repr=False)
    histogram: dict = field(repr=False)

    def to_json_dict(self) -> dict:
        r = self.ratios
        return {
            "trials": self.trials,
            "empirical_constant": self.maximum,
            "quantiles": {str(q): float(np.quantile(r, q)) for q in (0.0, 0.25, 0.5, 0.75, 1.0)},
            "histogram": self.histogram,
        }


def sufficiency_probe(
    params: EmbeddingParams,
    w: Weight,
    grid: TileGrid,
    trials: int,
    seed: int = 0,
    J: int | None = None,
    masses: TileMasses | None = None,
    cap: int = PER_LEVEL_CAP,
    bins: int = 20,
) -> SufficiencyReport:
    """Target over source sequence norms on ``trials`` random sparse sequences.

    Trial ``t`` draws from its own generator spawned from ``seed``, so the
    ratios do not depend on evaluation order.
    """
    if trials < 1:
        raise ValidationError("trials must be positive")
    J = grid.J if J is None else J
    masses = TileMasses(w, grid) if masses is None else masses
    children = np.random.SeedSequence(seed).spawn(trials)
    ratios = np.empty(trials)
    for t, child in enumerate(children):
        s = random_sequence(np.random.default_rng(child), grid, J, cap)
        num = sequence_norm(s, params.target, w, grid, masses).value
        den = sequence_norm(s, params.source, w, grid, masses).value
        ratios[t] = num / den
    counts, edges = np.histogram(np.log10(ratios), bins=bins)
    hist = {"log10_edges": edges.tolist(), "counts": counts.tolist()}
    return SufficiencyReport(trials, float(np.max(ratios)), ratios, hist)


__all__ = [
    "DECAY_FACTOR",
    "FAIL",
    "INCONCLUSIVE",
    "PASS",
    "PER_LEVEL_CAP",
    "STABLE_FACTOR",
    "EmbeddingParams",
    "LowerBoundReport",
    "NecessityReport",
    "SufficiencyReport",
    "lower_bound_balls",
    "lower_bound_tiles",
    "necessity_probe",
    "random_sequence",
    "singleton_log_ratios",
    "sufficiency_probe",
    "verdict_from_log_maxima",
    "verdict_from_log_minima",
]
