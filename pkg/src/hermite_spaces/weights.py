"""Weights, critical-radius geometry, the ``A_p^eta`` certificate and the maximal operator.

Weight families
---------------
``constant``  ``w = c``
``power``     ``w = |x|^eps`` (Euclidean norm), ``eps > -n``
``gaussian``  ``w = exp(eps |x|^2)`` with signed ``eps``
``table``     1-D piecewise-linear interpolation of tabulated values,
              extended by the edge values outside the table.

Masses are returned in log form as well (``log_mass_boxes``) so that
Gaussian weights far from the origin do not underflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.interpolate import RegularGridInterpolator

from .errors import ConstraintError, QuadratureError, ValidationError

FAMILIES = ("constant", "power", "gaussian", "table")


# ---------------------------------------------------------------------------
# critical radius and cubes


def critical_radius(x) -> np.ndarray:
    """``rho(x) = 1 / (1 + |x|_inf)``; ``x`` has shape ``(..., n)`` or is a scalar."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return 1.0 / (1.0 + abs(float(x)))
    return 1.0 / (1.0 + np.max(np.abs(x), axis=-1))


@dataclass(frozen=True)
class CubeSpec:
    """Cube ``Q(center, r) = {y : |y - center|_inf < r}`` with side ``2r``."""

    center: tuple[float, ...]
    r: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        if not all(math.isfinite(v) for v in c):
            raise ValidationError("cube center must be finite")
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValidationError("cube half-side must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "r", float(self.r))

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def side(self) -> float:
        return 2.0 * self.r

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - self.r

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + self.r

    def to_json_dict(self) -> dict:
        return {"center": list(self.center), "r": self.r}


def psi_factor(Q: CubeSpec, theta: float) -> float:
    """``Psi_theta(Q) = (1 + l(Q) / rho(x_Q))^theta``."""
    if theta < 0:
        raise ValidationError("theta must be nonnegative")
    return (1.0 + Q.side / critical_radius(np.asarray(Q.center))) ** theta


def _log_psi(center: np.ndarray, side: np.ndarray, theta: float) -> np.ndarray:
    rho = critical_radius(center)
    return theta * np.log1p(side / rho)


def slow_growth_fit(n: int = 1, pairs: int = 10_000, seed: int = 0, scale: float = 50.0, kappas=range(1, 11)):
    """Fit ``(C, kappa)`` in ``rho(y) <= C rho(x) (1 + |x-y|/rho(x))^(kappa/(kappa+1))``.

    ``C(kappa)`` is the sampled maximum of the ratio for each ``kappa``;
    the reported ``kappa`` is the smallest one whose constant is within 1.5
    times the best constant found.  Returns ``(C, kappa, table)``.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-scale, scale, (pairs, n)) * rng.uniform(0, 1, (pairs, 1)) ** 2
    y = rng.uniform(-scale, scale, (pairs, n)) * rng.uniform(0, 1, (pairs, 1)) ** 2
    rx, ry = critical_radius(x), critical_radius(y)
    d = np.linalg.norm(x - y, axis=1)
    table = {}
    for k in kappas:
        table[int(k)] = float(np.max(ry / (rx * (1.0 + d / rx) ** (k / (k + 1.0)))))
    best = min(table.values())
    kappa = min(k for k, c in table.items() if c <= 1.5 * best)
    return table[kappa], kappa, table


# ---------------------------------------------------------------------------
# 1-D log-integrals used by the closed-form masses


def _logdiff(la, lb):
    """``log(exp(la) - exp(lb))`` for ``la >= lb``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = la + np.log1p(-np.exp(lb - la))
    return np.where(la == lb, -np.inf, out)


def _log_erfc(z):
    # log erfc(z) = log 2 + log Phi(-z sqrt 2)
    return math.log(2.0) + special.log_ndtr(-np.sqrt(2.0) * z)


def _log_G(z):
    # G(z) = exp(z^2) D(z) = (sqrt(pi)/2) erfi(z), for z >= 0
    with np.errstate(divide="ignore"):
        return z * z + np.log(special.dawsn(z))


def _log_interval_signed(a, b, half_log):
    """Log of an integral of an even density over ``[a, b]`` given ``half_log(a, b)`` for ``0 <= a < b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.full(np.broadcast(a, b).shape, -np.inf)
    a, b = np.broadcast_arrays(a, b)
    pos = a >= 0
    neg = b <= 0
    mid = ~pos & ~neg
    if np.any(pos):
        out[pos] = half_log(a[pos], b[pos])
    if np.any(neg):
        out[neg] = half_log(-b[neg], -a[neg])
    if np.any(mid):
        zero = np.zeros(int(mid.sum()))
        out[mid] = np.logaddexp(half_log(zero, b[mid]), half_log(zero, -a[mid]))
    return out


def _gauss_half(eps):
    def half(a, b):
        if eps == 0:
            with np.errstate(divide="ignore"):
                return np.log(b - a)
        beta = math.sqrt(abs(eps))
        if eps < 0:
            c = 0.5 * math.log(math.pi) - math.log(2 * beta)
            return c + _logdiff(_log_erfc(beta * a), _log_erfc(beta * b))
        return -math.log(beta) + _logdiff(_log_G(beta * b), _log_G(beta * a))

    return half


def _power_half(eps):
    e1 = eps + 1.0

    def half(a, b):
        with np.errstate(divide="ignore", invalid="ignore"):
            loga = np.log(a)
            logb = np.log(b)
            if e1 > 0:
                return _logdiff(e1 * logb, np.where(a > 0, e1 * loga, -np.inf)) - math.log(e1)
            if e1 == 0:
                return np.where(a > 0, np.log(logb - loga), np.inf)
            # not integrable at the origin
            out = _logdiff(e1 * loga, e1 * logb) - math.log(-e1)
            return np.where(a > 0, out, np.inf)

    return half


# ---------------------------------------------------------------------------
# weights


def _gl(m: int):
    return _gl_cached(int(m))


@lru_cache(maxsize=None)
def _gl_cached(m: int):
    return np.polynomial.legendre.leggauss(m)


@dataclass(frozen=True)
class Weight:
    """A weight ``w >= 0`` on ``R^n``.

    Parameters
    ----------
    family : {"constant", "power", "gaussian", "table"}
    params : tuple of (name, value)
        ``c`` for constant, ``eps`` for power and gaussian, ``x`` and ``w``
        (tuples) for table.  ``exponent`` raises the tabulated weight to a
        power; it is produced by :meth:`power` and defaults to 1.
    r_w : float, optional
        Declared critical integrability index (metadata only).
    """

    family: str
    params: tuple = ()
    r_w: float | None = field(default=None, compare=False)
    # set for derived weights such as w^(1-p') that may fail local integrability
    internal: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown weight family {self.family!r}")
        p = dict(self.params)
        allowed = {
            "constant": {"c"},
            "power": {"eps"},
            "gaussian": {"eps"},
            "table": {"x", "w", "exponent"},
        }[self.family]
        if set(p) - allowed:
            raise ValidationError(f"{self.family} weight: unknown parameters {sorted(set(p) - allowed)}")
        if self.family == "constant":
            c = float(p.get("c", 1.0))
            if not (math.isfinite(c) and c > 0):
                raise ValidationError("constant weight must be positive")
            p = {"c": c}
        elif self.family in ("power", "gaussian"):
            if "eps" not in p:
                raise ValidationError(f"{self.family} weight needs 'eps'")
            eps = float(p["eps"])
            if not math.isfinite(eps):
                raise ValidationError("eps must be finite")
            if self.family == "power" and eps <= -1.0 and not self.internal:
                # eps > -1 keeps the weight locally integrable in every dimension
                raise ValidationError(f"power weight needs eps > -n, got {eps}")
            p = {"eps": eps}
        else:
            xs = tuple(float(v) for v in p.get("x", ()))
            ws = tuple(float(v) for v in p.get("w", ()))
            if len(xs) < 2 or len(xs) != len(ws):
                raise ValidationError("table weight needs matching 'x' and 'w' with at least two points")
            if not np.all(np.diff(xs) > 0):
                raise ValidationError("table abscissae must be strictly increasing")
            if not all(math.isfinite(v) and v >= 0 for v in ws) or not all(math.isfinite(v) for v in xs):
                raise ValidationError("table values must be finite and nonnegative")
            p = {"x": xs, "w": ws, "exponent": float(p.get("exponent", 1.0))}
        object.__setattr__(self, "params", tuple(sorted(p.items())))

    # -- construction --------------------------------------------------------

    @classmethod
    def constant(cls, c: float = 1.0) -> "Weight":
        return cls("constant", (("c", c),))

    @classmethod
    def power_law(cls, eps: float) -> "Weight":
        return cls("power", (("eps", eps),))

    @classmethod
    def gaussian(cls, eps: float) -> "Weight":
        return cls("gaussian", (("eps", eps),))

    @classmethod
    def table(cls, x, w) -> "Weight":
        return cls("table", (("x", tuple(x)), ("w", tuple(w))))

    def param(self, name):
        return dict(self.params)[name]

    def power(self, t: float) -> "Weight":
        """The weight ``w^t``."""
        if self.family == "constant":
            return Weight.constant(self.param("c") ** t)
        if self.family in ("power", "gaussian"):
            return Weight(self.family, (("eps", self.param("eps") * t),), internal=True)
        p = dict(self.params)
        return Weight("table", (("x", p["x"]), ("w", p["w"]), ("exponent", p["exponent"] * t)))

    # -- evaluation ------------------------------------------------------------

    def _check_dim(self, n: int):
        if self.family == "power" and self.param("eps") <= -n and not self.internal:
            raise ValidationError(f"power weight needs eps > -n = {-n}")
        if self.family == "table" and n != 1:
            raise ValidationError("table weights are one-dimensional")

    def log_value(self, points, n: int = 1) -> np.ndarray:
        """``log w`` at ``(P, n)`` points (plain arrays allowed for n == 1)."""
        self._check_dim(n)
        x = np.asarray(points, dtype=float)
        if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        r2 = np.sum(x * x, axis=-1)
        with np.errstate(divide="ignore"):
            if self.family == "constant":
                return np.full(r2.shape, math.log(self.param("c")))
            if self.family == "power":
                return 0.5 * self.param("eps") * np.log(r2)
            if self.family == "gaussian":
                return self.param("eps") * r2
            p = dict(self.params)
            v = np.interp(x[..., 0], p["x"], p["w"])
            return p["exponent"] * np.log(v)

    def __call__(self, points, n: int = 1) -> np.ndarray:
        return np.exp(self.log_value(points, n))

    # -- masses ----------------------------------------------------------------

    def log_mass_boxes(self, lo, hi) -> np.ndarray:
        """``log w(box)`` for boxes given as ``(M, n)`` corner arrays."""
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValidationError("boxes need matching corners with hi >= lo")
        n = lo.shape[1]
        self._check_dim(n)
        if self.family == "constant":
            with np.errstate(divide="ignore"):
                return math.log(self.param("c")) + np.sum(np.log(hi - lo), axis=1)
        if self.family == "gaussian":
            half = _gauss_half(self.param("eps"))
            return sum(_log_interval_signed(lo[:, d], hi[:, d], half) for d in range(n))
        if self.family == "power" and n == 1:
            return _log_interval_signed(lo[:, 0], hi[:, 0], _power_half(self.param("eps")))
        if self.family == "table":
            return self._table_log_mass(lo[:, 0], hi[:, 0])
        with np.errstate(divide="ignore"):
            return np.log(np.array([self._power_box_nd(a, b) for a, b in zip(lo, hi)]))


    def mass_boxes(self, lo, hi) -> np.ndarray:
        return np.exp(self.log_mass_boxes(lo, hi))

    def mass(self, region) -> float:
        """``w(E)`` for a :class:`CubeSpec`, :class:`Ball`, tile or ``(lo, hi)`` pair."""
        if isinstance(region, Ball):
            return self.ball_mass(region)
        if isinstance(region, CubeSpec):
            lo, hi = region.lo, region.hi
        elif hasattr(region, "lo") and hasattr(region, "hi"):
            lo, hi = region.lo, region.hi
        else:
            lo, hi = region
        return float(self.mass_boxes(np.atleast_1d(lo)[None, :], np.atleast_1d(hi)[None, :])[0])

    def _table_log_mass(self, a, b):
        p = dict(self.params)
        if p["exponent"] == 1.0:
            xs, ws = np.asarray(p["x"]), np.asarray(p["w"])
            h = np.diff(xs)
            cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (ws[:-1] + ws[1:]))))

            def W(t):
                i = np.clip(np.searchsorted(xs, t, side="right") - 1, 0, len(xs) - 2)
                s = np.clip(t - xs[i], 0.0, h[i])
                slope = (ws[i + 1] - ws[i]) / h[i]
                inside = cum[i] + ws[i] * s + 0.5 * slope * s * s
                below = ws[0] * np.minimum(t - xs[0], 0.0)
                above = ws[-1] * np.maximum(t - xs[-1], 0.0)
                return inside + below + above

            with np.errstate(divide="ignore"):
                return np.log(np.maximum(W(b) - W(a), 0.0))
        out = np.array([self._gl_pieces(ai, bi) for ai, bi in zip(a, b)])
        with np.errstate(divide="ignore"):
            return np.log(out)

    def _gl_pieces(self, a: float, b: float, order: int = 24) -> float:
        """Gauss-Legendre over the pieces between table nodes inside ``[a, b]``."""
        xs = np.asarray(self.param("x"))
        cuts = np.unique(np.concatenate(([a, b], xs[(xs > a) & (xs < b)])))
        t, wt = _gl(order)
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            pts = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
            total += 0.5 * (hi - lo) * float(np.sum(wt * self(pts)))
        return total

    def _power_box_nd(self, a, b) -> float:
        eps = self.param("eps")
        if np.any(b - a == 0):
            return 0.0
        if eps <= -len(a) and np.all((a <= 0) & (b >= 0)):
            return math.inf

        def f(*xs):
            return math.sqrt(sum(v * v for v in xs)) ** eps if any(xs) else (0.0 if eps > 0 else math.inf)

        # split at the coordinate planes through the origin so the singularity sits at a corner
        cuts = [np.unique(np.clip([ai, 0.0, bi], ai, bi)) for ai, bi in zip(a, b)]
        total = 0.0
        for box in np.array(np.meshgrid(*[range(len(c) - 1) for c in cuts], indexing="ij")).reshape(len(a), -1).T:
            ranges = [(cuts[d][k], cuts[d][k + 1]) for d, k in enumerate(box)]
            if any(r[1] <= r[0] for r in ranges):
                continue
            val, err = integrate.nquad(f, ranges, opts={"epsrel": 1e-10, "epsabs": 0.0, "limit": 200})
            if not math.isfinite(val) or err > 1e-8 * max(abs(val), 1e-300):
                raise QuadratureError(f"power-weight mass did not converge on {ranges}")
            total += val
        return total

    def ball_mass(self, ball: "Ball") -> float:
        n = ball.n
        self._check_dim(n)
        c = np.asarray(ball.center)
        if n == 1:
            return self.mass((c - ball.r, c + ball.r))
        if self.family == "constant":
            return self.param("c") * math.pi ** (n / 2) / math.gamma(n / 2 + 1) * ball.r**n
        if n != 2:
            raise ValidationError("non-constant ball masses are implemented for n <= 2")

        def f(theta, rho):
            pt = c + rho * np.array([math.cos(theta), math.sin(theta)])
            return float(self(pt[None, :], 2)[0]) * rho

        val, err = integrate.dblquad(f, 0.0, ball.r, 0.0, 2 * math.pi, epsrel=1e-10, epsabs=0.0)
        if err > 1e-8 * max(abs(val), 1e-300):
            raise QuadratureError("ball mass did not converge")
        return val

    # -- pointwise bounds -------------------------------------------------------

    def log_essinf_boxes(self, lo, hi) -> np.ndarray:
        """``log ess inf_box w`` for ``(M, n)`` boxes."""
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        n = lo.shape[1]
        self._check_dim(n)
        near = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
        far = np.maximum(np.abs(lo), np.abs(hi))
        rmin2, rmax2 = np.sum(near**2, axis=1), np.sum(far**2, axis=1)
        with np.errstate(divide="ignore"):
            if self.family == "constant":
                return np.full(lo.shape[0], math.log(self.param("c")))
            eps = self.param("eps") if self.family != "table" else None
            if self.family == "power":
                return 0.5 * eps * np.log(rmin2 if eps > 0 else rmax2)
            if self.family == "gaussian":
                return eps * (rmin2 if eps > 0 else rmax2)
            xs = np.asarray(self.param("x"))
            out = np.empty(lo.shape[0])
            for i, (a, b) in enumerate(zip(lo[:, 0], hi[:, 0])):
                pts = np.concatenate(([a, b], xs[(xs > a) & (xs < b)]))
                out[i] = np.min(self.log_value(pts))
            return out

    # -- serialization -----------------------------------------------------------

    def to_json_dict(self) -> dict:
        params = {}
        for k, v in self.params:
            if self.family == "table" and k == "exponent" and v == 1.0:
                continue
            params[k] = list(v) if isinstance(v, tuple) else v
        out = {"family": self.family, "params": params}
        if self.r_w is not None:
            out["r_w"] = self.r_w
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "Weight":
        if not isinstance(data, dict) or "family" not in data:
            raise ValidationError("weight JSON needs a 'family'")
        extra = set(data) - {"family", "params", "r_w"}
        if extra:
            raise ValidationError(f"weight JSON: unknown fields {sorted(extra)}")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ValidationError("weight JSON: 'params' must be an object")
        items = tuple((k, tuple(v) if isinstance(v, list) else v) for k, v in params.items())
        r_w = data.get("r_w")
        if r_w is not None and not (isinstance(r_w, (int, float)) and r_w >= 1):
            raise ValidationError("r_w must be a number >= 1")
        return cls(data["family"], items, None if r_w is None else float(r_w))


def _box_quad(fn, lo, hi, order: int = 32) -> float:
    t, wt = _gl(order)
    grids = [0.5 * (b - a) * t + 0.5 * (b + a) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1)
    W = wt
    for _ in range(len(lo) - 1):
        W = np.multiply.outer(W, wt)
    return float(np.sum(W * fn(mesh)) * np.prod(0.5 * (np.asarray(hi) - np.asarray(lo))))


@dataclass(frozen=True)
class Ball:
    """Euclidean ball ``B(center, r)``."""

    center: tuple[float, ...]
    r: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.atleast_1d(self.center)))
        if not self.r > 0:
            raise ValidationError("ball radius must be positive")

    @property
    def n(self) -> int:
        return len(self.center)


# ---------------------------------------------------------------------------
# A_p^eta certificate


@dataclass(frozen=True)
class AhpReport:
    p: float
    eta: float
    max_ratio: float
    log_max_ratio: float
    argmax: CubeSpec | None
    counterexample: bool
    per_scale: dict  # log of the maximal ratio per half-side exponent k
    cubes: int

    def to_json_dict(self) -> dict:
        return {
            "p": self.p,
            "eta": self.eta,
            "max_ratio": self.max_ratio,
            "log_max_ratio": self.log_max_ratio,
            "argmax": None if self.argmax is None else self.argmax.to_json_dict(),
            "counterexample": self.counterexample,
            "log_per_scale": {str(k): v for k, v in self.per_scale.items()},
            "cubes": self.cubes,
        }


def sample_cubes(n: int, m: int, M: int, reach: float | None = None):
    """Cube family of the certificate: half-sides ``2^k`` (``-m <= k <= M``), centers on ``2^k Z^n``.

    Centers are kept with ``|c|_inf <= reach`` (default ``2^(M+1)``).
    Yields ``(k, centers, r)``.
    """
    reach = 2.0 ** (M + 1) if reach is None else reach
    for k in range(-m, M + 1):
        r = 2.0**k
        m1 = int(math.floor(reach / r))
        axis = r * np.arange(-m1, m1 + 1)
        centers = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
        yield k, centers, r


def ahp_certificate(w: Weight, p: float, eta: float, n: int = 1, m: int = 6, M: int = 4, reach=None) -> AhpReport:
    """Sampled maximum of ``(avg w)^(1/p) (avg w^(1-p'))^(1/p') / Psi_eta(Q)``.

    For ``p = 1`` the ratio is ``avg_Q w / (Psi_eta(Q) ess inf_Q w)``.  A cube
    where ``w^(1-p')`` is not integrable, or ``ess inf w = 0`` while the
    average is positive, is reported as a counterexample (ratio ``inf``).
    The result is numerical evidence, never a proof.
    """
    if p < 1:
        raise ValidationError("p must be >= 1")
    if eta < 0:
        raise ValidationError("eta must be nonnegative")
    w._check_dim(n)
    dual = None if p == 1 else w.power(1.0 - p / (p - 1.0))
    best, arg, counter, per_scale, count = -np.inf, None, False, {}, 0
    for k, centers, r in sample_cubes(n, m, M, reach):
        lo, hi = centers - r, centers + r
        log_vol = n * math.log(2 * r)
        la = w.log_mass_boxes(lo, hi) - log_vol
        if p == 1:
            lb = -w.log_essinf_boxes(lo, hi)
            lr = la + lb
        else:
            lb = dual.log_mass_boxes(lo, hi) - log_vol
            lr = la / p + lb * (1.0 - 1.0 / p)
        with np.errstate(invalid="ignore"):
            lr = lr - _log_psi(centers, np.full(len(centers), 2 * r), eta)
        lr = np.where(np.isnan(lr), np.inf, lr)
        counter = counter or bool(np.any(np.isinf(lr) & (lr > 0)))
        i = int(np.argmax(lr))
        per_scale[k] = float(lr[i])
        count += len(centers)
        if lr[i] > best:
            best, arg = lr[i], CubeSpec(tuple(centers[i]), r)
    with np.errstate(over="ignore"):
        ratio = float(np.exp(best))
    return AhpReport(float(p), float(eta), ratio, float(best), arg, counter, per_scale, count)


def estimate_r_w(w: Weight, eta: float, n: int = 1, ps=(1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0), m=4, M=3, factor=2.0):
    """Smallest sampled ``p`` whose certificate is finite and stable between the two coarsest-to-finest scan depths.

    Only a heuristic: ``r_w`` cannot be certified from samples.
    """
    for p in ps:
        a = ahp_certificate(w, p, eta, n, m=m, M=M)
        b = ahp_certificate(w, p, eta, n, m=m + 1, M=M + 1)
        if not a.counterexample and math.isfinite(b.max_ratio) and b.max_ratio <= factor * a.max_ratio:
            return p
    return None


# ---------------------------------------------------------------------------
# grid functions and the maximal operator


@dataclass(frozen=True)
class GridFunction:
    """Function that is constant on the cells of a rectilinear grid and zero outside.

    ``edges`` holds one increasing edge array per axis, ``values`` has shape
    ``(len(e0) - 1, len(e1) - 1, ...)``.
    """

    edges: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        vals = np.asarray(self.values)
        if vals.shape != tuple(len(e) - 1 for e in edges):
            raise ValidationError("grid values do not match the cell layout")
        if any(np.any(np.diff(e) <= 0) for e in edges):
            raise ValidationError("grid edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.edges)

    @property
    def centers(self) -> np.ndarray:
        mids = [0.5 * (e[:-1] + e[1:]) for e in self.edges]
        return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, self.n)

    @property
    def cell_bounds(self):
        lo = [e[:-1] for e in self.edges]
        hi = [e[1:] for e in self.edges]
        mesh = lambda arrs: np.stack(np.meshgrid(*arrs, indexing="ij"), axis=-1).reshape(-1, self.n)
        return mesh(lo), mesh(hi)

    def cumulative(self, s: float) -> RegularGridInterpolator:
        """Multilinear interpolant of ``x -> int_{(-inf, x]} |f|^s``, exact for cellwise-constant ``f``."""
        return _cumulative(self, float(s))

    def cube_averages(self, s: float, lo: np.ndarray, hi: np.ndarray, F=None) -> np.ndarray:
        """``avg_Q |f|^s`` over boxes ``(M, n)``; zero extension outside the grid."""
        F = self.cumulative(s) if F is None else F
        n = self.n
        total = np.zeros(lo.shape[0])
        for corner in range(2**n):
            bits = [(corner >> d) & 1 for d in range(n)]
            pt = np.stack([np.clip(hi[:, d] if b else lo[:, d], self.edges[d][0], self.edges[d][-1]) for d, b in enumerate(bits)], axis=1)
            sign = (-1) ** (n - sum(bits))
            total += sign * F(pt)
        return np.maximum(total, 0.0) / np.prod(hi - lo, axis=1)


def _cumulative(g: GridFunction, s: float) -> RegularGridInterpolator:
    cells = np.abs(g.values) ** s
    for d, e in enumerate(g.edges):
        shape = [1] * g.n
        shape[d] = -1
        cells = cells * np.diff(e).reshape(shape)
    C = cells
    for d in range(g.n):
        C = np.cumsum(C, axis=d)
        pad = [(0, 0)] * g.n
        pad[d] = (1, 0)
        C = np.pad(C, pad)
    return RegularGridInterpolator(g.edges, C, method="linear")


def dyadic_cube_family(x: np.ndarray, r_min: float, levels: int):
    """Closed cubes containing ``x``: half-sides ``r = r_min 2^k`` and centers on ``(r/2) Z^n``.

    Returns ``(centers, r)`` arrays for a single point ``x``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    centers, radii = [], []
    for k in range(levels + 1):
        r = r_min * 2.0**k
        step = 0.5 * r
        lo = np.ceil((x - r) / step - 1e-12)
        hi = np.floor((x + r) / step + 1e-12)
        axes = [step * np.arange(a, b + 1) for a, b in zip(lo, hi)]
        c = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        centers.append(c)
        radii.append(np.full(len(c), r))
    return np.concatenate(centers), np.concatenate(radii)


def maximal(f: GridFunction, s: float, theta: float, x, cubes=None, r_min: float | None = None, levels: int | None = None, include_cells: bool = True):
    """Discrete ``M_s^theta f(x)`` over a declared finite family of closed cubes containing ``x``.

    Parameters
    ----------
    cubes : list of CubeSpec, optional
        Explicit candidate family; cubes not containing ``x`` are ignored.
        When omitted the dyadic lattice family of :func:`dyadic_cube_family`
        is used (plus the grid cell containing ``x`` when ``include_cells``).

    The result is a lower bound for the supremum over all cubes.
    """
    if not s > 0:
        raise ValidationError("s must be positive")
    if theta < 0:
        raise ValidationError("theta must be nonnegative")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != f.n:
        x = x.reshape(-1, f.n)
    out = np.empty(x.shape[0])
    if r_min is None:
        r_min = 0.5 * min(float(np.min(np.diff(e))) for e in f.edges)
    if levels is None:
        span = max(float(e[-1] - e[0]) for e in f.edges)
        levels = max(1, int(math.ceil(math.log2(span / r_min))) + 1)
    F = f.cumulative(s)
    for i, xi in enumerate(x):
        if cubes is not None:
            c = np.array([q.center for q in cubes], dtype=float).reshape(-1, f.n)
            r = np.array([q.r for q in cubes], dtype=float)
            keep = np.all(np.abs(c - xi) <= r[:, None], axis=1)
            c, r = c[keep], r[keep]
            lo, hi = c - r[:, None], c + r[:, None]
        else:
            c, r = dyadic_cube_family(xi, r_min, levels)
            lo, hi = c - r[:, None], c + r[:, None]
            if include_cells:
                idx = [int(np.clip(np.searchsorted(e, v, side="right") - 1, 0, len(e) - 2)) for e, v in zip(f.edges, xi)]
                clo = np.array([e[k] for e, k in zip(f.edges, idx)])
                chi = np.array([e[k + 1] for e, k in zip(f.edges, idx)])
                if np.allclose(chi - clo, (chi - clo)[0]) and np.all((xi >= clo) & (xi <= chi)):
                    lo = np.vstack([lo, clo])
                    hi = np.vstack([hi, chi])
        if lo.shape[0] == 0:
            out[i] = 0.0
            continue
        avg = f.cube_averages(s, lo, hi, F)
        centers = 0.5 * (lo + hi)
        side = np.max(hi - lo, axis=1)
        val = avg * np.exp(-_log_psi(centers, side, theta))
        out[i] = float(np.max(val)) ** (1.0 / s)
    return out if out.size > 1 else float(out[0])


def fefferman_stein_probe(family, p: float, q: float, s: float, theta: float, w: Weight, r_w: float | None = None, **maximal_kw) -> float:
    """``||(sum_j (M_s^theta f_j)^q)^(1/q)||_{L^p_w} / ||(sum_j |f_j|^q)^(1/q)||_{L^p_w}``.

    Both sides are evaluated on the common cell grid of the family:
    the maximal functions at cell centers, the weight through exact cell masses.
    ``r_w`` is the declared critical index of ``w`` (``w.r_w`` when omitted).
    """
    if not family:
        raise ValidationError("empty function family")
    r_w = w.r_w if r_w is None else r_w
    if r_w is None:
        raise ConstraintError("fefferman_stein_probe needs a declared r_w")
    if not (p > 0 and q > 0 and 0 < s < min(p / r_w, q)):
        raise ConstraintError(f"need 0 < s < min(p / r_w, q) = {min(p / r_w, q)}, got s = {s}")
    g0 = family[0]
    for g in family[1:]:
        if len(g.edges) != len(g0.edges) or any(not np.array_equal(a, b) for a, b in zip(g.edges, g0.edges)):
            raise ValidationError("all functions of the family must share one grid")
    centers = g0.centers
    lo, hi = g0.cell_bounds
    logm = w.log_mass_boxes(lo, hi)
    Mvals = np.stack([np.atleast_1d(maximal(g, s, theta, centers, **maximal_kw)) for g in family])
    fvals = np.stack([np.abs(g.values).reshape(-1) for g in family])
    lhs = _lp_sum(_lq(Mvals, q), p, logm)
    rhs = _lp_sum(_lq(fvals, q), p, logm)
    return float(np.exp(lhs - rhs))


def _lq(vals, q):
    return np.max(vals, axis=0) if math.isinf(q) else np.sum(vals**q, axis=0) ** (1.0 / q)


def _lp_sum(vals, p, logm):
    """Log of ``(sum vals^p w(cell))^(1/p)``."""
    with np.errstate(divide="ignore"):
        terms = p * np.log(vals) + logm
    return special.logsumexp(terms) / p


__all__ = [
    "AhpReport",
    "Ball",
    "CubeSpec",
    "FAMILIES",
    "GridFunction",
    "Weight",
    "ahp_certificate",
    "critical_radius",
    "dyadic_cube_family",
    "estimate_r_w",
    "fefferman_stein_probe",
    "maximal",
    "psi_factor",
    "sample_cubes",
    "slow_growth_fit",
]
