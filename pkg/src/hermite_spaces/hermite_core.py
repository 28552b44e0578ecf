"""Hermite functions, projector kernels, Christoffel function and Hermite zeros.

All evaluations work on the orthonormal Hermite functions ``h_k`` directly
through the normalized three-term recurrence

    h_{k+1}(t) = t sqrt(2/(k+1)) h_k(t) - sqrt(k/(k+1)) h_{k-1}(t),

started from ``h_0 = pi^(-1/4) exp(-t^2/2)``.  The Gaussian factor is carried
as a separate log-scale so the recurrence neither overflows (large ``k``) nor
underflows prematurely (large ``|t|``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ResourceError, ValidationError, ZeroFinderError

PI_M14 = math.pi ** -0.25

#: Default cap on the number of multi-indices entering an n-D kernel sum.
MULTI_INDEX_CAP = 10**6

_RESCALE_EVERY = 8
_RESCALE_ABOVE = 1e150


def eigenvalue(k: int, n: int = 1) -> int:
    """Eigenvalue ``2k + n`` of the harmonic oscillator on ``W_k`` in dimension ``n``."""
    if k < 0 or n < 1:
        raise ValidationError(f"need k >= 0 and n >= 1, got k={k}, n={n}")
    return 2 * k + n


def _recurrence(kmax: int, t: np.ndarray):
    """Yield ``(k, v, log_scale)`` with ``h_k(t) = v * exp(log_scale)``."""
    log_scale = -0.5 * t * t
    cur = np.full(t.shape, PI_M14)
    prev = np.zeros(t.shape)
    yield 0, cur, log_scale
    for k in range(kmax):
        nxt = t * math.sqrt(2.0 / (k + 1)) * cur - math.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
        if k % _RESCALE_EVERY == 0:
            big = np.abs(cur) > _RESCALE_ABOVE
            if big.any():
                s = np.where(big, np.abs(cur), 1.0)
                cur = cur / s
                prev = prev / s
                log_scale = log_scale + np.log(s)
        yield k + 1, cur, log_scale


def hermite_table(kmax: int, t) -> np.ndarray:
    """Values ``h_0(t), ..., h_kmax(t)`` stacked along a new trailing axis.

    ``t`` may be any array shape; the result has shape ``t.shape + (kmax+1,)``.
    Entries that are genuinely below the double range underflow to zero.
    """
    if kmax < 0:
        raise ValidationError("kmax must be nonnegative")
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (kmax + 1,))
    for k, v, log_scale in _recurrence(kmax, t):
        out[..., k] = v * np.exp(log_scale)
    return out


def hermite_table_scaled(kmax: int, t) -> tuple[np.ndarray, np.ndarray]:
    """Pair ``(A, s)`` with ``h_k(t) = A[..., k] * exp(s)`` and ``max_k |A| = 1``.

    Unlike :func:`hermite_table` this never underflows, so logarithms of
    kernels far outside the oscillatory region stay available.
    """
    if kmax < 0:
        raise ValidationError("kmax must be nonnegative")
    t = np.asarray(t, dtype=float)
    vals = np.empty(t.shape + (kmax + 1,))
    logs = np.empty(t.shape + (kmax + 1,))
    for k, v, log_scale in _recurrence(kmax, t):
        vals[..., k] = v
        logs[..., k] = log_scale
    with np.errstate(divide="ignore"):
        log_abs = np.log(np.abs(vals)) + logs
    s = np.max(log_abs, axis=-1)
    return np.sign(vals) * np.exp(log_abs - s[..., None]), s


def hermite_values(kmax: int, t: float) -> np.ndarray:
    """Vector ``[h_0(t), ..., h_kmax(t)]`` at a single real ``t``."""
    return hermite_table(kmax, float(t))


def hermite_nd(xi, x) -> float:
    """Tensor-product Hermite function ``h_xi(x) = prod_d h_{xi_d}(x_d)``."""
    xi = tuple(int(v) for v in np.atleast_1d(xi))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if len(xi) != x.shape[-1]:
        raise ValidationError(f"multi-index has {len(xi)} entries but point has {x.shape[-1]}")
    value = 1.0
    for d, k in enumerate(xi):
        value *= hermite_table(k, x[..., d])[..., k]
    return value


def _scaled_neighbors(m: int, x: np.ndarray):
    """``(h_{m-1}, h_m, h_{m+1})`` at ``x`` times a common positive factor.

    Only signs and ratios are meaningful; used by the zero finder.
    """
    prev2 = np.zeros(x.shape)
    prev = np.zeros(x.shape)
    cur = np.full(x.shape, PI_M14)
    for k in range(m + 1):
        nxt = x * math.sqrt(2.0 / (k + 1)) * cur - math.sqrt(k / (k + 1)) * prev
        prev2, prev, cur = prev, cur, nxt
        if k % _RESCALE_EVERY == 0:
            s = np.maximum(np.abs(cur), np.abs(prev))
            s = np.where(s > _RESCALE_ABOVE, s, 1.0)
            prev2, prev, cur = prev2 / s, prev / s, cur / s
    return prev2, prev, cur


# ---------------------------------------------------------------------------
# multi-indices and kernels


@lru_cache(maxsize=64)
def _multi_indices_cached(n: int, N: int) -> np.ndarray:
    rows = []
    for k in range(N + 1):
        rows.extend(_compositions(k, n))
    arr = np.array(rows, dtype=np.int64).reshape(-1, n)
    arr.setflags(write=False)
    return arr


def _compositions(k: int, n: int):
    if n == 1:
        return [(k,)]
    out = []
    for first in range(k, -1, -1):
        for rest in _compositions(k - first, n - 1):
            out.append((first,) + rest)
    return out


def count_multi_indices(n: int, N: int) -> int:
    """Number of multi-indices in ``N_0^n`` with total degree at most ``N``."""
    return math.comb(N + n, n)


def multi_indices(n: int, N: int, cap: int = MULTI_INDEX_CAP) -> np.ndarray:
    """All ``xi`` with ``|xi| <= N`` in graded order (degree, then first entry descending).

    The enumeration for ``N`` is a prefix of the one for ``N + 1``.
    """
    if n < 1 or N < 0:
        raise ValidationError(f"need n >= 1 and N >= 0, got n={n}, N={N}")
    count = count_multi_indices(n, N)
    if count > cap:
        raise ResourceError(f"{count} multi-indices exceed the cap of {cap}")
    return _multi_indices_cached(n, N)


def design_matrix(n: int, N: int, points) -> np.ndarray:
    """Matrix ``D[p, i] = h_{xi_i}(x_p)`` over the graded multi-index list."""
    pts = as_points(points, n)
    idx = multi_indices(n, N)
    D = np.ones((pts.shape[0], idx.shape[0]))
    for d in range(n):
        T = hermite_table(N, pts[:, d])
        D *= T[:, idx[:, d]]
    return D


def as_points(points, n: int) -> np.ndarray:
    """Coerce points to a ``(P, n)`` float array; 1-D input is read as ``P`` scalars when n == 1."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1) if n == 1 else pts.reshape(1, -1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if n == 1 else pts.reshape(1, -1)
    if pts.shape[-1] != n:
        raise ValidationError(f"points have dimension {pts.shape[-1]}, expected {n}")
    return pts.reshape(-1, n)


def projector_kernels(K: int, x, y, n: int = 1, cap: int = MULTI_INDEX_CAP) -> np.ndarray:
    """``P_k(x, y)`` for ``k = 0..K`` along a trailing axis.

    ``x`` and ``y`` are broadcast-compatible arrays of points (last axis ``n``;
    for ``n == 1`` plain scalars/arrays are accepted).  The n-D kernels are
    obtained by convolving the per-axis products ``h_k(x_d) h_k(y_d)``, which
    is the exact finite sum over all ``xi`` with ``|xi| = k``.
    """
    if count_multi_indices(n, K) > cap:
        raise ResourceError(f"{count_multi_indices(n, K)} multi-indices exceed the cap of {cap}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if n == 1:
        if x.ndim and x.shape[-1] == 1 and y.ndim and y.shape[-1] == 1:
            x, y = x[..., 0], y[..., 0]
        return hermite_table(K, x) * hermite_table(K, y)
    x, y = np.broadcast_arrays(x, y)
    acc = hermite_table(K, x[..., 0]) * hermite_table(K, y[..., 0])
    for d in range(1, n):
        A = hermite_table(K, x[..., d]) * hermite_table(K, y[..., d])
        new = np.empty_like(acc)
        for k in range(K + 1):
            new[..., k] = np.sum(acc[..., : k + 1] * A[..., k::-1], axis=-1)
        acc = new
    return acc


def projector_kernel(k: int, x, y, n: int = 1, cap: int = MULTI_INDEX_CAP):
    """Kernel of the orthogonal projection onto ``W_k``: ``sum_{|xi|=k} h_xi(x) h_xi(y)``."""
    if k < 0:
        raise ValidationError("degree must be nonnegative")
    return projector_kernels(k, x, y, n, cap)[..., k]


def partial_kernel(N: int, x, y, n: int = 1, cap: int = MULTI_INDEX_CAP):
    """Kernel ``Q_N(x, y) = sum_{k <= N} P_k(x, y)`` of the projection onto ``V_N``."""
    if N < 0:
        raise ValidationError("degree must be nonnegative")
    return projector_kernels(N, x, y, n, cap).sum(axis=-1)


def christoffel(N: int, x):
    """Christoffel function ``1 / Q_N(x, x)`` in one dimension."""
    if N < 0:
        raise ValidationError("degree must be nonnegative")
    T = hermite_table(N, x)
    with np.errstate(divide="ignore"):
        return 1.0 / np.sum(T * T, axis=-1)


# ---------------------------------------------------------------------------
# zeros


@dataclass(frozen=True)
class ZeroSet:
    """Sorted real zeros of ``H_m``, symmetric about the origin to the bit."""

    order: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.order,):
            raise ValidationError(f"expected {self.order} zeros, got {v.shape}")
        if not np.all(np.diff(v) > 0) or not np.all(np.isfinite(v)):
            raise ValidationError("zeros must be finite and strictly increasing")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def half(self) -> int:
        return self.order // 2

    @property
    def positive(self) -> np.ndarray:
        return self.values[self.order - self.half:]

    def zeta(self, nu: int) -> float:
        """Zero with signed index ``nu`` in ``{+-1, ..., +-m/2}`` (even order)."""
        if nu == 0 or abs(nu) > self.half:
            raise IndexError(f"zero index {nu} out of range for order {self.order}")
        z = self.positive[abs(nu) - 1]
        return float(z if nu > 0 else -z)

    def __len__(self):
        return self.order


def _bracket_positive_zeros(m: int, max_refine: int = 8):
    expected = m // 2
    upper = math.sqrt(2 * m + 1) + 1.0
    step = math.pi / (2.0 * math.sqrt(2 * m + 1))
    for _ in range(max_refine):
        start = 0.0 if m % 2 == 0 else 0.5 * step
        grid = np.arange(start, upper + step, step)
        vals = _scaled_neighbors(m, grid)[1]
        sgn = np.where(vals >= 0, 1, -1)
        idx = np.nonzero(sgn[:-1] != sgn[1:])[0]
        if len(idx) == expected:
            return grid[idx], grid[idx + 1], sgn[idx]
        step *= 0.5
    raise ZeroFinderError(
        f"could not isolate {expected} positive zeros of H_{m} by sign changes",
        bracket=(0.0, upper),
    )


def _positive_zeros(m: int, maxiter: int = 100) -> np.ndarray:
    if m < 2:
        return np.zeros(0)
    lo, hi, sgn_lo = _bracket_positive_zeros(m)
    x = 0.5 * (lo + hi)
    scale = math.sqrt(2.0 * m)
    eps = np.finfo(float).eps
    active = np.ones(x.shape, dtype=bool)
    for _ in range(maxiter):
        xa = x[active]
        prev_, cur_, _next = _scaled_neighbors(m, xa)
        s = np.where(cur_ >= 0, 1, -1)
        same = s == sgn_lo[active]
        lo_a = np.where(same, xa, lo[active])
        hi_a = np.where(same, hi[active], xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xa - cur_ / (scale * prev_)
        inside = np.isfinite(newton) & (newton > lo_a) & (newton < hi_a)
        xn = np.where(inside, newton, 0.5 * (lo_a + hi_a))
        xn = np.where(cur_ == 0, xa, xn)
        done = (np.abs(xn - xa) <= 4 * eps * np.abs(xa)) | (cur_ == 0)
        lo[active], hi[active], x[active] = lo_a, hi_a, xn
        idx = np.nonzero(active)[0]
        active[idx[done]] = False
        if not active.any():
            return x
    bad = np.nonzero(active)[0][0]
    raise ZeroFinderError(
        f"zero of H_{m} did not converge in {maxiter} iterations",
        bracket=(float(lo[bad]), float(hi[bad])),
    )


@lru_cache(maxsize=128)
def _zeros_cached(m: int) -> ZeroSet:
    pos = _positive_zeros(m)
    if m % 2:
        vals = np.concatenate([-pos[::-1], [0.0], pos])
    else:
        vals = np.concatenate([-pos[::-1], pos])
    return ZeroSet(m, vals)


def hermite_zeros(m: int) -> ZeroSet:
    """All ``m`` zeros of the Hermite polynomial ``H_m`` (``m`` even, ``m >= 2``).

    Positive zeros are isolated by counting sign changes of ``h_m`` on a grid
    finer than the zero spacing (the count must equal ``m/2``, which certifies
    one zero per bracket), then polished by safeguarded Newton steps.
    """
    if m < 2 or m % 2:
        raise ValidationError(f"order must be even and >= 2, got {m}")
    return _zeros_cached(m)


def hermite_zeros_any(m: int) -> np.ndarray:
    """Zeros of ``H_m`` for any ``m >= 1`` (odd orders include the origin)."""
    if m < 1:
        raise ValidationError("order must be positive")
    return _zeros_cached(m).values


def neighbor_signs(m: int, x) -> tuple[np.ndarray, np.ndarray]:
    """Signs of ``h_{m-1}`` and ``h_{m+1}`` at ``x`` (exact w.r.t. scaling)."""
    prev_, _cur, nxt = _scaled_neighbors(m, np.asarray(x, dtype=float))
    return np.sign(prev_), np.sign(nxt)


# ---------------------------------------------------------------------------
# expansions


def _as_coeff_array(coeffs, size):
    c = np.asarray(coeffs)
    if not (np.issubdtype(c.dtype, np.floating) or np.issubdtype(c.dtype, np.complexfloating)):
        c = c.astype(float)
    if c.shape != (size,):
        raise ValidationError(f"expected {size} coefficients, got shape {c.shape}")
    c = c.copy()
    c.setflags(write=False)
    return c


@dataclass(frozen=True)
class HermiteExpansion:
    """Finite Hermite series ``sum_{|xi| <= N} c_xi h_xi`` on ``R^n``.

    Coefficients are stored densely in the graded order of :func:`multi_indices`.
    """

    n: int
    N: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 1 or self.N < 0:
            raise ValidationError(f"need n >= 1 and N >= 0, got n={self.n}, N={self.N}")
        object.__setattr__(self, "coeffs", _as_coeff_array(self.coeffs, count_multi_indices(self.n, self.N)))

    @classmethod
    def zeros(cls, n: int, N: int, dtype=float) -> "HermiteExpansion":
        return cls(n, N, np.zeros(count_multi_indices(n, N), dtype=dtype))

    @classmethod
    def basis(cls, xi, N: int | None = None) -> "HermiteExpansion":
        xi = tuple(int(v) for v in np.atleast_1d(xi))
        deg = sum(xi)
        N = deg if N is None else N
        return cls.from_mapping(len(xi), N, {xi: 1.0})

    @classmethod
    def from_mapping(cls, n: int, N: int, mapping) -> "HermiteExpansion":
        idx = multi_indices(n, N)
        lookup = {tuple(row): i for i, row in enumerate(idx.tolist())}
        is_complex = any(isinstance(v, complex) or np.iscomplexobj(v) for v in mapping.values())
        c = np.zeros(len(idx), dtype=complex if is_complex else float)
        for xi, val in mapping.items():
            key = tuple(int(v) for v in np.atleast_1d(xi))
            if key not in lookup:
                raise ValidationError(f"multi-index {key} not admissible for n={n}, N={N}")
            c[lookup[key]] = val
        return cls(n, N, c)

    @classmethod
    def random(cls, n: int, N: int, rng: np.random.Generator, complex_: bool = False) -> "HermiteExpansion":
        size = count_multi_indices(n, N)
        c = rng.standard_normal(size)
        if complex_:
            c = c + 1j * rng.standard_normal(size)
        return cls(n, N, c)

    @property
    def indices(self) -> np.ndarray:
        return multi_indices(self.n, self.N)

    @property
    def degrees(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.coeffs)

    def coefficient(self, xi) -> complex:
        key = tuple(int(v) for v in np.atleast_1d(xi))
        if len(key) != self.n or sum(key) > self.N:
            return 0.0
        hit = np.nonzero((self.indices == np.array(key)).all(axis=1))[0]
        return self.coeffs[hit[0]]

    def padded(self, N: int) -> "HermiteExpansion":
        """Same function viewed in ``V_N`` for ``N >= self.N``."""
        if N < self.N:
            raise ValidationError("cannot pad to a smaller degree; use truncated()")
        c = np.zeros(count_multi_indices(self.n, N), dtype=self.coeffs.dtype)
        c[: len(self.coeffs)] = self.coeffs
        return HermiteExpansion(self.n, N, c)

    def truncated(self, N: int) -> "HermiteExpansion":
        return HermiteExpansion(self.n, N, self.coeffs[: count_multi_indices(self.n, N)])

    def effective_degree(self) -> int:
        nz = np.nonzero(self.coeffs)[0]
        return int(self.degrees[nz].max()) if len(nz) else 0

    def evaluate(self, points, chunk: int = 4096) -> np.ndarray:
        """Values at ``points`` (shape ``(P, n)``; plain arrays allowed for n == 1)."""
        pts = as_points(points, self.n)
        out = np.empty(pts.shape[0], dtype=self.coeffs.dtype)
        for start in range(0, pts.shape[0], chunk):
            sl = slice(start, start + chunk)
            out[sl] = design_matrix(self.n, self.N, pts[sl]) @ self.coeffs
        return out

    def __call__(self, points):
        return self.evaluate(points)

    def norm(self) -> float:
        """``L^2`` norm, equal to the coefficient ``l^2`` norm by orthonormality."""
        return float(np.linalg.norm(self.coeffs))

    def _aligned(self, other):
        if not isinstance(other, HermiteExpansion):
            return NotImplemented
        if other.n != self.n:
            raise ValidationError("dimension mismatch")
        N = max(self.N, other.N)
        return self.padded(N).coeffs, other.padded(N).coeffs, N

    def __add__(self, other):
        a, b, N = self._aligned(other)
        return HermiteExpansion(self.n, N, a + b)

    def __sub__(self, other):
        a, b, N = self._aligned(other)
        return HermiteExpansion(self.n, N, a - b)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return HermiteExpansion(self.n, self.N, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return HermiteExpansion(self.n, self.N, -self.coeffs)

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        entries = []
        for xi, c in zip(self.indices.tolist(), self.coeffs.tolist()):
            c = complex(c)
            entries.append({"xi": [int(v) for v in xi], "re": c.real, "im": c.imag})
        return {"n": self.n, "N": self.N, "coeffs": entries}

    @classmethod
    def from_json_dict(cls, data: dict) -> "HermiteExpansion":
        if not isinstance(data, dict):
            raise ValidationError("expansion JSON must be an object")
        unknown = set(data) - {"n", "N", "coeffs"}
        missing = {"n", "N", "coeffs"} - set(data)
        if unknown or missing:
            raise ValidationError(f"expansion JSON: unknown fields {sorted(unknown)}, missing {sorted(missing)}")
        n, N = data["n"], data["N"]
        if not (isinstance(n, int) and isinstance(N, int)) or n < 1 or N < 0:
            raise ValidationError("expansion JSON: n must be a positive int and N a nonnegative int")
        mapping = {}
        any_imag = False
        for entry in data["coeffs"]:
            if not isinstance(entry, dict):
                raise ValidationError("expansion JSON: coefficient entries must be objects")
            extra = set(entry) - {"xi", "re", "im"}
            if extra or "xi" not in entry or "re" not in entry:
                raise ValidationError(f"expansion JSON: bad coefficient entry {entry!r}")
            xi = entry["xi"]
            if (
                not isinstance(xi, list)
                or len(xi) != n
                or not all(isinstance(v, int) and v >= 0 for v in xi)
            ):
                raise ValidationError(f"expansion JSON: bad multi-index {xi!r}")
            key = tuple(xi)
            if key in mapping:
                raise ValidationError(f"expansion JSON: duplicate multi-index {key}")
            if sum(key) > N:
                raise ValidationError(f"expansion JSON: |xi| = {sum(key)} exceeds N = {N}")
            im = float(entry.get("im", 0.0))
            any_imag = any_imag or im != 0.0
            mapping[key] = complex(float(entry["re"]), im)
        if not any_imag:
            mapping = {k: v.real for k, v in mapping.items()}
        return cls.from_mapping(n, N, mapping)


def coefficient_tensor(f: "HermiteExpansion") -> np.ndarray:
    """Dense array ``C[k_1, ..., k_n]`` of shape ``(N+1,)*n`` (zero where ``|k| > N``)."""
    C = np.zeros((f.N + 1,) * f.n, dtype=f.coeffs.dtype)
    C[tuple(f.indices.T)] = f.coeffs
    return C


def from_coefficient_tensor(C: np.ndarray, N: int) -> "HermiteExpansion":
    """Inverse of :func:`coefficient_tensor`; entries with ``|k| > N`` are dropped."""
    n = C.ndim
    idx = multi_indices(n, N)
    lim = C.shape[0] - 1
    vals = np.zeros(len(idx), dtype=C.dtype)
    ok = np.all(idx <= lim, axis=1)
    vals[ok] = C[tuple(idx[ok].T)]
    return HermiteExpansion(n, N, vals)


def evaluate_product_grid(f: "HermiteExpansion", axes) -> np.ndarray:
    """Values of ``f`` on the tensor grid ``axes[0] x ... x axes[n-1]``.

    Contracts one axis table at a time, so the cost is that of ``n``
    matrix products instead of one design matrix per grid point.
    """
    if len(axes) != f.n:
        raise ValidationError(f"need {f.n} axes, got {len(axes)}")
    out = coefficient_tensor(f)
    for d, pts in enumerate(axes):
        T = hermite_table(f.N, np.asarray(pts, dtype=float))
        out = np.tensordot(T, out, axes=([1], [d]))
        out = np.moveaxis(out, 0, d)
    return out


def random_expansions(n, N, count, seed, complex_=False):
    """Independent random expansions, one generator per draw."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [HermiteExpansion.random(n, N, np.random.default_rng(c), complex_) for c in children]


__all__ = [
    "HermiteExpansion",
    "coefficient_tensor",
    "evaluate_product_grid",
    "from_coefficient_tensor",
    "ZeroSet",
    "as_points",
    "christoffel",
    "count_multi_indices",
    "design_matrix",
    "eigenvalue",
    "hermite_nd",
    "hermite_table",
    "hermite_table_scaled",
    "hermite_values",
    "hermite_zeros",
    "hermite_zeros_any",
    "multi_indices",
    "neighbor_signs",
    "partial_kernel",
    "projector_kernel",
    "projector_kernels",
]

