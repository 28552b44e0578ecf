"""Dyadic spectral multiplier systems for the Hermite operator.

A system is a sequence of profiles ``phi_j(t)`` in the spectral variable
``t = sqrt(lambda)``; the operator ``phi_j(sqrt(L))`` multiplies the
coefficient of ``h_xi`` by ``phi_j(sqrt(2|xi| + n))``.  Supports are

    supp phi_0 in [0, 1],    supp phi_j in [2^(j-2), 2^j]  (j >= 1).

Three kinds are provided:

* ``partition``: ``phi_0 = u`` and ``phi_j(t) = u(2^-j t) - u(2^(1-j) t)``
  with a C-infinity cut-off ``u`` (``u = 1`` on ``[0, 1/2]``, ``u = 0`` on
  ``[1, oo)``), so that ``sum_j phi_j = 1``;
* ``tight``: ``phi_j = sqrt(u(2^-j t)^2 - u(2^(1-j) t)^2)``, so that
  ``sum_j phi_j^2 = 1``;
* ``dual``: ``psi_j = phi_j / G`` with ``G = sum_k phi_k^2`` for a primal
  system, so that ``sum_j psi_j phi_j = 1`` identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from .errors import CalibrationError, ValidationError
from .hermite_core import (
    MULTI_INDEX_CAP,
    HermiteExpansion,
    design_matrix,
    hermite_table_scaled,
    multi_indices,
    projector_kernels,
)

PRIMAL_KINDS = ("partition", "tight")
KINDS = PRIMAL_KINDS + ("dual",)

#: Largest admissible lower-bound constant accepted by the calibration.
C_FLOOR_MAX = 0.05
DEFAULT_C_FLOOR = 0.05


def smoothstep(t, sharpness: float = 1.0):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``.

    ``S(t) = e^{-k/t} / (e^{-k/t} + e^{-k/(1-t)})`` written as a logistic
    function of ``k (1/(1-t) - 1/t)`` for stability.
    """
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    inner = (t > 0.0) & (t < 1.0)
    if np.any(inner):
        s = t[inner]
        out[inner] = expit(sharpness * (1.0 / (1.0 - s) - 1.0 / s))
    return out


def cutoff(lam, sharpness: float = 1.0):
    """Cut-off ``u`` with ``u = 1`` on ``[0, 1/2]`` and ``u = 0`` on ``[1, oo)``."""
    return smoothstep(2.0 * (1.0 - np.asarray(lam, dtype=float)), sharpness)


def _certified_interval(j: int) -> tuple[float, float]:
    if j == 0:
        return 0.0, 2.0 ** -1.75
    return 2.0 ** (j - 1.75), 2.0 ** (j - 0.25)


def _band(j: int) -> tuple[float, float]:
    if j < 0:
        raise ValidationError("scale must be nonnegative")
    return (0.0, 1.0) if j == 0 else (2.0 ** (j - 2), 2.0 ** j)


def _lower_bound_exponent() -> float:
    """Exponent ``A`` with ``min phi_1 = 1/(1 + e^{A k})`` on the certified interval.

    On ``[2^-3/4, 2^3/4]`` the partition profile ``phi_1`` is smallest at an
    endpoint; both endpoints reduce to ``S`` evaluated at one point.
    """
    lo, hi = _certified_interval(1)
    s_lo = 2.0 * (1.0 - lo)  # phi_1(lo) = 1 - S(s_lo)
    s_hi = 2.0 - hi  # phi_1(hi) = S(s_hi)
    return max(1.0 / (1.0 - s_lo) - 1.0 / s_lo, 1.0 / s_hi - 1.0 / (1.0 - s_hi))


def max_sharpness(c_floor: float) -> float:
    """Largest cut-off sharpness whose partition system keeps ``|phi_j| >= c_floor``."""
    return math.log(1.0 / c_floor - 1.0) / _lower_bound_exponent()


@dataclass(frozen=True)
class MultiplierSystem:
    """An admissible system ``{phi_j}`` together with its metadata.

    Parameters
    ----------
    kind : {"partition", "tight", "dual"}
    c_floor : float
        Lower-bound constant the system was calibrated for.
    sharpness : float
        Parameter ``k`` of the smooth step inside the cut-off.
    base : str, optional
        Primal kind underlying a dual system.
    """

    kind: str
    c_floor: float
    sharpness: float
    base: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown system kind {self.kind!r}")
        if self.kind == "dual":
            if self.base not in PRIMAL_KINDS:
                raise ValidationError("a dual system needs a primal base kind")
        elif self.base is not None:
            raise ValidationError("only dual systems carry a base kind")
        if not self.sharpness > 0:
            raise ValidationError("sharpness must be positive")

    @property
    def dilate(self) -> bool:
        """Whether ``phi_j(t) = phi(2^(1-j) t)`` for one profile ``phi`` and all ``j >= 1``."""
        # dual profiles divide by G, which is not dilation invariant below t = 1
        return self.kind != "dual" or self.base == "tight"

    # -- profiles -----------------------------------------------------------

    def _primal(self, kind: str, j: int, t: np.ndarray) -> np.ndarray:
        u_hi = cutoff(t / 2.0 ** j, self.sharpness)
        if j == 0:
            return u_hi
        u_lo = cutoff(t / 2.0 ** (j - 1), self.sharpness)
        if kind == "partition":
            return u_hi - u_lo
        return np.sqrt(np.maximum(u_hi * u_hi - u_lo * u_lo, 0.0))

    @cached_property
    def primal(self) -> "MultiplierSystem":
        """The system ``{phi_j}`` a dual is built from (self for primal kinds)."""
        if self.kind != "dual":
            return self
        return MultiplierSystem(self.base, self.c_floor, self.sharpness)

    def gram(self, t) -> np.ndarray:
        """``G(t) = sum_j phi_j(t)^2`` of the primal system."""
        t = np.asarray(t, dtype=float)
        top = max(0, int(np.ceil(np.log2(max(float(np.max(t, initial=1.0)), 1.0)))) + 2)
        g = np.zeros(t.shape)
        for j in range(top + 1):
            v = self.primal._primal(self.primal.kind, j, t)
            g += v * v
        return g

    def phi(self, j: int, t) -> np.ndarray:
        """Profile ``phi_j`` at spectral points ``t >= 0`` (vectorized)."""
        _band(j)
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValidationError("profiles are defined on t >= 0")
        if self.kind == "dual":
            v = self._primal(self.base, j, t)
            if self.base == "tight":
                return v
            out = np.zeros(t.shape)
            nz = v != 0.0
            out[nz] = v[nz] / self.gram(t[nz])
            return out
        return self._primal(self.kind, j, t)

    __call__ = phi

    def derivative(self, j: int, t, order: int = 1, step: float = 1e-3) -> np.ndarray:
        """Central finite-difference derivative of ``phi_j`` of order up to 4."""
        if not 0 <= order <= 4:
            raise ValidationError("derivative order must lie in 0..4")
        t = np.asarray(t, dtype=float)
        if order == 0:
            return self.phi(j, t)
        h = step * max(1.0, 2.0 ** (j - 2))
        offsets = np.arange(order + 1) - order / 2.0
        coeffs = np.array([(-1) ** (order - i) * math.comb(order, i) for i in range(order + 1)], float)
        pts = np.maximum(t[..., None] + h * offsets, 0.0)
        return (self.phi(j, pts) * coeffs).sum(axis=-1) / h**order

    def band(self, j: int) -> tuple[float, float]:
        """Closed interval containing the support of ``phi_j``."""
        return _band(j)

    def certificate(self, j: int, samples: int = 4001) -> tuple[float, float, float]:
        """``(lo, hi, c)`` with ``|phi_j| >= c`` on ``[lo, hi]`` (dense sample incl. endpoints)."""
        lo, hi = _certified_interval(j)
        t = np.linspace(lo, hi, samples)
        return lo, hi, float(np.min(np.abs(self.phi(j, t))))

    def multipliers(self, j: int, n: int, kmax: int) -> np.ndarray:
        """``phi_j(sqrt(2k + n))`` for ``k = 0..kmax``; exact zeros off the support index set."""
        out = np.zeros(kmax + 1)
        ks = support_index_set(self, j, n)
        ks = ks[ks <= kmax]
        if ks.size:
            out[ks] = self.phi(j, np.sqrt(2.0 * ks + n))
        return out

    # -- serialization -------------------------------------------------------

    def to_json_dict(self, levels: int = 8) -> dict:
        out = {
            "kind": self.kind,
            "c_floor": self.c_floor,
            "sharpness": self.sharpness,
            "bands": [list(self.band(j)) for j in range(levels + 1)],
        }
        if self.base is not None:
            out["base"] = self.base
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "MultiplierSystem":
        allowed = {"kind", "c_floor", "sharpness", "bands", "base"}
        if not isinstance(data, dict) or set(data) - allowed:
            raise ValidationError(f"unknown multiplier-system fields: {sorted(set(data) - allowed)}")
        if "kind" not in data or "c_floor" not in data:
            raise ValidationError("multiplier system needs 'kind' and 'c_floor'")
        kind = data["kind"]
        base = data.get("base", "partition" if kind == "dual" else None)
        primal = build_system(base if kind == "dual" else kind, data["c_floor"], data.get("sharpness"))
        sys_ = dual_system(primal) if kind == "dual" else primal
        for j, b in enumerate(data.get("bands", [])):
            if len(b) != 2 or not np.allclose(b, sys_.band(j), rtol=0, atol=0):
                raise ValidationError(f"band {j} does not match the reconstructed system")
        return sys_


def build_system(kind: str, c_floor: float = DEFAULT_C_FLOOR, sharpness: float | None = None) -> MultiplierSystem:
    """Calibrated primal system of the given kind (``partition`` or ``tight``)."""
    if kind not in PRIMAL_KINDS:
        raise ValidationError(f"primal kind must be one of {PRIMAL_KINDS}, got {kind!r}")
    c_floor = float(c_floor)
    if not 0.0 < c_floor <= C_FLOOR_MAX:
        raise ValidationError(f"c_floor must lie in (0, {C_FLOOR_MAX}], got {c_floor}")
    k_max = max_sharpness(c_floor)
    if sharpness is None:
        # stay a hair inside the limit so the sampled bound is not lost to rounding
        sharpness = min(1.0, k_max * (1.0 - 1e-9))
    elif not sharpness > 0:
        raise ValidationError("sharpness must be positive")
    system = MultiplierSystem(kind, c_floor, float(sharpness))
    for j in (0, 1):
        if system.certificate(j)[2] < c_floor * (1.0 - 1e-12):
            raise CalibrationError(
                f"sharpness {sharpness} gives lower bound below {c_floor}; use at most {k_max:.6g}"
            )
    return system


def build_partition_system(c_floor: float = DEFAULT_C_FLOOR, sharpness: float | None = None) -> MultiplierSystem:
    """Partition of unity ``sum_j phi_j = 1`` calibrated so ``|phi_j| >= c_floor`` on its core."""
    return build_system("partition", c_floor, sharpness)


def build_tight_system(c_floor: float = DEFAULT_C_FLOOR, sharpness: float | None = None) -> MultiplierSystem:
    """Square partition ``sum_j phi_j^2 = 1``; it is its own dual."""
    return build_system("tight", c_floor, sharpness)


def dual_system(phi: MultiplierSystem, g0: float = 1e-3, samples: int = 20001) -> MultiplierSystem:
    """Dual profiles ``psi_j = phi_j / G`` with ``G = sum_k phi_k^2``.

    For ``t >= 1`` only scales ``j >= 1`` contribute and ``G(2t) = G(t)``,
    so sampling ``[0, 2]`` covers the whole half-line.
    """
    if phi.kind == "dual":
        raise ValidationError("system is already a dual system")
    t = np.linspace(0.0, 2.0, samples)
    g_min = float(np.min(phi.gram(t)))
    if not g_min >= g0:
        raise CalibrationError(f"G has sampled minimum {g_min:.3g} below {g0}")
    return MultiplierSystem("dual", phi.c_floor, phi.sharpness, base=phi.kind)


# ---------------------------------------------------------------------------
# coefficient-space operators


def support_index_set(sys: MultiplierSystem, j: int, n: int) -> np.ndarray:
    """Degrees ``k`` with ``sqrt(2k + n)`` in the closed support band of ``phi_j``."""
    if n < 1:
        raise ValidationError("dimension must be positive")
    a, b = sys.band(j)
    lo = max(0, math.ceil((a * a - n) / 2.0))
    hi = math.floor((b * b - n) / 2.0)
    return np.arange(lo, hi + 1) if hi >= lo else np.arange(0)


def closed_form_index_set(j: int, n: int) -> np.ndarray:
    """Index range ``[4^(j-2)/2 - floor(n/2), 4^j/2 - ceil(n/2)]`` quoted in the literature.

    Kept for comparison only: at ``j = 1, n = 1`` it omits ``k = 0`` although
    ``phi_1(1) != 0`` for the partition system.
    """
    if j == 0:
        return np.arange(1) if n == 1 else np.arange(0)
    lo = max(0, math.ceil(0.5 * 4.0 ** (j - 2) - n // 2))
    hi = math.floor(0.5 * 4.0**j - (n + 1) // 2)
    return np.arange(lo, hi + 1)


def apply_multiplier(sys: MultiplierSystem, j: int, f: HermiteExpansion) -> HermiteExpansion:
    """``phi_j(sqrt(L)) f`` computed coefficient by coefficient."""
    m = sys.multipliers(j, f.n, f.N)
    return HermiteExpansion(f.n, f.N, m[f.degrees] * f.coeffs)


def multiplier_kernel(sys: MultiplierSystem, j: int, x, y, n: int = 1, cap: int = MULTI_INDEX_CAP):
    """Kernel ``sum_k phi_j(sqrt(2k+n)) P_k(x, y)`` (broadcast over points)."""
    ks = support_index_set(sys, j, n)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if ks.size == 0:
        shape = np.broadcast_shapes(x.shape[:-1] if n > 1 else x.shape, y.shape[:-1] if n > 1 else y.shape)
        return np.zeros(shape)
    kmax = int(ks[-1])
    return projector_kernels(kmax, x, y, n, cap) @ sys.multipliers(j, n, kmax)


def kernel_expansion(sys: MultiplierSystem, j: int, y, n: int = 1, cap: int = MULTI_INDEX_CAP) -> HermiteExpansion:
    """``phi_j(sqrt(L))(., y)`` as an expansion: coefficients ``phi_j(sqrt(lambda_mu)) h_mu(y)``."""
    ks = support_index_set(sys, j, n)
    kmax = int(ks[-1]) if ks.size else 0
    idx = multi_indices(n, kmax, cap)
    m = sys.multipliers(j, n, kmax)[idx.sum(axis=1)]
    row = design_matrix(n, kmax, np.asarray(y, dtype=float).reshape(1, n))[0]
    return HermiteExpansion(n, kmax, m * row)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class KernelDecayReport:
    """Outcome of :func:`kernel_decay_diagnostic` at one scale."""

    j: int
    N: int
    eps: float
    C: float
    theta: float
    max_violation: float
    grid_size: int
    argmax: tuple[float, float]

    def to_json_dict(self) -> dict:
        return {
            "j": self.j,
            "N": self.N,
            "eps": self.eps,
            "C": self.C,
            "theta": self.theta,
            "max_violation": self.max_violation,
            "grid_size": self.grid_size,
            "argmax": list(self.argmax),
        }


def log_abs_kernel(sys: MultiplierSystem, j: int, x, y) -> np.ndarray:
    """``log |K_j(x_a, y_b)|`` on the 1-D outer grid ``x`` by ``y`` without underflow."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ks = support_index_set(sys, j, 1)
    if ks.size == 0:
        return np.full((x.size, y.size), -np.inf)
    kmax = int(ks[-1])
    m = sys.multipliers(j, 1, kmax)
    Ax, sx = hermite_table_scaled(kmax, x)
    Ay, sy = hermite_table_scaled(kmax, y)
    with np.errstate(divide="ignore"):
        return np.log(np.abs((Ax * m) @ Ay.T)) + sx[:, None] + sy[None, :]


def log_decay_majorant(x, j: int, eps: float, theta: float) -> np.ndarray:
    """``log e_{eps 4^j}(x)``: 0 inside ``|x|^2 < eps 4^j``, ``-theta |x|^2`` outside."""
    x = np.asarray(x, dtype=float)
    r2 = x * x if x.ndim <= 1 else np.sum(x * x, axis=-1)
    return np.where(r2 < eps * 4.0**j, 0.0, -theta * r2)


def kernel_decay_diagnostic(
    sys: MultiplierSystem,
    j: int,
    N: int = 6,
    eps: float = 5.0,
    points: int = 200,
    extent: float | None = None,
    theta: float | None = None,
) -> KernelDecayReport:
    """Smallest ``C`` with ``|K_j(x,y)| <= C 2^j (1+2^j|x-y|)^-N e(x) e(y)`` on a 1-D grid.

    The grid has ``points`` equispaced nodes on ``[-extent, extent]`` (default
    ``1.5 sqrt(eps) 2^j``) and all ``points^2`` pairs are checked in log space.

    Unless given, ``theta`` is fitted as the largest rate for which no pair
    with a point in the far field ``|x|^2 >= eps 4^j`` needs a constant above
    the one required by the inner pairs.  ``max_violation`` is the largest
    relative excess of ``|K|`` over the bound at the reported ``C`` (zero up
    to rounding when the fit succeeds).
    """
    if not eps > 4:
        raise ValidationError("eps must exceed 4")
    if N < 1:
        raise ValidationError("decay order must be at least 1")
    if extent is None:
        extent = 1.5 * math.sqrt(eps) * 2.0**j
    x = np.linspace(-extent, extent, points)
    log_k = log_abs_kernel(sys, j, x, x)
    if not np.any(np.isfinite(log_k)):
        return KernelDecayReport(j, N, eps, 0.0, float("nan") if theta is None else theta, 0.0, points, (0.0, 0.0))
    base = j * math.log(2.0) - N * np.log1p(2.0**j * np.abs(x[:, None] - x[None, :]))
    far = x * x >= eps * 4.0**j
    if theta is None:
        inner = ~far[:, None] & ~far[None, :]
        log_c_in = np.max((log_k - base)[inner]) if inner.any() else -np.inf
        depth = np.where(far, x * x, 0.0)
        depth = depth[:, None] + depth[None, :]
        mask = (depth > 0) & np.isfinite(log_k)
        if mask.any() and np.isfinite(log_c_in):
            theta = float(max(np.min((log_c_in - log_k[mask] + base[mask]) / depth[mask]), 0.0))
        else:
            theta = 0.0
    ex = log_decay_majorant(x, j, eps, theta)
    log_ratio = log_k - (base + ex[:, None] + ex[None, :])
    a, b = np.unravel_index(np.argmax(log_ratio), log_ratio.shape)
    log_c = float(log_ratio[a, b])
    excess = np.exp(log_ratio - log_c) - 1.0
    return KernelDecayReport(
        j, N, eps, math.exp(log_c), theta, float(max(np.max(excess), 0.0)), points, (float(x[a]), float(x[b]))
    )


def composed_multipliers(sys_a: MultiplierSystem, sys_b: MultiplierSystem, j: int, k: int, n: int = 1) -> np.ndarray:
    """``phi_j(sqrt(lambda_m)) psi_k(sqrt(lambda_m))`` on the union of both index sets."""
    a, b = support_index_set(sys_a, j, n), support_index_set(sys_b, k, n)
    top = max(int(a[-1]) if a.size else 0, int(b[-1]) if b.size else 0)
    return sys_a.multipliers(j, n, top) * sys_b.multipliers(k, n, top)


def orthogonality_check(
    sys_a: MultiplierSystem, sys_b: MultiplierSystem, j: int, k: int, n: int = 1, points: int = 200, extent: float = 10.0
) -> float:
    """Maximum of ``|phi_j(sqrt L) psi_k(sqrt L)(x, y)|`` over a 1-D grid.

    The composition is formed in coefficient space; when every composed
    multiplier vanishes the result is exactly 0.0 without kernel evaluation.
    """
    m = composed_multipliers(sys_a, sys_b, j, k, n)
    if not np.any(m):
        return 0.0
    x = np.linspace(-extent, extent, points)
    if n == 1:
        K = projector_kernels(len(m) - 1, x[:, None], x[None, :], 1) @ m
    else:
        pts = np.zeros((points, n))
        pts[:, 0] = x
        K = projector_kernels(len(m) - 1, pts[:, None, :], pts[None, :, :], n) @ m
    return float(np.max(np.abs(K)))


__all__ = [
    "KINDS",
    "C_FLOOR_MAX",
    "DEFAULT_C_FLOOR",
    "KernelDecayReport",
    "MultiplierSystem",
    "apply_multiplier",
    "build_partition_system",
    "build_system",
    "build_tight_system",
    "closed_form_index_set",
    "composed_multipliers",
    "cutoff",
    "dual_system",
    "kernel_decay_diagnostic",
    "kernel_expansion",
    "log_abs_kernel",
    "log_decay_majorant",
    "max_sharpness",
    "multiplier_kernel",
    "orthogonality_check",
    "smoothstep",
    "support_index_set",
]
