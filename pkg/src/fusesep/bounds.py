"""Information-theoretic bound calculators.

Discrete mutual-information identities used to sanity-check the bound
chain, the Laplace source + Gaussian noise mutual information as a double
integral, the ratio curve ``rho(sigma2)``, and the classical/generative
SDR upper bounds.

All mutual information values are in nats.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "BoundError",
    "QuadratureSpec",
    "RhoPoint",
    "BoundInputs",
    "GENERATIVE_GAIN_DB",
    "check_joint",
    "discrete_mi",
    "conditional_mi",
    "chain_rule_check",
    "dpi_check",
    "chain_bound_check",
    "laplace_pdf",
    "mi_laplace_awgn",
    "default_mi_ref",
    "rho",
    "rho_curve",
    "write_rho_csv",
    "classical_sdr_bound",
    "generative_sdr_bound",
]

GENERATIVE_GAIN_DB = 3.0
_NORM_TOL = 1e-12


class BoundError(ValueError):
    pass


# --------------------------------------------------------------- discrete


def check_joint(p, ndim: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if ndim is not None and p.ndim != ndim:
        raise BoundError(f"expected a {ndim}-way table, got {p.ndim} axes")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise BoundError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > _NORM_TOL:
        raise BoundError(f"table sums to {p.sum():.15g}, not 1")
    return p


def _plogp_ratio(p: np.ndarray, q: np.ndarray) -> float:
    m = p > 0
    return float(np.sum(p[m] * np.log(p[m] / q[m])))


def discrete_mi(joint) -> float:
    """I(X;Y) for a 2-D table ``joint[x, y]``."""
    p = check_joint(joint, 2)
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    return _plogp_ratio(p, px * py)


def conditional_mi(joint) -> float:
    """I(X;Y|Z) for a 3-D table ``joint[x, y, z]``."""
    p = check_joint(joint, 3)
    pz = p.sum(axis=(0, 1), keepdims=True)
    pxz = p.sum(axis=1, keepdims=True)
    pyz = p.sum(axis=0, keepdims=True)
    m = p > 0
    num = (p * pz)[m]
    den = (pxz * pyz)[m]
    return float(np.sum(p[m] * np.log(num / den)))


def chain_rule_check(joint) -> tuple[float, float]:
    """Both sides of I(X;Y,Z) = I(X;Z) + I(X;Y|Z) for ``joint[x, y, z]``.

    The left side treats (Y, Z) as one variable; the right side sums the
    marginal and the conditional term.
    """
    p = check_joint(joint, 3)
    nx = p.shape[0]
    lhs = discrete_mi(p.reshape(nx, -1))
    rhs = discrete_mi(p.sum(axis=1)) + conditional_mi(p)
    return lhs, rhs


def _check_kernel(kernel, n_in: int) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != n_in:
        raise BoundError(f"kernel must have {n_in} rows, got shape {k.shape}")
    if np.any(k < 0) or np.any(np.abs(k.sum(axis=1) - 1.0) > _NORM_TOL):
        raise BoundError("kernel rows must be probability vectors")
    return k


def dpi_check(joint_vm, kernel_md) -> tuple[float, float]:
    """Return ``(I(V;M), I(V;D))`` where D is drawn from M via the kernel."""
    p = check_joint(joint_vm, 2)
    k = _check_kernel(kernel_md, p.shape[1])
    return discrete_mi(p), discrete_mi(p @ k)


@dataclass(frozen=True)
class ChainBoundReport:
    i_vm: float
    i_vd: float
    i_vg: float
    i_v_dg: float
    i_vg_given_d: float

    @property
    def holds(self) -> bool:
        tol = 1e-12
        return (
            self.i_vd <= self.i_vm + tol
            and self.i_v_dg <= self.i_vm + self.i_vg_given_d + tol
            and self.i_vg <= 2.0 * self.i_vm + tol
        )


def chain_bound_check(joint_vm, kernel_md, kernel_dg) -> ChainBoundReport:
    """Information quantities for the Markov chain V -> M -> D -> G.

    ``kernel_dg`` is the stochastic map from D to G (the noise of the
    generative model), so G depends on V only through D.
    """
    p = check_joint(joint_vm, 2)
    kmd = _check_kernel(kernel_md, p.shape[1])
    kdg = _check_kernel(kernel_dg, kmd.shape[1])
    p_vd = p @ kmd
    p_vdg = p_vd[:, :, None] * kdg[None, :, :]
    i_vd = discrete_mi(p_vd)
    i_vg = discrete_mi(p_vdg.sum(axis=1))
    i_v_dg = discrete_mi(p_vdg.reshape(p.shape[0], -1))
    # I(V;G|D) with the table ordered (V, G, D)
    i_vg_d = conditional_mi(np.transpose(p_vdg, (0, 2, 1)))
    return ChainBoundReport(discrete_mi(p), i_vd, i_vg, i_v_dg, i_vg_d)


# ------------------------------------------------------ continuous (Laplace)


def laplace_pdf(x):
    """Unit-variance Laplace density, scale ``1/sqrt(2)``."""
    return np.exp(-math.sqrt(2.0) * np.abs(x)) / math.sqrt(2.0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Uniform grid for composite Simpson integration.

    ``x`` spans ``[-x_max, x_max]`` with at least ``n_x`` points and at
    least ``points_per_sigma`` points per noise standard deviation.  The
    observation grid shares the x spacing and extends ``tail_sigmas`` noise
    deviations beyond it; the Gaussian kernel is truncated at that radius.
    """

    x_max: float = 10.0
    tail_sigmas: float = 8.0
    n_x: int = 4001
    points_per_sigma: float = 8.0
    max_points: int = 2_000_001
    min_points: int = 400

    def __post_init__(self):
        if self.n_x < self.min_points:
            raise BoundError(
                f"grid too coarse: need >= {self.min_points} points per axis"
            )

    def refined(self, factor: int = 2) -> "QuadratureSpec":
        return QuadratureSpec(
            self.x_max,
            self.tail_sigmas,
            (self.n_x - 1) * factor + 1,
            self.points_per_sigma * factor,
            self.max_points * factor,
            self.min_points,
        )


def _odd(n: int) -> int:
    return n if n % 2 else n + 1


def _simpson_weights(n: int, h: float) -> np.ndarray:
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def mi_laplace_awgn(sigma2: float, quad: QuadratureSpec | None = None) -> float:
    """I(x; x + n) for unit-variance Laplace x and Gaussian n ~ N(0, sigma2).

    Evaluates the double integral of ``p(x, y) log(p(x, y) / (p(x) p(y)))``
    with ``p(x, y) = N(y - x; sigma2) Laplace(x)``; the marginal ``p(y)`` is
    itself integrated over ``x`` on the same grid.  Both axes use the
    composite Simpson rule.
    """
    if not sigma2 > 0:
        raise BoundError("sigma2 must be positive")
    quad = quad or QuadratureSpec()
    return _mi_laplace_awgn(float(sigma2), quad)


@lru_cache(maxsize=512)
def _mi_laplace_awgn(sigma2: float, quad: QuadratureSpec) -> float:
    sigma = math.sqrt(sigma2)
    n_x = _odd(max(quad.n_x, int(math.ceil(2 * quad.x_max * quad.points_per_sigma / sigma)) + 1))
    if n_x > quad.max_points:
        raise BoundError(
            f"sigma2={sigma2:g} needs {n_x} grid points; raise max_points or sigma2"
        )
    x = np.linspace(-quad.x_max, quad.x_max, n_x)
    h = x[1] - x[0]
    band = int(math.ceil(quad.tail_sigmas * sigma / h))
    n_y = n_x + 2 * band  # y_j = x_0 + (j - band) h
    wx = _simpson_weights(n_x, h)
    wy = _simpson_weights(n_y, h)
    wpx = wx * laplace_pdf(x)

    offsets = np.arange(-band, band + 1)
    log_cond = -0.5 * math.log(2.0 * math.pi * sigma2) - 0.5 * (offsets * h) ** 2 / sigma2
    cond = np.exp(log_cond)

    # y_j - x_i = (j - i - band) h, so offset d pairs x_i with y_{i + d + band}
    py = np.zeros(n_y)
    for k, d in enumerate(offsets):
        py[d + band: d + band + n_x] += cond[k] * wpx
    log_py = np.log(np.maximum(py, np.finfo(float).tiny))
    total = 0.0
    for k, d in enumerate(offsets):
        sl = slice(d + band, d + band + n_x)
        total += float(np.sum(wy[sl] * wpx * cond[k] * (log_cond[k] - log_py[sl])))
    return max(total, 0.0)


def laplace_entropy() -> float:
    # differential entropy of unit-variance Laplace: 1 + ln(2b), b = 1/sqrt(2)
    return 1.0 + math.log(2.0 / math.sqrt(2.0))


@dataclass(frozen=True)
class RhoPoint:
    sigma2: float
    rho: float
    mi: float


def default_mi_ref(n_sources: int = 2, quad: QuadratureSpec | None = None) -> float:
    """Reference I(v; m) for a mixture of ``n_sources`` unit-variance sources.

    The ``n_sources - 1`` interferers are replaced by Gaussian noise of the
    same total variance (the worst case for additive noise), so the value
    is ``mi_laplace_awgn(n_sources - 1)``.  Any ``sigma2`` whose own mutual
    information exceeds it gets ``rho == 1``; in particular ``rho(1e-4)``.
    """
    if n_sources < 2:
        raise BoundError("a mixture needs at least two sources")
    return mi_laplace_awgn(float(n_sources - 1), quad)


def rho(sigma2: float, mi_ref: float | None = None, quad: QuadratureSpec | None = None) -> RhoPoint:
    """``min(1, I(x; x + n) / mi_ref)``."""
    if mi_ref is None:
        mi_ref = default_mi_ref(quad=quad)
    if not (mi_ref > 0 and math.isfinite(mi_ref)):
        raise BoundError("mi_ref must be a positive finite number")
    mi = mi_laplace_awgn(sigma2, quad)
    return RhoPoint(float(sigma2), min(1.0, mi / mi_ref), mi)


def rho_curve(sigma2_grid, mi_ref: float | None = None, quad: QuadratureSpec | None = None) -> list[RhoPoint]:
    grid = np.asarray(sigma2_grid, dtype=np.float64).ravel()
    if grid.size == 0:
        raise BoundError("empty sigma2 grid")
    if mi_ref is None:
        mi_ref = default_mi_ref(quad=quad)
    pts = [rho(s, mi_ref, quad) for s in grid]
    order = np.argsort(grid, kind="stable")
    r = np.array([pts[i].rho for i in order])
    if np.any(np.diff(r) > 1e-12):
        raise BoundError("rho curve is not non-increasing; quadrature too coarse")
    return pts


def write_rho_csv(path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sigma2", "rho", "mi_nats"])
        for p in points:
            w.writerow([repr(p.sigma2), repr(p.rho), repr(p.mi)])


# ------------------------------------------------------------ SDR bounds


@dataclass(frozen=True)
class BoundInputs:
    """Inputs of the classical bound.

    ``length`` and ``width`` in samples, ``var_v`` the source variance and
    ``mi_ref`` the per-segment mutual information between mixture and
    source (used as a dimensionless number).
    """

    length: float
    width: float
    var_v: float
    mi_ref: float

    def __post_init__(self):
        if not self.width > 0 or self.length < self.width:
            raise BoundError("need length >= width > 0")
        if not self.var_v > 0:
            raise BoundError("var_v must be positive")
        if self.mi_ref < 0:
            raise BoundError("mi_ref must be non-negative")


_DB_GRID_BITS = 40


def classical_sdr_bound(b: BoundInputs) -> float:
    """Classical SDR bound in dB.

    The value is snapped to a ``2**-40`` dB grid (about 1e-12 dB) so that
    adding the generative gain is exact in floating point: the difference
    between the two bounds is then exactly ``GENERATIVE_GAIN_DB`` for any
    bound below 4096 dB.
    """
    arg = (b.length / b.width) * b.var_v * b.mi_ref
    if not arg > 0:
        raise BoundError("bound argument must be positive")
    db = 10.0 * math.log10(arg)
    return math.ldexp(round(math.ldexp(db, _DB_GRID_BITS)), -_DB_GRID_BITS)


def generative_sdr_bound(b: BoundInputs) -> float:
    return classical_sdr_bound(b) + GENERATIVE_GAIN_DB


def generative_from_classical(classical_db: float) -> float:
    return float(classical_db) + GENERATIVE_GAIN_DB
