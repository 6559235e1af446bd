"""Closed-form quantities on an infinite cone ``V = {a + r u : r > 0, u in D}``.

Polar coordinates are taken about the vertex ``a``: ``r = |x - a|`` and the
opening coordinate of ``(x - a)/r`` (see :class:`SpectralData.coordinate`).

The Dirichlet heat kernel is the Bessel series

    p(t, x, y) = t^-1 (r rho)^(1 - n/2) exp(-(r^2 + rho^2)/(2t))
                 * sum_i I_{alpha_i}(r rho / t) m^i(theta) m^i(omega),

evaluated with the scaled Bessel function so that the exponentials combine
into ``exp(-(r - rho)^2/(2t))``. Truncation uses the majorant
``I_nu(z) e^-z <= (z/2)^nu / Gamma(1 + nu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammainc, gammaln

from .bessel import bessel_ie
from .spectral import MAX_MODES, SpectralData

__all__ = [
    "ConeKernelSpec",
    "KernelValue",
    "SurvivalValue",
    "cone_heat_kernel",
    "minimal_harmonic_v",
    "truncated_harmonic_w",
    "gamma_v",
    "vertex_kernel_limit",
    "cone_survival_series",
    "yaglom_density_cone",
    "yaglom_radial_cdf",
    "yaglom_angular_cdf",
    "SeriesError",
]

_AXIS_TOL = 1e-12


class SeriesError(RuntimeError):
    """A series or quadrature could not reach the requested accuracy."""


@dataclass(frozen=True)
class ConeKernelSpec:
    """Kernel evaluation settings.

    ``K`` caps the number of series terms (the actual count is chosen per call
    from the tail majorant); ``eps`` is the absolute target for that majorant.
    Planar openings may use up to ``MAX_MODES`` terms whatever ``spectral.K``
    is, since their modes are closed form. Caps are limited to ``spectral.K``.
    """

    spectral: SpectralData
    vertex: tuple = ()
    K: int = MAX_MODES
    eps: float = 1e-12

    def __post_init__(self) -> None:
        n = self.spectral.n
        v = tuple(float(c) for c in self.vertex) if len(self.vertex) else (0.0,) * n
        if len(v) != n:
            raise ValueError(f"vertex must have {n} coordinates")
        object.__setattr__(self, "vertex", v)
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.vertex)

    @property
    def max_terms(self) -> int:
        if self.spectral.n == 2:
            return min(self.K, MAX_MODES)
        return min(self.K, self.spectral.K)


class KernelValue(NamedTuple):
    value: float | np.ndarray
    tail_bound: float | np.ndarray
    terms: int


class SurvivalValue(NamedTuple):
    value: float
    error: float
    terms: int


# ------------------------------------------------------------------ helpers


def _polar(sd: SpectralData, vertex: np.ndarray, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Radius, opening coordinate and a boundary mask for points of the closed cone."""
    p = np.asarray(pts, dtype=float)
    if p.shape[-1] != sd.n:
        raise ValueError(f"points must have {sd.n} coordinates")
    rel = p - vertex
    r = np.linalg.norm(rel, axis=-1)
    coord = sd.coordinate(rel)
    if np.any(np.isnan(coord) & (r > 0)):
        raise ValueError("point lies outside the closed cone")
    coord = np.where(np.isnan(coord), 0.0, coord)
    edge = coord >= sd.coord_max()
    if sd.n == 2:
        edge |= coord <= 0.0
    return r, coord, edge | (r == 0.0)


def _alphas_sups(sd: SpectralData, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Characters and sup bounds for ``count`` modes; caps are extrapolated past ``sd.K``.

    Beyond the computed cap modes the gaps are taken as 0.9 * pi/theta0 (the
    asymptotic spacing of Legendre roots) and the sup bounds grow like
    ``sqrt(alpha)`` with a 20% margin; both only feed the truncation majorant.
    """
    if sd.n == 2:
        L = sd.coord_max()
        k = np.arange(1, count + 1, dtype=float)
        return k * math.pi / L, np.full(count, math.sqrt(2.0 / L))
    K = min(count, sd.K)
    al = sd.characters[:K].copy()
    sup = sd.sup_bounds[:K].copy()
    if count > K:
        j = np.arange(1, count - K + 1, dtype=float)
        extra = al[-1] + 0.9 * j * math.pi / sd.coord_max()
        al = np.concatenate([al, extra])
        sup = np.concatenate([sup, 1.2 * sup[-1] * np.sqrt(extra / al[K - 1])])
    return al, sup


def _modes(sd: SpectralData, coord: np.ndarray, K: int) -> np.ndarray:
    if sd.n == 2:
        L = sd.coord_max()
        k = np.arange(1, K + 1, dtype=float)[:, None]
        return math.sqrt(2.0 / L) * np.sin(k * (math.pi / L) * coord[None, :])
    return sd.modes_matrix(coord, K)


def _tail_table(log_pref: np.ndarray, z: np.ndarray, alphas: np.ndarray,
                sups: np.ndarray) -> np.ndarray:
    """``T[k] = max_p sum_{i >= k} majorant_i(p)``, for ``k = 0..len(alphas)``."""
    out = np.zeros(alphas.size + 1)
    lg = -gammaln(1.0 + alphas) + 2.0 * np.log(sups)
    for s in range(0, z.size, 256):
        zc, pc = z[s:s + 256], log_pref[s:s + 256]
        with np.errstate(divide="ignore"):
            lz = np.log(0.5 * zc)
        logs = pc[:, None] + alphas[None, :] * lz[:, None] + lg[None, :]
        with np.errstate(over="ignore"):  # inf just means "not yet converged"
            terms = np.exp(logs)
            rev = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1]
        out[:-1] = np.maximum(out[:-1], rev.max(axis=0))
    return out


# ------------------------------------------------------------------ kernel


def cone_heat_kernel(spec: ConeKernelSpec, t: float, x, y) -> KernelValue:
    """Dirichlet heat kernel of the cone.

    ``y`` may be a single point or an array of points (last axis = coordinates);
    ``value`` and ``tail_bound`` follow its shape. For caps, ``x`` or every
    ``y`` must lie on the cap axis, where the zonal modes carry the whole
    series.

    >>> from heatlab.geometry import Opening
    >>> from heatlab.spectral import spectrum
    >>> ks = ConeKernelSpec(spectrum(Opening.arc(0.0, math.pi), 1))
    >>> round(float(cone_heat_kernel(ks, 1.0, (0, 1), (0, 1)).value), 6)
    0.137616
    """
    if not t > 0:
        raise ValueError("t must be positive")
    sd = spec.spectral
    n = sd.n
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    r, cx, ex = _polar(sd, spec.a, x[None, :])
    rho, cy, ey = _polar(sd, spec.a, Y)
    if n == 3 and not (cx[0] <= _AXIS_TOL or np.all((cy <= _AXIS_TOL) | ey)) and not ex[0]:
        raise ValueError("cap kernels need x or y on the cap axis (zonal modes only)")

    value = np.zeros(Y.shape[0])
    tail = np.zeros(Y.shape[0])
    live = ~ey & ~ex[0]
    if not np.any(live):
        return _pack(value, tail, 0, single)
    rl = rho[live]
    rr = r[0] * rl
    z = rr / t
    log_pref = -math.log(t) + (1.0 - 0.5 * n) * np.log(rr) - (r[0] - rl) ** 2 / (2.0 * t)

    kmax = spec.max_terms
    zmax = float(z.max())
    cand = 32 if n == 2 else kmax + 64
    while True:
        al_all, sup_all = _alphas_sups(sd, cand)
        table = _tail_table(log_pref, z, al_all, sup_all)
        ok = np.nonzero(table[1:] <= spec.eps)[0]
        # past alpha > z the majorant terms shrink at least geometrically,
        # so the candidate list is long enough once it reaches that regime
        if ok.size and al_all[-1] >= zmax and ok[0] + 1 <= cand // 2:
            K = int(ok[0]) + 1
            break
        if cand >= 4 * MAX_MODES:
            raise SeriesError(f"kernel tail bound {table[min(kmax, cand)]:.3g} exceeds "
                              f"eps={spec.eps:g}; required K is beyond {cand}")
        cand *= 2
    if K > kmax:
        raise SeriesError(f"kernel tail bound needs K={K} terms but at most {kmax} are allowed")

    al = al_all[:K]
    mx = _modes(sd, cx, K)[:, 0]
    my = _modes(sd, cy[live], K)
    ie = bessel_ie(al[:, None], z[None, :])
    terms = ie * (mx[:, None] * my)
    value[live] = np.exp(log_pref) * np.sum(terms, axis=0)
    with np.errstate(divide="ignore"):
        lz = np.log(0.5 * z)
    logs = (log_pref[:, None] + al_all[None, K:] * lz[:, None]
            - gammaln(1.0 + al_all[None, K:]) + 2.0 * np.log(sup_all[None, K:]))
    tl = np.exp(logs).sum(axis=1)
    tail[live] = tl
    return _pack(value, tail, K, single)


def _pack(value, tail, K, single) -> KernelValue:
    if single:
        return KernelValue(float(value[0]), float(tail[0]), K)
    return KernelValue(value, tail, K)


def vertex_kernel_limit(sd: SpectralData, x, y, vertex=None) -> float:
    """Large-time limit of ``t^(1+alpha) p(t, x, y)``: ``v(x) v(y) / (2^alpha Gamma(1+alpha))``."""
    a = sd.alpha
    return float(minimal_harmonic_v(sd, x, vertex) * minimal_harmonic_v(sd, y, vertex)
                 / (2.0**a * math.gamma(1.0 + a)))


# ------------------------------------------------------------- harmonic fns


def _vertex(sd: SpectralData, vertex) -> np.ndarray:
    return np.zeros(sd.n) if vertex is None else np.asarray(vertex, dtype=float)


def minimal_harmonic_v(sd: SpectralData, x, vertex=None):
    """``v(x) = r^kappa m^1(theta)``, the positive harmonic function of the cone.

    Vanishes on the boundary; vectorised over points.

    >>> from heatlab.geometry import Opening
    >>> from heatlab.spectral import spectrum
    >>> round(float(minimal_harmonic_v(spectrum(Opening.arc(0, math.pi / 2), 1), (1, 1))), 7)
    2.2567583
    """
    r, coord, edge = _polar(sd, _vertex(sd, vertex), x)
    out = np.where(edge, 0.0, r**sd.kappa * sd.m(1, coord))
    return out[()] if out.ndim == 0 else out


def truncated_harmonic_w(sd: SpectralData, x, truncation_radius: float = 1.0, vertex=None):
    """Positive harmonic function of the truncated cone ``{r > R}``, zero on its boundary.

    ``w = (r^kappa - R^(2 kappa + n - 2) r^-(kappa + n - 2)) m^1(theta)``. The second
    term equals ``E_x v(B_T)`` for the exit point of the truncated cone, and
    ``w / v -> 1`` as ``r -> inf``. Points with ``r <= R`` give 0.
    """
    R = float(truncation_radius)
    if R <= 0:
        raise ValueError("truncation radius must be positive")
    v = np.asarray(minimal_harmonic_v(sd, x, vertex), dtype=float)
    r = np.linalg.norm(np.asarray(x, dtype=float) - _vertex(sd, vertex), axis=-1)
    p = sd.kappa
    q = p + sd.n - 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 1.0 - (R / r) ** (p + q)
    out = np.where(r > R, v * ratio, 0.0)
    return out[()] if out.ndim == 0 else out


def gamma_v(sd: SpectralData) -> float:
    """``Gamma((kappa+n)/2) / (2^(kappa/2) Gamma(kappa + n/2)) * int m^1``.

    >>> from heatlab.geometry import Opening
    >>> from heatlab.spectral import spectrum
    >>> round(gamma_v(spectrum(Opening.arc(0, math.pi), 1)), 12)
    1.0
    """
    k, n = sd.kappa, sd.n
    log_c = gammaln(0.5 * (k + n)) - 0.5 * k * math.log(2.0) - gammaln(k + 0.5 * n)
    return float(math.exp(log_c) * sd.I1)


# ---------------------------------------------------------------- survival

_GL_HI = np.polynomial.legendre.leggauss(20)
_GL_LO = np.polynomial.legendre.leggauss(14)


def _radial_nodes(r: float, t: float, rule) -> tuple[np.ndarray, np.ndarray]:
    s = math.sqrt(t)
    lo, hi = max(0.0, r - 13.0 * s), r + 13.0 * s
    edges = list(np.linspace(lo, hi, 53))
    if lo == 0.0:
        first = edges[1]
        edges = [0.0] + [first * 2.0**-k for k in range(24, 0, -1)] + edges[1:]
    e = np.asarray(edges)
    a, b = e[:-1, None], e[1:, None]
    xg, wg = rule
    nodes = (0.5 * (b - a) * xg[None, :] + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * wg[None, :]).ravel()
    return nodes, weights


def _radial_integrals(alphas: np.ndarray, n: int, r: float, t: float, rule) -> np.ndarray:
    """``R_i = int_0^inf t^-1 (r rho)^(1-n/2) e^{-(r-rho)^2/2t} Ie(alpha_i, r rho/t) rho^(n-1) d rho``."""
    rho, w = _radial_nodes(r, t, rule)
    keep = rho > 0
    rho, w = rho[keep], w[keep]
    z = r * rho / t
    base = w * np.exp(-(r - rho) ** 2 / (2.0 * t) + (1.0 - 0.5 * n) * np.log(r * rho)
                      + (n - 1.0) * np.log(rho)) / t
    return bessel_ie(alphas[:, None], z[None, :]) @ base


def cone_survival_series(spec: ConeKernelSpec, t: float, x, tol: float = 1e-6) -> SurvivalValue:
    """``P_x(T > t)`` for Brownian motion killed on the cone boundary.

    Integrates the kernel series term by term: the angular integral of ``m^i``
    is exact, the radial Bessel integral uses composite Gauss-Legendre panels.
    ``error`` combines the difference of two quadrature orders with the size of
    the last series block. Only modes with a nonzero integral contribute, so
    cap openings need zonal modes only.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    sd = spec.spectral
    n = sd.n
    r_a, c_a, e_a = _polar(sd, spec.a, np.asarray(x, dtype=float)[None, :])
    if e_a[0]:
        return SurvivalValue(0.0, 0.0, 0)
    r, coord = float(r_a[0]), c_a
    zmax = r * (r + 13.0 * math.sqrt(t)) / t
    limit = spec.max_terms
    total, err, done, block = 0.0, 0.0, 0, 64
    while True:
        hi_k = min(done + block, limit)
        al, sup = _alphas_sups(sd, hi_k)
        al, sup = al[done:], sup[done:]
        if n == 2:
            L = sd.coord_max()
            k = np.arange(done + 1, hi_k + 1, dtype=float)
            ci = math.sqrt(2.0 / L) * L / (k * math.pi) * (1.0 - np.cos(k * math.pi))
        else:
            ci = sd.mode_integrals[done:hi_k]
        mi = _modes(sd, coord, hi_k)[done:, 0]
        R_hi = _radial_integrals(al, n, r, t, _GL_HI)
        R_lo = _radial_integrals(al, n, r, t, _GL_LO)
        total += float(np.sum(ci * mi * R_hi))
        err += float(np.sum(np.abs(ci * mi * (R_hi - R_lo))))
        size = float(np.max(np.abs(ci) * sup * R_hi))
        done = hi_k
        if size < 1e-15 and al[-1] > 0.5 * zmax:
            break
        if done >= limit:
            # terms fall off faster than geometrically once alpha > zmax
            err += 10.0 * float(abs(ci[-1]) * sup[-1] * R_hi[-1])
            break
    if err > tol:
        raise SeriesError(f"survival series reached error {err:.3g} > {tol:g} with {done} modes")
    return SurvivalValue(min(max(total, 0.0), 1.0), err, done)


# ------------------------------------------------------------------ Yaglom


def yaglom_density_cone(sd: SpectralData, y, vertex=None):
    """Density ``v(y) e^{-|y|^2/2} / (gamma_V 2^alpha Gamma(1+alpha))`` of the Yaglom limit.

    >>> from heatlab.geometry import Opening
    >>> from heatlab.spectral import spectrum
    >>> round(float(yaglom_density_cone(spectrum(Opening.arc(0, math.pi), 1), (0, 1))), 7)
    0.2419707
    """
    a = sd.alpha
    v = np.asarray(minimal_harmonic_v(sd, y, vertex), dtype=float)
    rel = np.asarray(y, dtype=float) - _vertex(sd, vertex)
    r2 = np.sum(rel * rel, axis=-1)
    out = v * np.exp(-0.5 * r2) / (gamma_v(sd) * 2.0**a * math.gamma(1.0 + a))
    return out[()] if out.ndim == 0 else out


def yaglom_radial_cdf(sd: SpectralData, s):
    """CDF of ``|Y|`` under the Yaglom limit: ``|Y|^2/2 ~ Gamma((kappa + n)/2)``."""
    s = np.asarray(s, dtype=float)
    out = gammainc(0.5 * (sd.kappa + sd.n), 0.5 * np.maximum(s, 0.0) ** 2)
    return out[()] if out.ndim == 0 else out


def yaglom_angular_cdf(sd: SpectralData, coord):
    """CDF of the opening coordinate under the Yaglom limit (density ``m^1 / I_1``)."""
    c = np.clip(np.asarray(coord, dtype=float), 0.0, sd.coord_max())
    if sd.n == 2:
        out = 0.5 * (1.0 - np.cos(math.pi * c / sd.coord_max()))
    else:
        grid = np.linspace(0.0, sd.coord_max(), 4001)
        dens = sd.m(1, grid) * np.sin(grid) * 2.0 * math.pi
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        out = np.interp(c, grid, cum / cum[-1])
    return out[()] if np.ndim(out) == 0 else out
