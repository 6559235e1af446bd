"""Dirichlet spectrum of the Laplace-Beltrami operator on an opening.

Planar arcs have closed forms. Polar caps are handled for azimuthally
symmetric (zonal) modes only: ``m(psi) = c * P_nu(cos psi)`` with ``nu`` a root
of ``P_nu(cos theta0) = 0``. The roots come from shooting on the Legendre ODE

    y'' + cot(psi) y' + nu (nu + 1) y = 0,   y(0) = 1, y'(0) = 0,

started just off the pole with the regular hypergeometric series and carried
to the rim with adaptive RK45. The same dense solutions are cached and used to
evaluate the eigenfunctions.

Angles: for an arc, the *opening coordinate* is ``u = theta - theta_a`` in
``[0, L]``; for a cap it is the colatitude ``psi`` from the cap axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import Opening

__all__ = ["SpectralData", "spectrum", "eigenfunction_eval", "MAX_MODES", "ShootingError"]

MAX_MODES = 10_000
_NU_MAX = 200.0
_GRID_STEP = 1e-2
_ROOT_TOL = 1e-12


class ShootingError(RuntimeError):
    """No sign change of the shooting function was found where a root was expected."""


# ------------------------------------------------------------------ 3D caps


def _pole_series(nu, psi):
    """``P_nu(cos psi)`` and its ``psi``-derivative from the series in ``sin^2(psi/2)``."""
    nu = np.asarray(nu, dtype=float)
    x = math.sin(0.5 * psi) ** 2
    if x == 0.0:
        return np.ones_like(nu), np.zeros_like(nu)
    term = np.ones_like(nu)
    val = np.ones_like(nu)
    dval = np.zeros_like(nu)
    for k in range(60):
        term = term * (k - nu) * (k + nu + 1.0) / ((k + 1.0) ** 2) * x
        val = val + term
        dval = dval + (k + 1) * term / x
        if np.all(np.abs(term) < 1e-18 * np.abs(val)):
            break
    return val, dval * 0.5 * math.sin(psi)


def _start_angle(nu_max: float) -> float:
    return min(1e-3, 0.05 / (nu_max + 1.0))


def _shoot(nu, psi_end: float, rtol: float, dense: bool = False):
    """Integrate the Legendre ODE for one or many ``nu`` from the pole to ``psi_end``."""
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    lam = nu * (nu + 1.0)
    psi0 = _start_angle(float(nu.max()))
    y0, dy0 = _pole_series(nu, psi0)
    m = nu.size

    def rhs(psi, state):
        y, dy = state[:m], state[m:]
        return np.concatenate([dy, -dy * (math.cos(psi) / math.sin(psi)) - lam * y])

    sol = solve_ivp(rhs, (psi0, psi_end), np.concatenate([y0, dy0]), method="DOP853",
                    rtol=rtol, atol=rtol * 1e-2, dense_output=dense)
    if not sol.success:
        raise ShootingError(sol.message)
    return sol, psi0


class _ZonalMode:
    """Evaluator of ``P_nu(cos psi)`` on ``[0, psi_end]``, backed by a shared dense solution."""

    def __init__(self, nu: float, row: int, sol, psi0: float, psi_end: float):
        self.nu = nu
        self.row = row
        self.sol = sol
        self.psi0 = psi0
        self.psi_end = psi_end
        m = sol.y.shape[0] // 2
        self.end_value = float(sol.y[row, -1])
        self.end_slope = float(sol.y[m + row, -1])

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        out = np.empty_like(psi)
        near = psi < self.psi0
        if np.any(near):
            out[near] = np.array([_pole_series(self.nu, p)[0] for p in psi[near]]).ravel()
        far = ~near
        if np.any(far):
            out[far] = self.sol.sol(np.minimum(psi[far], self.psi_end))[self.row]
        return out


def _zonal_modes(nus: list[float], psi_end: float) -> tuple[_ZonalMode, ...]:
    sol, psi0 = _shoot(nus, psi_end, rtol=1e-12, dense=True)
    return tuple(_ZonalMode(nu, i, sol, psi0, psi_end) for i, nu in enumerate(nus))


def _modes_at(modes: tuple[_ZonalMode, ...], psi) -> np.ndarray:
    """``out[i, j] = modes[i](psi[j])`` with one dense-output call for all modes."""
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    first = modes[0]
    rows = [m.row for m in modes]
    out = np.empty((len(modes), psi.size))
    near = psi < first.psi0
    if np.any(near):
        nus = np.array([m.nu for m in modes])
        out[:, near] = np.stack([_pole_series(nus, p)[0] for p in psi[near]], axis=1)
    far = ~near
    if np.any(far):
        out[:, far] = first.sol.sol(np.minimum(psi[far], first.psi_end))[rows]
    return out


def _refine_roots(theta0: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Illinois iteration on every bracket at once; one vector shoot per step."""

    def f(nu):
        m = nu.size
        return _shoot(nu, theta0, rtol=1e-12)[0].y[:m, -1]

    lo, hi = lo.copy(), hi.copy()
    flo, fhi = f(lo), f(hi)
    bad = flo * fhi > 0
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ShootingError(f"bracket [{lo[i]}, {hi[i]}] lost its sign change on refinement")
    side = np.zeros(lo.size, dtype=int)
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        prev = mid
        mid = (lo * fhi - hi * flo) / (fhi - flo)
        mid = np.where((mid > lo) & (mid < hi), mid, 0.5 * (lo + hi))
        fm = f(mid)
        left = fm * flo > 0  # root lies in [mid, hi]
        # Illinois: halve the stale end's value when the same side moves twice
        fhi = np.where(left & (side == 1), 0.5 * fhi, fhi)
        flo = np.where(~left & (side == -1), 0.5 * flo, flo)
        lo, flo = np.where(left, mid, lo), np.where(left, fm, flo)
        hi, fhi = np.where(left, hi, mid), np.where(left, fhi, fm)
        side = np.where(left, 1, -1)
        if np.all((np.abs(mid - prev) <= _ROOT_TOL) | (hi - lo <= _ROOT_TOL) | (fm == 0.0)):
            return mid
    raise ShootingError(f"root refinement did not converge on brackets {list(zip(lo, hi))}")


def _cap_roots(theta0: float, count: int) -> list[float]:
    est = (count + 1.0) * math.pi / theta0 + 2.0
    nu_hi = min(_NU_MAX, est)
    while True:
        grid = np.arange(_GRID_STEP / 2, nu_hi + _GRID_STEP, _GRID_STEP)
        sol, _ = _shoot(grid, theta0, rtol=1e-9)
        vals = sol.y[: grid.size, -1]
        flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
        if flips.size >= count or nu_hi >= _NU_MAX:
            break
        nu_hi = min(_NU_MAX, 2.0 * nu_hi)
    if flips.size < count:
        raise ShootingError(f"only {flips.size} sign changes of P_nu(cos {theta0}) found for "
                            f"nu in ({grid[0]}, {grid[-1]}); {count} requested")
    idx = flips[:count]
    return [float(v) for v in _refine_roots(theta0, grid[idx], grid[idx + 1])]


# ----------------------------------------------------------------- container


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues, characters and eigenfunctions of one opening.

    ``m(i, coord)`` evaluates the ``i``-th (1-based) orthonormal eigenfunction at
    the opening coordinate. ``mode_integrals[i-1]`` is the surface integral of
    ``m^i`` over the opening and ``sup_bounds[i-1]`` bounds ``|m^i|``.
    """

    opening: Opening
    eigenvalues: np.ndarray
    characters: np.ndarray
    mode_integrals: np.ndarray
    sup_bounds: np.ndarray
    norms: np.ndarray
    _modes: tuple = field(default=(), repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.opening.dim

    @property
    def K(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def alpha(self) -> float:
        return float(self.characters[0])

    @property
    def kappa(self) -> float:
        return 1.0 + self.alpha - self.n / 2.0

    @property
    def beta(self) -> float:
        return 1.0 + self.alpha + self.n / 2.0

    @property
    def I1(self) -> float:
        return float(self.mode_integrals[0])

    @property
    def nus(self) -> np.ndarray:
        """Cap degrees ``nu`` (n = 3); for arcs, ``k*pi/L``."""
        return self.characters - (self.n / 2.0 - 1.0)

    def coord_max(self) -> float:
        op = self.opening
        return op.theta_b - op.theta_a if self.n == 2 else op.colatitude

    def m(self, i: int, coord) -> np.ndarray:
        if not 1 <= i <= self.K:
            raise IndexError(f"mode {i} outside 1..{self.K}")
        c = np.asarray(coord, dtype=float)
        if self.n == 2:
            L = self.coord_max()
            return self.norms[i - 1] * np.sin(i * math.pi * c / L)
        return self.norms[i - 1] * self._modes[i - 1](c)

    def modes_matrix(self, coord, K: int | None = None) -> np.ndarray:
        """``M[i, j] = m^{i+1}(coord[j])`` for the first ``K`` modes."""
        K = self.K if K is None else K
        c = np.atleast_1d(np.asarray(coord, dtype=float))
        if self.n == 2:
            L = self.coord_max()
            k = np.arange(1, K + 1)[:, None]
            return self.norms[:K, None] * np.sin(k * (math.pi / L) * c[None, :])
        return self.norms[:K, None] * _modes_at(self._modes[:K], c)

    def coordinate(self, rel: np.ndarray) -> np.ndarray:
        """Opening coordinate of points given relative to the vertex (shape ``(..., n)``).

        Points whose direction is outside the closed opening get ``nan``.
        """
        rel = np.asarray(rel, dtype=float)
        axis = self.opening.axis
        dot = rel @ axis
        if self.n == 2:
            cross = rel[..., 0] * axis[1] - rel[..., 1] * axis[0]
            signed = np.arctan2(-cross, dot)  # counter-clockwise from the axis
            L = self.coord_max()
            coord = signed + 0.5 * L
            bad = np.abs(signed) > 0.5 * L + 1e-12
        else:
            cross = np.linalg.norm(np.cross(rel, axis), axis=-1)
            coord = np.arctan2(cross, dot)
            bad = coord > self.opening.colatitude + 1e-12
        coord = np.clip(coord, 0.0, self.coord_max())
        return np.where(bad, np.nan, coord)

    def with_modes(self, K: int) -> "SpectralData":
        """Same opening, ``K`` modes."""
        if K == self.K:
            return self
        return spectrum(self.opening, K)


def spectrum(opening: Opening, K: int) -> SpectralData:
    """First ``K`` Dirichlet eigenpairs of the opening (zonal only for caps).

    >>> sd = spectrum(Opening.arc(0.0, math.pi / 2), 2)
    >>> sd.eigenvalues.tolist(), sd.characters.tolist(), sd.kappa
    ([4.0, 16.0], [2.0, 4.0], 2.0)
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > MAX_MODES:
        raise ValueError(f"K={K} exceeds the supported series length {MAX_MODES}")
    probs = opening.problems()
    if probs:
        raise ValueError("; ".join(probs))
    if opening.dim == 2:
        L = opening.theta_b - opening.theta_a
        k = np.arange(1, K + 1, dtype=float)
        alpha = k * math.pi / L
        norm = math.sqrt(2.0 / L)
        integrals = norm * L / (k * math.pi) * (1.0 - np.cos(k * math.pi))
        return SpectralData(opening, alpha**2, alpha, integrals,
                            np.full(K, norm), np.full(K, norm))

    theta0 = opening.colatitude
    nus = _cap_roots(theta0, K)
    modes = _zonal_modes(nus, theta0)
    xg, wg = np.polynomial.legendre.leggauss(64)
    edges = np.linspace(0.0, theta0, 2 + int(max(nus) * theta0 / 2.0))
    a, b = edges[:-1, None], edges[1:, None]
    psi = (0.5 * (b - a) * xg + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * wg).ravel() * np.sin(psi)
    P = _modes_at(modes, psi)
    norms = 1.0 / np.sqrt(2.0 * math.pi * (P**2 @ w))
    nus_a = np.asarray(nus)
    lam = nus_a * (nus_a + 1.0)
    slopes = np.array([m.end_slope for m in modes])
    # int_{cos theta0}^1 P_nu dx = (1 - x0^2) P_nu'(x0) / lam, with dP/dx = -(dP/dpsi)/sin
    integrals = 2.0 * math.pi * norms * (-math.sin(theta0) * slopes) / lam
    fine = _modes_at(modes, np.linspace(0.0, theta0, 4001))
    sups = 1.02 * norms * np.max(np.abs(fine), axis=1)
    alpha = nus_a + 0.5  # sqrt(lam + 1/4)
    return SpectralData(opening, lam, alpha, integrals, sups, norms, modes)


def eigenfunction_eval(spec: SpectralData, i: int, theta) -> np.ndarray | float:
    """``m^i`` at a direction: polar angle for arcs, colatitude for caps.

    Returns 0 on the edge of the opening; raises for directions outside it.

    >>> sd = spectrum(Opening.arc(0.0, math.pi), 1)
    >>> round(float(eigenfunction_eval(sd, 1, math.pi / 2)), 10)
    0.7978845608
    """
    th = np.asarray(theta, dtype=float)
    if spec.n == 2:
        op = spec.opening
        L = op.theta_b - op.theta_a
        u = np.mod(th - op.theta_a, 2.0 * math.pi)
        # a direction just below theta_a wraps to ~2*pi
        u = np.where(u > 2.0 * math.pi - 1e-12, 0.0, u)
        if np.any(u > L + 1e-12):
            raise ValueError("direction lies outside the closed opening")
        coord = np.minimum(u, L)
    else:
        if np.any(th < -1e-12) or np.any(th > spec.opening.colatitude + 1e-12):
            raise ValueError("colatitude lies outside the closed cap")
        coord = np.clip(th, 0.0, spec.opening.colatitude)
    val = spec.m(i, coord)
    edge = (coord <= 0.0) | (coord >= spec.coord_max()) if spec.n == 2 else coord >= spec.coord_max()
    val = np.where(edge, 0.0, val)
    return val[()] if np.ndim(val) == 0 else val


def direction_coordinate(spec: SpectralData, u: np.ndarray) -> float:
    """Opening coordinate of a single direction vector (helper for scalar callers)."""
    return float(spec.coordinate(np.asarray(u, dtype=float)))

