r"""Modified Bessel function of the first kind, :math:`I_\nu(z)`, real order and argument.

Two regimes, both vectorised over ``nu`` and ``z``:

* ``z <= 30``: the ascending power series
  :math:`\sum_k (z/2)^{2k+\nu} / (k!\,\Gamma(k+\nu+1))`. All terms are
  positive, so the sum is accurate to a few ulps.
* ``z > 30``: the Debye uniform asymptotic expansion. It is written in terms of
  :math:`s = \sqrt{\nu^2 + z^2}` so that :math:`\nu = 0` needs no special case.

The heat kernel needs :math:`I_\nu(z)\,e^{-z}` for large ``z``, hence the
exponentially scaled variant :func:`bessel_ie` is the workhorse and
:func:`bessel_i` is a thin wrapper.

Note: some texts write :math:`J_\nu` for this function; here it is always
:math:`I_\nu`.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

__all__ = ["bessel_i", "bessel_ie", "log_bessel_lower_bound", "SERIES_CUTOFF"]

SERIES_CUTOFF = 30.0
_N_DEBYE = 16


@lru_cache(maxsize=1)
def _debye_coefficients() -> list[list[tuple[int, float]]]:
    """Coefficients of the Debye polynomials ``U_k(p)`` as ``[(power, coef), ...]``.

    Uses the recursion (DLMF 10.41.9)
    ``U_{k+1}(p) = p^2 (1-p^2) U_k'(p) / 2 + 1/8 * int_0^p (1 - 5 t^2) U_k(t) dt``
    in exact rational arithmetic.
    """
    polys: list[dict[int, Fraction]] = [{0: Fraction(1)}]
    for _ in range(_N_DEBYE):
        u = polys[-1]
        nxt: dict[int, Fraction] = {}
        for m, c in u.items():
            if m > 0:
                d = c * m  # derivative term c*m*p^(m-1), times p^2(1-p^2)/2
                nxt[m + 1] = nxt.get(m + 1, Fraction(0)) + d / 2
                nxt[m + 3] = nxt.get(m + 3, Fraction(0)) - d / 2
            # (1/8) int_0^p (1 - 5t^2) c t^m dt
            nxt[m + 1] = nxt.get(m + 1, Fraction(0)) + c / (8 * (m + 1))
            nxt[m + 3] = nxt.get(m + 3, Fraction(0)) - 5 * c / (8 * (m + 3))
        polys.append({m: c for m, c in nxt.items() if c != 0})
    return [sorted((m, float(c)) for m, c in p.items()) for p in polys]


def _series_scaled(nu: np.ndarray, z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    zero = z == 0.0
    out[zero] = np.where(nu[zero] == 0.0, 1.0, 0.0)
    live = ~zero
    if not np.any(live):
        return out
    nu_l, z_l = nu[live], z[live]
    q = 0.25 * z_l * z_l
    with np.errstate(divide="ignore"):  # 0.5 * z can underflow for subnormal z
        log_first = nu_l * np.log(0.5 * z_l) - gammaln(nu_l + 1.0) - z_l
    term = np.ones_like(z_l)
    total = np.ones_like(z_l)
    k = 0
    active = np.ones(z_l.shape, dtype=bool)
    while np.any(active):
        k += 1
        term = term * q / (k * (k + nu_l))
        total = total + term
        active = term > 1e-17 * total
        if k > 500:  # cannot happen for z <= 30
            break
    with np.errstate(under="ignore"):
        out[live] = total * np.exp(log_first)
    return out


def _debye_scaled(nu: np.ndarray, z: np.ndarray) -> np.ndarray:
    s = np.hypot(nu, z)
    # s - z written without cancellation
    log_pref = nu * nu / (s + z) + nu * np.log(z / (nu + s)) - 0.5 * np.log(2.0 * np.pi * s)
    ratio = nu / s
    total = np.ones_like(z)
    inv_s = 1.0 / s
    for k, poly in enumerate(_debye_coefficients()[1:], start=1):
        # U_k(p)/nu^k = sum_m c_m p^m / nu^k = sum_m c_m (nu/s)^(m-k) s^(-k)
        acc = np.zeros_like(z)
        for m, c in poly:
            acc = acc + c * ratio ** (m - k)
        total = total + acc * inv_s**k
    return np.exp(log_pref) * total


def bessel_ie(nu, z):
    r"""Exponentially scaled Bessel function :math:`I_\nu(z) e^{-z}`.

    Parameters
    ----------
    nu, z : array_like
        Order and argument, broadcast together; both must be nonnegative.

    Returns
    -------
    ndarray or float
    """
    nu_a = np.asarray(nu, dtype=float)
    z_a = np.asarray(z, dtype=float)
    if np.any(nu_a < 0) or np.any(z_a < 0):
        raise ValueError("bessel_i requires nonnegative order and argument")
    if np.any(~np.isfinite(nu_a)) or np.any(~np.isfinite(z_a)):
        raise ValueError("bessel_i requires finite order and argument")
    nu_b, z_b = np.broadcast_arrays(nu_a, z_a)
    nu_f = nu_b.ravel()
    z_f = z_b.ravel()
    out = np.empty_like(z_f)
    small = z_f <= SERIES_CUTOFF
    if np.any(small):
        out[small] = _series_scaled(nu_f[small], z_f[small])
    if np.any(~small):
        out[~small] = _debye_scaled(nu_f[~small], z_f[~small])
    out = out.reshape(z_b.shape)
    return out[()] if out.ndim == 0 else out


def bessel_i(nu, z):
    r"""Modified Bessel function of the first kind :math:`I_\nu(z)`.

    Relative accuracy is about 1e-13 for ``z <= 30`` and better than 1e-10
    beyond. Overflows to ``inf`` once :math:`I_\nu(z)` exceeds the double range
    (roughly ``z > 700``); use :func:`bessel_ie` there.

    >>> round(float(bessel_i(0.5, 1.0)), 10)
    0.9376748882
    """
    z_a = np.asarray(z, dtype=float)
    scaled = bessel_ie(nu, z_a)
    with np.errstate(over="ignore"):
        out = scaled * np.exp(z_a)
    return out[()] if np.ndim(out) == 0 else out


def log_bessel_lower_bound(nu, z):
    r"""Logarithm of :math:`z^\nu / (2^\nu \Gamma(1+\nu))`.

    This is the lower edge of the sandwich
    :math:`z^\nu/(2^\nu\Gamma(1+\nu)) \le I_\nu(z) \le e^z z^\nu/(2^\nu\Gamma(1+\nu))`;
    the upper edge is the same quantity plus ``z``.
    """
    nu_a = np.asarray(nu, dtype=float)
    z_a = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logz = np.where(z_a > 0, np.log(np.where(z_a > 0, z_a, 1.0) / 2.0), -np.inf)
        out = np.where(nu_a == 0.0, 0.0, nu_a * logz) - gammaln(nu_a + 1.0)
    return out[()] if np.ndim(out) == 0 else out
