"""Large-time limit experiments for killed Brownian motion in multicone domains.

Each experiment renormalises estimates over a time grid and compares them to a
limit computed independently: closed forms from :mod:`heatlab.cone` or
harmonic-function estimates from :mod:`heatlab.mc`. Targets are never fitted to
the data being tested.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .cone import (ConeKernelSpec, cone_heat_kernel, cone_survival_series, gamma_v,
                   minimal_harmonic_v, truncated_harmonic_w, yaglom_angular_cdf,
                   yaglom_radial_cdf)
from .geometry import MulticoneDomain
from .mc import SimConfig, estimate_kernel_at, estimate_survival, estimate_u, simulate_horizons
from .spectral import SpectralData, spectrum

__all__ = [
    "LimitExperimentReport",
    "YaglomReport",
    "InsufficientSurvivors",
    "maximal_indices",
    "branch_spectra",
    "harmonic_at",
    "kernel_limit_experiment",
    "exit_limit_experiment",
    "yaglom_experiment",
    "decay_exponent",
    "trend_verdict",
    "MAX_DESK_PATHS",
    "MAX_DESK_TIME",
]

MAX_DESK_PATHS = 100_000_000
MAX_DESK_TIME = 1024.0
_MAXIMAL_TOL = 1e-10
TREND_Z = 2.0


class InsufficientSurvivors(RuntimeError):
    pass


def branch_spectra(domain: MulticoneDomain, K: int = 1) -> list[SpectralData]:
    return [spectrum(b.opening, K) for b in domain.branches]


def maximal_indices(domain: MulticoneDomain, spectra: Sequence[SpectralData] | None = None):
    """Branches whose character equals the minimum ``alpha`` (within 1e-10).

    >>> import math
    >>> from heatlab.geometry import Ball, Opening, TruncatedCone
    >>> d = MulticoneDomain(2, (Ball((0.0, 0.0), 1.0),), (
    ...     TruncatedCone((0.0, 0.0), Opening.arc(0, math.pi), 1.0),
    ...     TruncatedCone((0.0, 0.0), Opening.arc(-3 * math.pi / 4, -math.pi / 4), 1.0)))
    >>> maximal_indices(d)
    ((0,), 1.0)
    """
    spectra = branch_spectra(domain) if spectra is None else spectra
    alphas = np.array([s.alpha for s in spectra])
    a = float(alphas.min())
    M = tuple(int(j) for j in np.nonzero(np.abs(alphas - a) <= _MAXIMAL_TOL)[0])
    return M, a


def _is_bare_single(domain: MulticoneDomain) -> bool:
    return not domain.core and domain.n_branches == 1


def harmonic_at(domain: MulticoneDomain, j: int, pts, spectra: Sequence[SpectralData],
                u_cfg: SimConfig | None = None):
    """``u_j`` at each point with a standard error.

    A bare single branch has ``u = w`` (or ``v`` for a vertex cone) in closed
    form; otherwise ``u_j`` is estimated by exit simulation with ``u_cfg``.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    b = domain.branches[j]
    sd = spectra[j]
    if _is_bare_single(domain):
        if b.truncation_radius > 0:
            vals = truncated_harmonic_w(sd, pts, b.truncation_radius, b.a)
        else:
            vals = minimal_harmonic_v(sd, pts, b.a)
        return np.atleast_1d(vals).astype(float), np.zeros(len(pts)), "closed-form"
    if u_cfg is None:
        raise ValueError("u_cfg is required to estimate u_j on a domain with a core")
    est = [estimate_u(domain, j, p, u_cfg, sd) for p in pts]
    return (np.array([e.estimate for e in est]), np.array([e.se for e in est]), "exit-mc")


def trend_verdict(deviations, rel_ci, final_tol: float) -> tuple[bool, bool, bool]:
    """``(pass, final_ok, trend_ok)``.

    ``final_ok``: last deviation within ``final_tol``. ``trend_ok``: over the last
    three grid points each deviation is at most the previous one plus
    ``TREND_Z`` combined relative standard errors of the two points.
    """
    dev = np.asarray(deviations, dtype=float)
    ci = np.asarray(rel_ci, dtype=float)
    final_ok = bool(dev[-1] <= final_tol)
    trend_ok = True
    lo = max(0, dev.size - 3)
    for k in range(lo, dev.size - 1):
        slack = TREND_Z * math.hypot(ci[k], ci[k + 1])
        if dev[k + 1] > dev[k] + slack:
            trend_ok = False
    return final_ok and trend_ok, final_ok, trend_ok


@dataclass
class LimitExperimentReport:
    """Renormalised estimates over a time grid against a predicted limit."""

    name: str
    t_grid: tuple
    estimates: np.ndarray
    se: np.ndarray
    predicted: float
    predicted_se: float
    tolerance: float
    provenance: dict
    extra: dict = field(default_factory=dict)
    status: str = "ok"

    def __post_init__(self) -> None:
        t = np.asarray(self.t_grid, dtype=float)
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("t-grid must be strictly increasing")

    @property
    def deviations(self) -> np.ndarray:
        return np.abs(np.asarray(self.estimates) / self.predicted - 1.0)

    @property
    def rel_ci(self) -> np.ndarray:
        """Relative standard error of each ratio, data and target added in quadrature."""
        est_rel = np.asarray(self.se) / abs(self.predicted)
        return np.hypot(est_rel, self.predicted_se / abs(self.predicted))

    @property
    def verdict(self) -> str:
        if self.status != "ok":
            return self.status.upper()
        ok, _, _ = trend_verdict(self.deviations, self.rel_ci, self.tolerance)
        return "PASS" if ok else "FAIL"

    def verdict_detail(self) -> dict:
        if self.status != "ok":
            return {"verdict": self.verdict}
        ok, fin, trend = trend_verdict(self.deviations, self.rel_ci, self.tolerance)
        return {"verdict": "PASS" if ok else "FAIL", "final_within_tolerance": fin,
                "nonincreasing": trend, "final_deviation": float(self.deviations[-1]),
                "tolerance": self.tolerance}

    def header(self) -> dict:
        return {"experiment": self.name, "predicted": self.predicted,
                "predicted_se": self.predicted_se, **self.verdict_detail(),
                "provenance": self.provenance, "extra": _jsonable(self.extra)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "estimate", "se", "predicted", "deviation", "rel_ci"])
        for row in zip(self.t_grid, self.estimates, self.se, self.deviations, self.rel_ci):
            t, e, s, d, c = row
            w.writerow([repr(float(t)), repr(float(e)), repr(float(s)), repr(float(self.predicted)),
                        repr(float(d)), repr(float(c))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.header(), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _out_of_scale(cfg: SimConfig | None, ts) -> str | None:
    if cfg is None:
        return None
    if cfg.paths > MAX_DESK_PATHS:
        return f"paths={cfg.paths} exceeds the desk-scale ceiling {MAX_DESK_PATHS}"
    if max(ts) > MAX_DESK_TIME:
        return f"t={max(ts)} exceeds the desk-scale ceiling {MAX_DESK_TIME}"
    return None


def _provenance(domain, cfg, **kw) -> dict:
    out = {"domain_hash": domain.digest()}
    if cfg is not None:
        out.update(seed=cfg.seed, config_hash=cfg.digest(), paths=cfg.paths, dt=cfg.dt,
                   dt_min=cfg.floor, bridge=cfg.bridge)
    out.update({k: _jsonable(v) for k, v in kw.items()})
    return out


def _check_grid(ts) -> tuple:
    ts = tuple(float(t) for t in ts)
    if not ts:
        raise ValueError("empty t-grid")
    if any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t-grid must be positive and strictly increasing")
    return ts


# --------------------------------------------------------------- kernel


def kernel_limit_experiment(domain: MulticoneDomain, x, y, t_grid, cfg: SimConfig | None,
                            spectra: Sequence[SpectralData] | None = None,
                            u_cfg: SimConfig | None = None, tolerance: float = 0.10,
                            bandwidth: float | None = None) -> LimitExperimentReport:
    """``t^(1+alpha) p(t, x, y)`` against ``sum_{l in M} u_l(x) u_l(y) / (2^alpha Gamma(1+alpha))``.

    With ``cfg=None`` on a single vertex cone the kernel comes from the Bessel
    series instead of simulation. Otherwise one ensemble from ``x`` is observed
    at every grid time and the kernel is estimated by kernel density at ``y``.
    """
    ts = _check_grid(t_grid)
    spectra = branch_spectra(domain) if spectra is None else list(spectra)
    M, alpha = maximal_indices(domain, spectra)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    norm = math.exp(alpha * math.log(2.0) + gammaln(1.0 + alpha))
    target, var, how = 0.0, 0.0, set()
    for l in M:
        vals, ses, method = harmonic_at(domain, l, np.stack([x, y]), spectra, u_cfg)
        target += vals[0] * vals[1]
        var += (vals[1] * ses[0]) ** 2 + (vals[0] * ses[1]) ** 2
        how.add(method)
    target /= norm
    target_se = math.sqrt(var) / norm
    prov = _provenance(domain, cfg, x=x, y=y, maximal=list(M), alpha=alpha,
                       target_method=sorted(how))
    bad = _out_of_scale(cfg, ts)
    if bad:
        return LimitExperimentReport("kernel-limit", ts, np.full(len(ts), np.nan),
                                     np.full(len(ts), np.nan), target, target_se, tolerance,
                                     prov, {"reason": bad}, status="out_of_desk_scale")
    if cfg is None:
        if not _is_bare_single(domain) or domain.branches[0].truncation_radius > 0:
            raise ValueError("the analytic route needs a single cone with vertex")
        b = domain.branches[0]
        ks = ConeKernelSpec(spectra[0], b.vertex)
        vals = [cone_heat_kernel(ks, t, x, y) for t in ts]
        est = np.array([t ** (1.0 + alpha) * kv.value for t, kv in zip(ts, vals)])
        se = np.array([t ** (1.0 + alpha) * kv.tail_bound for t, kv in zip(ts, vals)])
        prov["route"] = "bessel-series"
        return LimitExperimentReport("kernel-limit", ts, est, se, target, target_se,
                                     tolerance, prov)
    ens = simulate_horizons(domain, x, ts, cfg)
    est, se, bws = [], [], []
    for t in ts:
        k = estimate_kernel_at(ens, y, bandwidth, t)
        s = t ** (1.0 + alpha)
        est.append(s * k.estimate)
        se.append(s * k.se)
        bws.append(k.notes["bandwidth"])
    prov["route"] = "monte-carlo"
    return LimitExperimentReport("kernel-limit", ts, np.array(est), np.array(se), target,
                                 target_se, tolerance, prov,
                                 {"bandwidth": bws, "survivors": [e.shape[0] for e in ens.endpoints],
                                  "total_steps": int(ens.steps.sum())})


# ----------------------------------------------------------------- exit


def decay_exponent(ts, p, se=None) -> tuple[float, float]:
    """Slope of ``log p`` against ``log t`` by (weighted) least squares, with its standard error."""
    lt = np.log(np.asarray(ts, dtype=float))
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("need positive estimates for a log-log fit")
    lp = np.log(p)
    if se is None:
        w = np.ones_like(lp)
    else:
        rel = np.asarray(se, dtype=float) / p
        w = 1.0 / np.maximum(rel, 1e-300) ** 2
    W = w.sum()
    mx = np.sum(w * lt) / W
    my = np.sum(w * lp) / W
    sxx = np.sum(w * (lt - mx) ** 2)
    slope = float(np.sum(w * (lt - mx) * (lp - my)) / sxx)
    if se is None:
        resid = lp - (my + slope * (lt - mx))
        dof = max(lt.size - 2, 1)
        s_err = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    else:
        s_err = math.sqrt(1.0 / sxx)
    return slope, s_err


def exit_limit_experiment(domain: MulticoneDomain, x, t_grid, cfg: SimConfig | None,
                          spectra: Sequence[SpectralData] | None = None,
                          u_cfg: SimConfig | None = None,
                          tolerance: float = 0.10) -> LimitExperimentReport:
    """``t^(kappa/2) P_x(T > t)`` against ``c(kappa, n) sum_{l in M} I_1(l) u_l(x)``.

    ``c(kappa, n) = Gamma((kappa+n)/2) / (2^(kappa/2) Gamma(kappa + n/2))``. The
    report's ``extra['decay_exponent']`` is the log-log slope of the raw
    survival estimates. ``cfg=None`` uses the survival series of a vertex cone.
    """
    ts = _check_grid(t_grid)
    spectra = branch_spectra(domain) if spectra is None else list(spectra)
    M, alpha = maximal_indices(domain, spectra)
    x = np.asarray(x, dtype=float)
    target, var, how = 0.0, 0.0, set()
    for l in M:
        vals, ses, method = harmonic_at(domain, l, x[None, :], spectra, u_cfg)
        g = gamma_v(spectra[l])
        target += g * vals[0]
        var += (g * ses[0]) ** 2
        how.add(method)
    kappa = spectra[M[0]].kappa
    target_se = math.sqrt(var)
    prov = _provenance(domain, cfg, x=x, maximal=list(M), alpha=alpha, kappa=kappa,
                       target_method=sorted(how))
    bad = _out_of_scale(cfg, ts)
    if bad:
        return LimitExperimentReport("exit-limit", ts, np.full(len(ts), np.nan),
                                     np.full(len(ts), np.nan), target, target_se, tolerance,
                                     prov, {"reason": bad}, status="out_of_desk_scale")
    if cfg is None:
        if not _is_bare_single(domain) or domain.branches[0].truncation_radius > 0:
            raise ValueError("the analytic route needs a single cone with vertex")
        ks = ConeKernelSpec(spectra[0], domain.branches[0].vertex)
        sv = [cone_survival_series(ks, t, x) for t in ts]
        raw = np.array([s.value for s in sv])
        raw_se = np.array([s.error for s in sv])
        prov["route"] = "bessel-series"
    else:
        ens = simulate_horizons(domain, x, ts, cfg)
        surv = [estimate_survival(ens, t) for t in ts]
        raw = np.array([s.estimate for s in surv])
        raw_se = np.array([s.se for s in surv])
        prov["route"] = "monte-carlo"
    scale = np.array(ts) ** (0.5 * kappa)
    extra = {"raw": raw, "raw_se": raw_se}
    if len(ts) >= 2 and np.all(raw > 0):
        slope, s_err = decay_exponent(ts, raw, raw_se if cfg is not None else None)
        extra.update(decay_exponent=slope, decay_exponent_se=s_err)
    return LimitExperimentReport("exit-limit", ts, scale * raw, scale * raw_se, target,
                                 target_se, tolerance, prov, extra)


# --------------------------------------------------------------- Yaglom


@dataclass
class YaglomReport:
    """Survivor statistics at a single large time."""

    t: float
    survivors: int
    maximal: tuple
    frequencies: np.ndarray
    frequency_se: np.ndarray
    predicted: np.ndarray
    core_fraction: float
    ks_radial: dict
    ks_angular: dict
    critical: dict
    provenance: dict

    def frequency_ok(self, z: float = 3.0) -> list[bool]:
        """Maximal branches: within ``z`` sigma of the prediction. Others: at most ``2 z`` sigma."""
        out = []
        for j, (f, s, p) in enumerate(zip(self.frequencies, self.frequency_se, self.predicted)):
            if j in self.maximal:
                out.append(bool(abs(f - p) <= z * s))
            else:
                out.append(bool(f <= 2.0 * z * s))
        return out

    def ks_ok(self) -> dict:
        return {j: bool(self.ks_radial[j] <= self.critical[j]) for j in self.ks_radial}

    @property
    def verdict(self) -> str:
        ok = all(self.frequency_ok()) and all(self.ks_ok().values()) and all(
            self.ks_angular[j] <= self.critical[j] for j in self.ks_angular)
        return "PASS" if ok else "FAIL"

    def header(self) -> dict:
        return _jsonable({"experiment": "yaglom", "t": self.t, "survivors": self.survivors,
                          "maximal": list(self.maximal), "verdict": self.verdict,
                          "frequencies": self.frequencies, "frequency_se": self.frequency_se,
                          "predicted": self.predicted, "core_fraction": self.core_fraction,
                          "frequency_ok": self.frequency_ok(),
                          "ks_radial": self.ks_radial, "ks_angular": self.ks_angular,
                          "critical": self.critical, "provenance": self.provenance})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["branch", "frequency", "se", "predicted", "ks_radial", "ks_angular", "critical"])
        for j in range(len(self.frequencies)):
            w.writerow([j, repr(float(self.frequencies[j])), repr(float(self.frequency_se[j])),
                        repr(float(self.predicted[j])),
                        repr(float(self.ks_radial.get(j, float("nan")))),
                        repr(float(self.ks_angular.get(j, float("nan")))),
                        repr(float(self.critical.get(j, float("nan"))))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.header(), sort_keys=True)


KS_CRITICAL_1PCT = 1.63


def yaglom_experiment(domain: MulticoneDomain, x, t: float, cfg: SimConfig,
                      spectra: Sequence[SpectralData] | None = None,
                      u_values: Sequence[float] | None = None,
                      u_cfg: SimConfig | None = None, min_survivors: int = 10_000,
                      ensemble=None) -> YaglomReport:
    """Branch frequencies and rescaled marginals of the survivors at time ``t``.

    Survivor ``B_t`` in branch ``j`` is rescaled to ``(B_t - a_j)/sqrt(t)``. The
    predicted frequency of a maximal branch is ``gamma_j u_j(x) / sum_k gamma_k
    u_k(x)`` over maximal ``k``, and 0 otherwise. ``u_values`` (one per branch)
    may be supplied; else they come from :func:`harmonic_at`. Within each
    maximal branch the radial and angular marginals are compared with the limit
    law by Kolmogorov-Smirnov at the 1% level (critical value ``1.63/sqrt(m)``).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    spectra = branch_spectra(domain) if spectra is None else list(spectra)
    M, alpha = maximal_indices(domain, spectra)
    x = np.asarray(x, dtype=float)
    ens = simulate_horizons(domain, x, [t], cfg) if ensemble is None else ensemble
    h = ens.horizon_index(t)
    pts = ens.endpoints[h]
    tags = ens.endpoint_branch[h]
    m = pts.shape[0]
    if m < min_survivors:
        raise InsufficientSurvivors(f"{m} survivors at t={t}; need {min_survivors}")
    nb = domain.n_branches
    counts = np.array([np.sum(tags == j) for j in range(nb)], dtype=float)
    freq = counts / m
    fse = np.sqrt(freq * (1.0 - freq) / m)
    if len(M) == 1:
        pred = np.zeros(nb)
        pred[M[0]] = 1.0
    else:
        if u_values is None:
            u_values = [float(harmonic_at(domain, l, x[None, :], spectra, u_cfg)[0][0])
                        if l in M else 0.0 for l in range(nb)]
        wts = np.array([gamma_v(spectra[l]) * u_values[l] if l in M else 0.0 for l in range(nb)])
        pred = wts / wts.sum()
    ks_r, ks_a, crit = {}, {}, {}
    for j in M:
        sel = pts[tags == j]
        if sel.shape[0] == 0:
            continue
        b = domain.branches[j]
        rel = (sel - b.a) / math.sqrt(t)
        radii = np.linalg.norm(rel, axis=1)
        ks_r[j] = float(stats.kstest(radii, lambda s, sd=spectra[j]: yaglom_radial_cdf(sd, s)).statistic)
        coords = spectra[j].coordinate(rel)
        ks_a[j] = float(stats.kstest(coords, lambda c, sd=spectra[j]: yaglom_angular_cdf(sd, c)).statistic)
        crit[j] = KS_CRITICAL_1PCT / math.sqrt(sel.shape[0])
    prov = _provenance(domain, cfg, x=x, t=t, maximal=list(M), alpha=alpha)
    return YaglomReport(float(t), m, M, freq, fse, pred, float(np.mean(tags < 0)), ks_r, ks_a,
                        crit, prov)
