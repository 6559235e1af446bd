"""Monte Carlo simulation of killed Brownian motion and the estimators built on it."""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..cone import minimal_harmonic_v, truncated_harmonic_w
from ..geometry import MulticoneDomain, Tag, TruncatedCone, classify
from ..spectral import SpectralData
from . import walker
from .rng import seed_key

__all__ = [
    "SimConfig",
    "PathEnsemble",
    "EstimateCI",
    "simulate_paths",
    "simulate_horizons",
    "simulate_exits",
    "estimate_survival",
    "estimate_kernel_at",
    "estimate_w",
    "estimate_u",
    "bridge_crossing_prob",
    "hitting_time_density",
    "hitting_probability",
    "default_workers",
]

CHUNK = 1 << 15


def default_workers() -> int:
    env = os.environ.get("HEATLAB_WORKERS")
    if env:
        try:
            w = int(env)
        except ValueError as exc:
            raise ValueError(f"HEATLAB_WORKERS must be an integer, got {env!r}") from exc
        if w < 1:
            raise ValueError("HEATLAB_WORKERS must be at least 1")
        return w
    return 1


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``dt`` is the largest step; near the boundary steps shrink to
    ``(d/3)^2`` but never below ``dt_min`` (``None`` means ``dt_min = dt``,
    i.e. fixed steps). ``bandwidth`` is the kernel-density bandwidth (``None``
    picks ``0.05 sqrt(t)``, reduced to respect the boundary guard). ``rho`` is
    the stopping radius for harmonic-function estimates. ``workers`` only
    affects speed, never results.
    """

    dt: float = 1e-3
    paths: int = 100_000
    seed: int = 0
    bridge: bool = True
    bandwidth: float | None = None
    rho: float | None = None
    dt_min: float | None = None
    workers: int = 1
    max_steps: int = 100_000_000

    def problems(self) -> list[str]:
        out = []
        if not (self.dt > 0):
            out.append("dt must be positive")
        if self.dt_min is not None and not (0 < self.dt_min <= self.dt):
            out.append("dt_min must lie in (0, dt]")
        if self.paths < 1:
            out.append("paths must be at least 1")
        if not 0 <= self.seed < 2**64:
            out.append("seed must be a 64-bit unsigned integer")
        if self.bandwidth is not None and not self.bandwidth > 0:
            out.append("bandwidth must be positive")
        if self.rho is not None and not self.rho > 0:
            out.append("rho must be positive")
        if self.workers < 1:
            out.append("workers must be at least 1")
        if self.max_steps < 1:
            out.append("max_steps must be at least 1")
        return out

    def check(self) -> None:
        probs = self.problems()
        if probs:
            raise ValueError("; ".join(probs))

    @property
    def floor(self) -> float:
        return self.dt if self.dt_min is None else self.dt_min

    def digest(self) -> str:
        d = asdict(self)
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EstimateCI:
    estimate: float
    se: float
    paths: int
    method: str
    notes: dict = field(default_factory=dict, compare=False)

    def interval(self, z: float = 3.0) -> tuple[float, float]:
        return self.estimate - z * self.se, self.estimate + z * self.se


@dataclass
class PathEnsemble:
    """Per-path outcome of one simulation.

    For each horizon ``horizons[h]``: ``alive[:, h]`` flags survivors, and
    ``endpoints[h]`` / ``endpoint_index[h]`` / ``endpoint_branch[h]`` hold their
    positions, path indices and branch tags (-1 = core) in path-index order.
    ``status``, ``kill_time``, ``kill_piece`` and ``exit_point`` describe how each
    path ended (see :mod:`heatlab.mc.walker` for the codes).
    """

    domain: MulticoneDomain
    x: np.ndarray
    horizons: tuple[float, ...]
    cfg: SimConfig
    alive: np.ndarray
    endpoints: list
    endpoint_index: list
    endpoint_branch: list
    status: np.ndarray
    kill_time: np.ndarray
    kill_piece: np.ndarray
    exit_point: np.ndarray
    steps: np.ndarray
    stop_center: np.ndarray | None = None
    stop_radius: float = 0.0

    @property
    def n_paths(self) -> int:
        return int(self.status.size)

    @property
    def seed(self) -> int:
        return self.cfg.seed

    def horizon_index(self, t: float | None) -> int:
        if not self.horizons:
            raise ValueError("ensemble has no horizons (exit-mode run)")
        if t is None:
            return len(self.horizons) - 1
        for h, s in enumerate(self.horizons):
            if math.isclose(s, t, rel_tol=1e-12, abs_tol=0.0):
                return h
        raise ValueError(f"t={t} is not one of the simulated horizons {self.horizons}")

    def survivors(self, t: float | None = None) -> np.ndarray:
        return self.endpoints[self.horizon_index(t)]

    def summary(self) -> dict:
        out = {
            "paths": self.n_paths,
            "seed": self.cfg.seed,
            "config_hash": self.cfg.digest(),
            "domain_hash": self.domain.digest(),
            "x": [float(c) for c in self.x],
            "horizons": list(self.horizons),
            "total_steps": int(self.steps.sum()),
            "killed": int(np.sum(self.status == walker.KILLED)),
            "stopped": int(np.sum(self.status == walker.STOPPED)),
            "budget_exhausted": int(np.sum(self.status == walker.BUDGET)),
        }
        surv = []
        for h, t in enumerate(self.horizons):
            e = self.endpoints[h]
            surv.append({"t": t, "survivors": int(e.shape[0]),
                         "mean": e.mean(axis=0).tolist() if e.size else None,
                         "second_moment": float(np.mean(np.sum(e * e, axis=1))) if e.size else None})
        out["per_horizon"] = surv
        return out


# ------------------------------------------------------------------ runner


def _start_point(domain: MulticoneDomain, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.dim,):
        raise ValueError(f"start point must have {domain.dim} coordinates")
    loc = classify(domain, x)
    if loc.tag is Tag.OUTSIDE or loc.distance <= 0.0:
        raise ValueError(f"start point {x.tolist()} is on or outside the domain boundary")
    return x


def _run(domain: MulticoneDomain, x: np.ndarray, horizons: np.ndarray, cfg: SimConfig,
         dt_max: float, stop_c: np.ndarray | None, stop_r: float) -> PathEnsemble:
    cfg.check()
    pk = domain.packed()
    n = domain.dim
    H = horizons.size
    N = cfg.paths
    skey = seed_key(cfg.seed)
    sc = np.zeros(n) if stop_c is None else np.asarray(stop_c, dtype=float)
    chunks = [(s, min(CHUNK, N - s)) for s in range(0, N, CHUNK)]

    def work(chunk):
        s, c = chunk
        alive = np.zeros((c, H), dtype=np.bool_)
        pos = np.zeros((c, H, n))
        eb = np.full((c, H), -1, dtype=np.int16)
        status = np.zeros(c, dtype=np.int8)
        kt = np.zeros(c)
        kp = np.zeros(c, dtype=np.int16)
        ep = np.zeros((c, n))
        steps = np.zeros(c, dtype=np.int64)
        walker.run_chunk(s, c, skey, x, horizons, dt_max, cfg.floor, cfg.bridge, sc, stop_r,
                         cfg.max_steps, pk["core_c"], pk["core_r"], pk["br_a"], pk["br_axis"],
                         pk["br_h"], pk["br_R"], pk["br_ext"],
                         alive, pos, eb, status, kt, kp, ep, steps)
        ends = [pos[alive[:, h], h, :] for h in range(H)]
        idx = [s + np.nonzero(alive[:, h])[0] for h in range(H)]
        br = [eb[alive[:, h], h] for h in range(H)]
        return alive, ends, idx, br, status, kt, kp, ep, steps

    if cfg.workers == 1 or len(chunks) == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(work, chunks))  # map keeps chunk order

    cat = np.concatenate
    return PathEnsemble(
        domain=domain, x=x, horizons=tuple(float(h) for h in horizons), cfg=cfg,
        alive=cat([p[0] for p in parts]),
        endpoints=[cat([p[1][h] for p in parts]).reshape(-1, n) for h in range(H)],
        endpoint_index=[cat([p[2][h] for p in parts]) for h in range(H)],
        endpoint_branch=[cat([p[3][h] for p in parts]) for h in range(H)],
        status=cat([p[4] for p in parts]), kill_time=cat([p[5] for p in parts]),
        kill_piece=cat([p[6] for p in parts]), exit_point=cat([p[7] for p in parts]),
        steps=cat([p[8] for p in parts]),
        stop_center=None if stop_c is None else sc, stop_radius=stop_r,
    )


def simulate_horizons(domain: MulticoneDomain, x, ts: Sequence[float], cfg: SimConfig) -> PathEnsemble:
    """One set of paths observed at several horizons (sorted ascending)."""
    ts = np.asarray(ts, dtype=float)
    if ts.ndim != 1 or ts.size == 0:
        raise ValueError("need at least one horizon")
    if np.any(ts <= 0):
        raise ValueError("horizons must be positive")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("horizons must be strictly increasing")
    x = _start_point(domain, x)
    return _run(domain, x, ts, cfg, cfg.dt, None, 0.0)


def simulate_paths(domain: MulticoneDomain, x, t: float, cfg: SimConfig) -> PathEnsemble:
    """``cfg.paths`` killed Brownian paths from ``x`` up to time ``t``.

    Each Euler step is killed if it lands outside the domain, and otherwise
    with the bridge-crossing probability ``exp(-2 d1 d2 / dt)`` built from the
    distance bounds at both ends (when ``cfg.bridge``).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    return simulate_horizons(domain, x, [t], cfg)


def simulate_exits(domain: MulticoneDomain, x, cfg: SimConfig, stop_center=None,
                   stop_radius: float = 0.0) -> PathEnsemble:
    """Run paths until they leave the domain or the stop ball ``B(stop_center, stop_radius)``.

    Steps are ``(d/3)^2`` with floor ``cfg.floor`` and no upper cap, so far from
    the boundary the walk takes large steps.
    """
    x = _start_point(domain, x)
    if stop_radius > 0 and stop_center is None:
        raise ValueError("stop_center is required with a stop radius")
    return _run(domain, x, np.zeros(0), cfg, np.inf,
                None if stop_center is None else np.asarray(stop_center, dtype=float),
                float(stop_radius))


# -------------------------------------------------------------- estimators


def estimate_survival(ens: PathEnsemble, t: float | None = None) -> EstimateCI:
    """Fraction of paths alive at ``t`` (default: last horizon), binomial standard error."""
    h = ens.horizon_index(t)
    N = ens.n_paths
    k = int(ens.endpoints[h].shape[0])
    p = k / N
    return EstimateCI(p, math.sqrt(p * (1.0 - p) / N), N, "binomial",
                      {"t": ens.horizons[h], "survivors": k})


def _guard_distance(domain: MulticoneDomain, y: np.ndarray) -> float:
    loc = classify(domain, y)
    if loc.tag is Tag.OUTSIDE:
        raise ValueError(f"y={y.tolist()} lies outside the domain")
    return loc.distance


def estimate_kernel_at(ens: PathEnsemble, y, bandwidth: float | None = None,
                       t: float | None = None) -> EstimateCI:
    """Gaussian kernel-density estimate of ``p(t, x, y)`` from the surviving endpoints.

    Each path contributes ``phi_h(B_t - y)`` if alive, else 0; the estimate is
    the mean and ``se`` the sample standard deviation over ``sqrt(N)``. The
    bias is ``O(h^2)`` for interior ``y``. The guard requires the distance bound
    at ``y`` to exceed ``2h``; without an explicit bandwidth the default
    ``0.05 sqrt(t)`` is shrunk to ``0.49 d`` when needed.
    """
    h_i = ens.horizon_index(t)
    tt = ens.horizons[h_i]
    y = np.asarray(y, dtype=float)
    d = _guard_distance(ens.domain, y)
    if bandwidth is None:
        bandwidth = ens.cfg.bandwidth
    if bandwidth is None:
        bandwidth = min(0.05 * math.sqrt(tt), 0.49 * d)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if d <= 2.0 * bandwidth:
        raise ValueError(f"y is within 2*bandwidth={2 * bandwidth:g} of the boundary "
                         f"(distance bound {d:g})")
    n = ens.domain.dim
    e = ens.endpoints[h_i]
    r2 = np.sum((e - y) ** 2, axis=1)
    c = np.exp(-0.5 * r2 / bandwidth**2) / (2.0 * math.pi * bandwidth**2) ** (0.5 * n)
    N = ens.n_paths
    mean = float(c.sum() / N)
    second = float(np.sum(c * c) / N)
    var = max(second - mean * mean, 0.0) * N / max(N - 1, 1)
    return EstimateCI(mean, math.sqrt(var / N), N, "gaussian-kde",
                      {"t": tt, "bandwidth": bandwidth})


def estimate_w(cone: TruncatedCone, spec: SpectralData, x, cfg: SimConfig) -> EstimateCI:
    """``w(x) = v(x) - E_x v(B_T)`` on the truncated cone, by exit simulation.

    Lateral exits contribute 0 and base exits ``v(exit point)``. Paths reaching
    the sphere of radius ``cfg.rho`` about the vertex (default ``max(100 R,
    10 |x - a|)``) are stopped and contribute 0; ``notes['rho_bias']`` bounds the
    resulting bias.
    """
    if cone.truncation_radius <= 0:
        raise ValueError("estimate_w needs a truncated cone (R > 0)")
    domain = MulticoneDomain(dim=cone.opening.dim, branches=(cone,))
    x = np.asarray(x, dtype=float)
    a = cone.a
    R = cone.truncation_radius
    rx = float(np.linalg.norm(x - a))
    vx = float(minimal_harmonic_v(spec, x, a))
    if not cone.contains(x) or classify(domain, x).distance <= 0:
        return EstimateCI(0.0, 0.0, 0, "exit-mc", {"on_boundary": True})
    rho = cfg.rho if cfg.rho is not None else max(100.0 * R, 10.0 * rx)
    if rho <= rx:
        raise ValueError("stopping radius must exceed |x - a|")
    ens = simulate_exits(domain, x, cfg, a, rho)
    _check_budget(ens)
    base = (ens.status == walker.KILLED) & (ens.kill_piece == 2)
    vals = np.zeros(ens.n_paths)
    if np.any(base):
        vals[base] = _v_clipped(spec, ens.exit_point[base], a)
    N = ens.n_paths
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    stopped = float(np.mean(ens.status == walker.STOPPED))
    p = 2.0 * spec.kappa + spec.n - 2.0
    bias = stopped * float(spec.sup_bounds[0]) * rho**spec.kappa * (R / rho) ** p
    return EstimateCI(vx - mean, se, N, "exit-mc",
                      {"v": vx, "rho": rho, "stopped_fraction": stopped, "rho_bias": bias})


def _v_clipped(spec: SpectralData, pts: np.ndarray, a: np.ndarray) -> np.ndarray:
    # base exits near the corner can project just outside the opening, where v = 0
    inside = ~np.isnan(spec.coordinate(pts - a))
    out = np.zeros(pts.shape[0])
    if np.any(inside):
        out[inside] = minimal_harmonic_v(spec, pts[inside], a)
    return out


def estimate_u(domain: MulticoneDomain, j: int, x, cfg: SimConfig,
               spectra: Sequence[SpectralData] | SpectralData | None = None) -> EstimateCI:
    """``u_j(x) = E_x[w_j(B_s); B_s in branch j, s < T]``, ``s`` the exit time of ``B(a_j, rho)``.

    ``w_j`` is the closed-form harmonic function of branch ``j``'s truncated
    cone; ``spectra`` supplies branch ``j``'s spectral data (computed with one
    mode when omitted). ``notes['rho_bias']`` is True when ``rho`` is under ten
    times the larger of ``|x - a_j|`` and the truncation radii.
    """
    if not 0 <= j < domain.n_branches:
        raise IndexError(f"branch {j} does not exist")
    b = domain.branches[j]
    rho = cfg.rho
    Rmax = max(br.truncation_radius for br in domain.branches)
    if rho is None or not rho > Rmax:
        raise ValueError("stopping radius rho must exceed every branch truncation radius")
    if isinstance(spectra, SpectralData):
        sd = spectra
    elif spectra is not None:
        sd = spectra[j]
    else:
        from ..spectral import spectrum
        sd = spectrum(b.opening, 1)
    x = np.asarray(x, dtype=float)
    ens = simulate_exits(domain, x, cfg, b.a, rho)
    _check_budget(ens)
    stopped = ens.status == walker.STOPPED
    vals = np.zeros(ens.n_paths)
    if np.any(stopped):
        pts = ens.exit_point[stopped]
        inside = np.array([b.contains(p) for p in pts], dtype=bool)
        sub = np.zeros(pts.shape[0])
        if np.any(inside):
            sub[inside] = truncated_harmonic_w(sd, pts[inside], b.truncation_radius, b.a)
        vals[stopped] = sub
    N = ens.n_paths
    rx = float(np.linalg.norm(x - b.a))
    flag = rho < 10.0 * max(rx, Rmax)
    return EstimateCI(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0,
                      N, "exit-mc", {"rho": rho, "rho_bias": bool(flag),
                                     "stopped_fraction": float(stopped.mean())})


def _check_budget(ens: PathEnsemble) -> None:
    bad = int(np.sum(ens.status == walker.BUDGET))
    if bad:
        raise RuntimeError(f"{bad} paths exhausted the step budget of {ens.cfg.max_steps}; "
                           "check dt_min and the geometry")


# -------------------------------------------------------------- formulas


def bridge_crossing_prob(d1, d2, dt):
    """Probability that a Brownian bridge over ``dt`` crosses a plane at distances ``d1, d2``.

    >>> round(float(bridge_crossing_prob(1.0, 1.0, 1.0)), 7)
    0.1353353
    """
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if np.any(d1 < 0) or np.any(d2 < 0):
        raise ValueError("distances must be nonnegative")
    if np.any(dt <= 0):
        raise ValueError("dt must be positive")
    out = np.clip(np.exp(-2.0 * d1 * d2 / dt), 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def hitting_time_density(r, mu, t):
    """``r / sqrt(2 pi t^3) exp(-(r + mu t)^2 / (2t))``.

    This is the first-passage density at distance ``r`` for Brownian motion
    drifting away from the target at speed ``mu``; its total mass is
    :func:`hitting_probability`.
    """
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    out = r / np.sqrt(2.0 * np.pi * t**3) * np.exp(-((r + mu * t) ** 2) / (2.0 * t))
    return out[()] if out.ndim == 0 else out


def hitting_probability(r, mu):
    """Total mass of :func:`hitting_time_density`: ``exp(-2 r mu)`` for ``mu >= 0``, else 1."""
    r = np.asarray(r, dtype=float)
    mu = np.asarray(mu, dtype=float)
    out = np.where(mu > 0, np.exp(-2.0 * r * np.maximum(mu, 0.0)), 1.0)
    return out[()] if out.ndim == 0 else out

