"""Acceptance criteria, one test per criterion.

Each test records a ``criterion N: PASS|FAIL ...`` line; the lines are printed
in the pytest terminal summary (and directly when run as a script). Heavy
Monte Carlo ensembles are shared between criteria through module fixtures.
Seeds are fixed constants.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from conftest import two_arm_domain
from heatlab.asymptotics import exit_limit_experiment, kernel_limit_experiment, yaglom_experiment
from heatlab.bessel import bessel_i, log_bessel_lower_bound
from heatlab.cone import (ConeKernelSpec, cone_heat_kernel, cone_survival_series, gamma_v,
                          minimal_harmonic_v, yaglom_density_cone)
from heatlab.geometry import MulticoneDomain, Opening
from heatlab.mc import SimConfig, estimate_survival, simulate_horizons, simulate_paths
from heatlab.spectral import spectrum

RESULTS = {}

HALF_SD = spectrum(Opening.arc(0.0, math.pi), 1)
QUARTER_SD = spectrum(Opening.arc(0.0, math.pi / 2), 1)
HALF = MulticoneDomain.single_cone(Opening.arc(0.0, math.pi))
QUARTER = MulticoneDomain.single_cone(Opening.arc(0.0, math.pi / 2))
TRUNC = MulticoneDomain.single_cone(Opening.arc(0.0, math.pi), 1.0)

SEED = 2026
BIG = 10_000_000


def record(k, ok, elapsed, limit, detail):
    ok = bool(ok and elapsed < limit)
    line = (f"criterion {k}: {'PASS' if ok else 'FAIL'}  ({elapsed:.1f}s of {limit:g}s)  {detail}")
    RESULTS[k] = line
    print(line)
    return ok


def _half_ref(t, x, y):
    g = lambda d2: np.exp(-d2 / (2 * t)) / (2 * math.pi * t)
    ys = y * np.array([1.0, -1.0])
    return g(np.sum((x - y) ** 2)) - g(np.sum((x - ys) ** 2))


def _half_line(t, a, b):
    return (math.exp(-(a - b) ** 2 / (2 * t)) - math.exp(-(a + b) ** 2 / (2 * t))) / math.sqrt(2 * math.pi * t)


# points inside |x|, |y| <= 3, kept at moderate separation so relative error is meaningful
HP_POINTS = [(0.0, 0.5), (0.6, 1.0), (-0.8, 1.6), (1.2, 2.0), (-0.3, 2.6)]
QP_POINTS = [(0.4, 0.4), (1.0, 0.5), (0.6, 1.4), (2.0, 1.2), (1.5, 2.4)]
TIMES = (0.25, 1.0, 4.0)


def test_criterion_1_half_plane_reflection():
    t0 = time.perf_counter()
    ks = ConeKernelSpec(HALF_SD, eps=1e-20)
    worst = 0.0
    for t in TIMES:
        for x in HP_POINTS:
            for y in HP_POINTS:
                got = cone_heat_kernel(ks, t, x, y).value
                ref = _half_ref(t, np.array(x), np.array(y))
                worst = max(worst, abs(got - ref) / ref)
    ok = record(1, worst <= 1e-6, time.perf_counter() - t0, 1.0, f"max rel err {worst:.2e} on 75 cases")
    assert ok


def test_criterion_2_quarter_plane_product():
    t0 = time.perf_counter()
    ks = ConeKernelSpec(QUARTER_SD, eps=1e-20)
    worst = 0.0
    for t in TIMES:
        for x in QP_POINTS:
            for y in QP_POINTS:
                got = cone_heat_kernel(ks, t, x, y).value
                ref = _half_line(t, x[0], y[0]) * _half_line(t, x[1], y[1])
                worst = max(worst, abs(got - ref) / ref)
    ok = record(2, worst <= 1e-6, time.perf_counter() - t0, 1.0, f"max rel err {worst:.2e} on 75 cases")
    assert ok


def test_criterion_3_vertex_limit():
    t0 = time.perf_counter()
    pairs = {"half": (HALF, [((0.0, 1.0), (0.0, 1.0)), ((0.5, 1.0), (-1.0, 2.0)), ((2.0, 0.5), (1.0, 1.5))]),
             "quarter": (QUARTER, [((0.5, 0.5), (0.5, 0.5)), ((1.0, 0.4), (0.3, 1.2)), ((2.0, 1.0), (1.0, 2.0))])}
    ok, worst = True, 0.0
    for dom, pp in pairs.values():
        for x, y in pp:
            dev = kernel_limit_experiment(dom, x, y, [1e2, 1e3, 1e4], None).deviations
            ok &= bool(dev[2] <= 0.01 and dev[0] > dev[1] > dev[2])
            worst = max(worst, dev[2])
    ok = record(3, ok, time.perf_counter() - t0, 5.0,
                f"max deviation at t=1e4: {worst:.2e}; monotone over 1e2, 1e3, 1e4")
    assert ok


def test_criterion_4_survival_constant():
    t0 = time.perf_counter()
    g = gamma_v(HALF_SD)
    ks = ConeKernelSpec(HALF_SD)
    t = 1e4
    devs = []
    for x in [(0.0, 1.0), (1.0, 1.0)]:
        sv = cone_survival_series(ks, t, x)
        devs.append(abs(math.sqrt(t) * sv.value / (g * minimal_harmonic_v(HALF_SD, x)) - 1))
    ok = abs(g - 1) <= 1e-10 and max(devs) <= 0.01
    ok = record(4, ok, time.perf_counter() - t0, 10.0,
                f"gamma={g!r}; deviations {devs[0]:.2e}, {devs[1]:.2e}")
    assert ok


def test_criterion_5_mc_calibration():
    t0 = time.perf_counter()
    exact = 2 * norm.cdf(1.0) - 1
    est = estimate_survival(simulate_paths(HALF, (0.0, 1.0), 1.0,
                                           SimConfig(dt=1e-3, paths=1_000_000, seed=SEED)))
    raw = estimate_survival(simulate_paths(HALF, (0.0, 1.0), 1.0,
                                           SimConfig(dt=1e-2, paths=1_000_000, seed=SEED + 1,
                                                     bridge=False)))
    z_on = (est.estimate - exact) / est.se
    z_off = (raw.estimate - exact) / raw.se
    ok = abs(z_on) <= 3 and z_off > 3
    ok = record(5, ok, time.perf_counter() - t0, 120.0,
                f"bridge: {est.estimate:.6f} (z={z_on:+.2f}); no bridge dt=1e-2: "
                f"{raw.estimate:.6f} (z={z_off:+.1f})")
    assert ok


@pytest.fixture(scope="module")
def truncated_run():
    """One 10^7-path ensemble from (0, 2) in the truncated half-plane, seen at 64, 128, 256."""
    t0 = time.perf_counter()
    cfg = SimConfig(dt=1.0, dt_min=1e-4, paths=BIG, seed=SEED)
    ens = simulate_horizons(TRUNC, (0.0, 2.0), [64.0, 128.0, 256.0], cfg)
    return ens, time.perf_counter() - t0


class _Given:
    """Feeds a precomputed ensemble to the experiment functions."""

    def __init__(self, ens):
        self.ens = ens


def test_criterion_6_truncated_kernel(truncated_run, monkeypatch):
    ens, sim_time = truncated_run
    t0 = time.perf_counter()
    import heatlab.asymptotics as asy
    monkeypatch.setattr(asy, "simulate_horizons", lambda *a, **k: ens)
    rep = kernel_limit_experiment(TRUNC, (0.0, 2.0), (0.0, 2.0), [64.0, 128.0, 256.0], ens.cfg)
    # t^2 p 2 Gamma(2) against w(x)^2
    ratio = rep.estimates * 2.0
    target = rep.predicted * 2.0
    dev = np.abs(ratio / target - 1)
    detail = rep.verdict_detail()
    ok = detail["verdict"] == "PASS"
    ok = record(6, ok, sim_time + time.perf_counter() - t0, 1200.0,
                f"t^2 p 2 = {', '.join(f'{v:.4f}' for v in ratio)} vs {target:.5f}; "
                f"|dev| {', '.join(f'{d:.3f}' for d in dev)} (rel se {rep.rel_ci[-1]:.3f})")
    assert ok


def test_criterion_7_truncated_survival(truncated_run, monkeypatch):
    ens, sim_time = truncated_run
    t0 = time.perf_counter()
    import heatlab.asymptotics as asy
    monkeypatch.setattr(asy, "simulate_horizons", lambda *a, **k: ens)
    rep = exit_limit_experiment(TRUNC, (0.0, 2.0), [64.0, 128.0, 256.0], ens.cfg)
    dev = abs(rep.estimates[-1] / rep.predicted - 1)
    ok = dev <= 0.10
    ok = record(7, ok, sim_time + time.perf_counter() - t0, 900.0,
                f"t^(1/2) P = {rep.estimates[-1]:.4f} vs {rep.predicted:.5f} at t=256 "
                f"(dev {dev:.3f}, rel se {rep.rel_ci[-1]:.4f})")
    assert ok


def test_criterion_8_yaglom():
    t0 = time.perf_counter()
    t = 64.0
    sym = two_arm_domain()
    cfg = SimConfig(dt=1.0, dt_min=1e-4, paths=BIG, seed=SEED + 8)
    # u_0(x) = u_1(x) at the centre of symmetry
    rep = yaglom_experiment(sym, (0.0, 0.0), t, cfg, u_values=[1.0, 1.0])
    f, se = rep.frequencies, rep.frequency_se
    freq_ok = all(abs(f[j] - 0.5) <= 3 * se[j] for j in (0, 1))
    ks_ok = all(rep.ks_radial[j] <= rep.critical[j] for j in (0, 1))

    asym = two_arm_domain(((0.0, math.pi), (-3 * math.pi / 4, -math.pi / 4)))
    rep2 = yaglom_experiment(asym, (0.0, 0.0), t, SimConfig(dt=1.0, dt_min=1e-4, paths=BIG,
                                                            seed=SEED + 9))
    f2, se2 = rep2.frequencies[1], rep2.frequency_se[1]
    asym_ok = f2 <= 2 * 3 * se2
    ok = freq_ok and ks_ok and asym_ok
    ok = record(8, ok, time.perf_counter() - t0, 1800.0,
                f"symmetric: freq {f[0]:.4f}/{f[1]:.4f} (se {se[0]:.4f}) {'ok' if freq_ok else 'off'}, "
                f"KS radial {rep.ks_radial[0]:.4f}/{rep.ks_radial[1]:.4f} vs "
                f"{rep.critical[0]:.4f}/{rep.critical[1]:.4f} {'ok' if ks_ok else 'off'}; "
                f"asymmetric: non-maximal freq {f2:.4f} vs bound {6 * se2:.4f} "
                f"{'ok' if asym_ok else 'off'}")
    assert ok


def _yaglom_mass(sd):
    n, L = sd.n, sd.coord_max()
    rad = integrate.quad(lambda r: r ** (sd.kappa + n - 1) * math.exp(-r * r / 2), 0, np.inf,
                         epsabs=1e-14, epsrel=1e-13)[0]
    w = (lambda c: sd.m(1, c)) if n == 2 else (lambda c: sd.m(1, c) * math.sin(c) * 2 * math.pi)
    ang = integrate.quad(w, 0, L, epsabs=1e-14, epsrel=1e-13)[0]
    c = 0.4 * L
    pt = ((math.cos(sd.opening.theta_a + c), math.sin(sd.opening.theta_a + c)) if n == 2
          else (math.sin(c), 0.0, math.cos(c)))
    scale = yaglom_density_cone(sd, pt) / (sd.m(1, c) * math.exp(-0.5))
    return scale * rad * ang


def test_criterion_9_properties():
    t0 = time.perf_counter()
    checks = {}
    rng = np.random.default_rng(SEED)

    ks = ConeKernelSpec(spectrum(Opening.arc(0.2, 2.0), 1))
    sym = True
    for _ in range(200):
        th = 0.2 + rng.uniform(0.05, 1.75, 2)
        r = rng.uniform(0.1, 4.0, 2)
        x = r[0] * np.array([math.cos(th[0]), math.sin(th[0])])
        y = r[1] * np.array([math.cos(th[1]), math.sin(th[1])])
        tt = rng.uniform(0.1, 10.0)
        sym &= cone_heat_kernel(ks, tt, x, y).value == cone_heat_kernel(ks, tt, y, x).value
    checks["symmetry"] = sym

    kq = ConeKernelSpec(QUARTER_SD)
    g = np.linspace(0.0, 9.0, 721)[1:]
    Z = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    xa, ya = (0.5, 1.0), (1.2, 0.4)
    conv = np.sum(cone_heat_kernel(kq, 0.6, xa, Z).value * cone_heat_kernel(kq, 0.9, ya, Z).value) * (g[1] - g[0]) ** 2
    checks["chapman-kolmogorov"] = abs(conv / cone_heat_kernel(kq, 1.5, xa, ya).value - 1) <= 1e-4

    ksc = ConeKernelSpec(spectrum(Opening.arc(0.0, 1.5), 1), eps=1e-15)
    sc = True
    for _ in range(100):
        th = rng.uniform(0.1, 1.4, 2)
        r = rng.uniform(0.2, 3.0, 2)
        x = r[0] * np.array([math.cos(th[0]), math.sin(th[0])])
        y = r[1] * np.array([math.cos(th[1]), math.sin(th[1])])
        tt, c = rng.uniform(0.1, 5.0), rng.uniform(0.3, 3.0)
        a = cone_heat_kernel(ksc, c * c * tt, c * x, c * y)
        b = cone_heat_kernel(ksc, tt, x, y)
        sc &= abs(a.value * c**2 - b.value) <= 1e-9 * b.value + 4e-15
    checks["scaling"] = sc

    mono = True
    for _ in range(20):
        r, th = rng.uniform(0.1, 4.0), rng.uniform(0.05, 1.45)
        x = r * np.array([math.cos(th), math.sin(th)])
        vals = [cone_heat_kernel(ksc, tt, x, x).value for tt in np.geomspace(0.01, 1e3, 40)]
        mono &= all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))
    checks["diagonal nonincreasing"] = mono

    nu, z = rng.uniform(0, 20, 10_000), rng.uniform(0, 30, 10_000)
    lo = log_bessel_lower_bound(nu, z)
    with np.errstate(divide="ignore"):
        li = np.log(bessel_i(nu, z))
    slack = 1e-12 * np.maximum(1.0, np.abs(lo))
    checks["bessel sandwich"] = bool(np.all(li >= lo - slack) and np.all(li <= lo + z + slack))

    openings = [HALF_SD, spectrum(Opening.arc(0.0, 2.5), 1), spectrum(Opening.cap(1.0), 1)]
    checks["yaglom normalisation"] = all(abs(_yaglom_mass(sd) - 1) <= 1e-8 for sd in openings)

    orth = True
    for op in (Opening.arc(0.0, 2.0), Opening.cap(0.7), Opening.cap(2.2)):
        sd = spectrum(op, 3)
        for i in range(1, 4):
            for j in range(i, 4):
                if op.dim == 2:
                    v = integrate.quad(lambda c: sd.m(i, c) * sd.m(j, c), 0, sd.coord_max(), epsabs=1e-13)[0]
                else:
                    v = integrate.quad(lambda c: sd.m(i, c) * sd.m(j, c) * math.sin(c) * 2 * math.pi,
                                       0, sd.coord_max(), epsabs=1e-13, limit=200)[0]
                orth &= abs(v - (i == j)) <= 1e-8
    checks["orthonormality"] = orth

    ident = True
    for sd in openings + [QUARTER_SD, spectrum(Opening.cap(0.4), 1)]:
        s = 1 + sd.alpha
        ident &= abs(sd.beta / 2 + sd.kappa / 2 - s) <= 2 * math.ulp(s)
    checks["beta/2 + kappa/2 = 1 + alpha"] = ident

    cfg = SimConfig(dt=0.1, dt_min=1e-3, paths=100_000, seed=SEED)
    a = simulate_horizons(TRUNC, (0.3, 1.8), [0.5, 2.0], cfg)
    b = simulate_horizons(TRUNC, (0.3, 1.8), [0.5, 2.0], SimConfig(**{**cfg.__dict__, "workers": 4}))
    checks["worker reproducibility"] = (all(np.array_equal(a.endpoints[h], b.endpoints[h]) for h in range(2))
                                        and np.array_equal(a.kill_time, b.kill_time))

    failed = [k for k, v in checks.items() if not v]
    ok = record(9, not failed, time.perf_counter() - t0, 60.0,
                f"{len(checks) - len(failed)}/{len(checks)} suites hold" + (f"; failed: {failed}" if failed else ""))
    assert ok


if __name__ == "__main__":  # pragma: no cover
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
