"""Compiled inner loop: Euler steps of Brownian motion killed on a multicone boundary.

Geometry arrives as the flat arrays of :meth:`MulticoneDomain.packed`. All
functions here are ``nogil`` so chunks can run on worker threads.

Status codes per path: 0 alive at the last horizon, 1 killed, 2 reached the
stop sphere, 3 step budget exhausted. Boundary pieces: 0 core sphere,
``1 + 2j`` lateral surface of branch ``j``, ``2 + 2j`` its base, -1 none.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .rng import normal, path_key, uniform

ALIVE, KILLED, STOPPED, BUDGET = 0, 1, 2, 3
NO_PIECE = -1


@njit(inline="always", cache=True)
def _branch_polar(p, a, axis):
    """``(r, r cos psi, r sin psi)`` of ``p`` about vertex ``a``; ``psi`` is the angle to ``axis``."""
    n = p.shape[0]
    dot = 0.0
    rr = 0.0
    for k in range(n):
        q = p[k] - a[k]
        dot += q * axis[k]
        rr += q * q
    if n == 2:
        cr = abs((p[0] - a[0]) * axis[1] - (p[1] - a[1]) * axis[0])
    else:
        q0 = p[0] - a[0]
        q1 = p[1] - a[1]
        q2 = p[2] - a[2]
        c0 = q1 * axis[2] - q2 * axis[1]
        c1 = q2 * axis[0] - q0 * axis[2]
        c2 = q0 * axis[1] - q1 * axis[0]
        cr = math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
    return math.sqrt(rr), dot, cr


@njit(inline="always", cache=True)
def _lateral(r, dot, cr, sh, ch):
    """Signed ``r sin(h - psi)`` (positive inside the opening), or ``r`` past a right angle."""
    if ch * dot + sh * cr <= 0.0:  # cos(h - psi) <= 0
        return r
    return sh * dot - ch * cr


@njit(inline="always", cache=True)
def locate(p, core_c, core_r, br_a, br_axis, br_sh, br_ch, br_R, br_ext):
    """``(tag, branch, distance bound)`` with tag 0 outside, 1 core, 2 branch."""
    best = -1.0
    tag = 0
    which = -1
    for j in range(br_a.shape[0]):
        r, dot, cr = _branch_polar(p, br_a[j], br_axis[j])
        if r == 0.0:
            continue
        sh = br_sh[j]
        ch = br_ch[j]
        # inside the opening iff sin(h - psi) > 0, valid for h < pi
        if sh * dot - ch * cr <= 0.0:
            continue
        lat = _lateral(r, dot, cr, sh, ch)
        R = br_R[j]
        if r > R:
            d = lat
            if R > 0.0 and r - R < d:
                d = r - R
            if tag != 2:
                tag = 2
                which = j
            if d > best:
                best = d
        if br_ext[j]:
            if lat > best:
                best = lat
            if tag == 0:
                tag = 1
    for k in range(core_r.shape[0]):
        s = 0.0
        for i in range(p.shape[0]):
            q = p[i] - core_c[k, i]
            s += q * q
        d = core_r[k] - math.sqrt(s)
        if d > 0.0:
            if d > best:
                best = d
            if tag == 0:
                tag = 1
    if tag == 0:
        return 0, -1, 0.0
    return tag, which, max(best, 0.0)


@njit(cache=True)
def nearest_piece(q, out, core_c, core_r, br_a, br_axis, br_h, br_R, bare):
    """Boundary piece closest to ``q`` and a representative point on it in ``out``.

    Lateral wins ties. Base and core-sphere points are radial projections; for a
    lateral hit ``q`` itself is stored.
    """
    n = q.shape[0]
    best = np.inf
    code = NO_PIECE
    for j in range(br_a.shape[0]):
        r, dot, cr = _branch_polar(q, br_a[j], br_axis[j])
        R = br_R[j]
        gap = abs(math.atan2(cr, dot) - br_h[j])
        if r >= R:
            dl = r if gap >= 0.5 * math.pi else r * math.sin(gap)
        else:
            dl = math.sqrt(r * r + R * R - 2.0 * r * R * math.cos(gap))
        if dl <= best:
            best = dl
            code = 1 + 2 * j
        if bare and R > 0.0:
            db = abs(r - R)
            if db < best:
                best = db
                code = 2 + 2 * j
    for k in range(core_r.shape[0]):
        s = 0.0
        for i in range(n):
            d = q[i] - core_c[k, i]
            s += d * d
        dc = abs(math.sqrt(s) - core_r[k])
        if dc < best:
            best = dc
            code = 0
    for i in range(n):
        out[i] = q[i]
    if code >= 2 and code % 2 == 0:
        j = (code - 2) // 2
        r = _branch_polar(q, br_a[j], br_axis[j])[0]
        if r > 0.0:
            for i in range(n):
                out[i] = br_a[j, i] + br_R[j] * (q[i] - br_a[j, i]) / r
    elif code == 0:
        # project onto the nearest core sphere
        kbest = 0
        dbest = np.inf
        for k in range(core_r.shape[0]):
            s = 0.0
            for i in range(n):
                d = q[i] - core_c[k, i]
                s += d * d
            dc = abs(math.sqrt(s) - core_r[k])
            if dc < dbest:
                dbest = dc
                kbest = k
        s = 0.0
        for i in range(n):
            d = q[i] - core_c[kbest, i]
            s += d * d
        rs = math.sqrt(s)
        if rs > 0.0:
            for i in range(n):
                out[i] = core_c[kbest, i] + core_r[kbest] * (q[i] - core_c[kbest, i]) / rs
    return code


@njit(nogil=True, cache=True)
def run_chunk(start, count, skey, x0, horizons, dt_max, dt_min, bridge,
              stop_c, stop_r, max_steps,
              core_c, core_r, br_a, br_axis, br_h, br_R, br_ext,
              alive, pos, end_branch, status, kill_time, kill_piece, exit_pt, steps):
    """Simulate paths ``start .. start+count-1``; results go into the ``count``-long outputs.

    ``horizons`` (sorted, may be empty) are the snapshot times; without horizons
    a path runs until it is killed, stopped or out of budget. Step size is
    ``clip((d/3)^2, dt_min, dt_max)`` and is shortened to land on each horizon.
    """
    n = x0.shape[0]
    H = horizons.shape[0]
    bare = core_r.shape[0] == 0
    p = np.empty(n)
    q = np.empty(n)
    tmp = np.empty(n)
    br_sh = np.sin(br_h)
    br_ch = np.cos(br_h)
    d0 = locate(x0, core_c, core_r, br_a, br_axis, br_sh, br_ch, br_R, br_ext)[2]
    for i in range(count):
        key = path_key(skey, start + i)
        ctr = 0
        for k in range(n):
            p[k] = x0[k]
        d = d0
        t = 0.0
        hi = 0
        nstep = 0
        st = ALIVE
        piece = NO_PIECE
        while True:
            if nstep >= max_steps:
                st = BUDGET
                break
            dt = (d / 3.0) ** 2
            if dt > dt_max:
                dt = dt_max
            if dt < dt_min:
                dt = dt_min
            land = False
            if H > 0:
                rem = horizons[hi] - t
                if dt >= rem:
                    dt = rem
                    land = True
            sd = math.sqrt(dt)
            for k in range(n):
                zk, ctr = normal(key, ctr)
                q[k] = p[k] + sd * zk
            nstep += 1
            tag2, br2, d2 = locate(q, core_c, core_r, br_a, br_axis, br_sh, br_ch, br_R, br_ext)
            if tag2 == 0:
                st = KILLED
                piece = nearest_piece(q, tmp, core_c, core_r, br_a, br_axis, br_h, br_R, bare)
                kill_time[i] = t + 0.5 * dt
                break
            if bridge:
                expo = 2.0 * d * d2 / dt
                # uniforms are >= 2**-54, so exp(-expo) below that can never kill
                if expo < 37.5:
                    u = uniform(key, ctr)
                    ctr += 1
                    if u < math.exp(-expo):
                        st = KILLED
                        src = p if d <= d2 else q
                        piece = nearest_piece(src, tmp, core_c, core_r, br_a, br_axis, br_h,
                                              br_R, bare)
                        kill_time[i] = t + 0.5 * dt
                        break
            for k in range(n):
                p[k] = q[k]
            d = d2
            if land:
                t = horizons[hi]
            else:
                t += dt
            if stop_r > 0.0:
                s = 0.0
                for k in range(n):
                    w = p[k] - stop_c[k]
                    s += w * w
                if s >= stop_r * stop_r:
                    st = STOPPED
                    for k in range(n):
                        tmp[k] = p[k]
                    kill_time[i] = t
                    break
            if land:
                alive[i, hi] = True
                for k in range(n):
                    pos[i, hi, k] = p[k]
                end_branch[i, hi] = br2
                hi += 1
                if hi == H:
                    break
        status[i] = st
        kill_piece[i] = piece
        steps[i] = nstep
        if st == KILLED or st == STOPPED:
            for k in range(n):
                exit_pt[i, k] = tmp[k]
        else:
            kill_time[i] = np.inf
            for k in range(n):
                exit_pt[i, k] = np.nan
    return 0
