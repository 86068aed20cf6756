"""Compiled inner loop: fixed-step RK4 between events, guard monitoring, event localization.

The discrete state (agent modes, sensing/zero-set flags) is frozen while the
kernel runs; it stops at the first guard whose sign disagrees with the frozen
flags, or at ``t_stop``.  Exogenous breakpoints (target waypoints, noise
samples, open-loop grid cells) are stepped onto and logged without returning.

State vector layout, with ``D`` sensitivity columns (``D = 0`` disables them)::

    [ s (N) | R (M) | I (N) | ds/dθ (N*D) | dR/dθ (M*D) | dI/dθ (N*D) ]
"""

import math

import numpy as np
from numba import njit

BANG, TRACK, PI_TRACK, OPEN_LOOP = 0, 1, 2, 3

STOP, EVENT, FULL = 0, 1, 2

# kernel-side event codes (see simulator.EventKind)
KEV_TARGET_BREAKPOINT, KEV_NOISE_SAMPLE, KEV_CONTROL_SAMPLE, KEV_GRAZE = 0, 1, 2, 3

INACTIVE = 1.0
# hysteresis on kink/saturation guards so roundoff around an exact tie cannot chatter
PASS_BAND = 1e-9
SAT_BAND = 1e-12


@njit(cache=True)
def _target(tkind, tpar, wpt, wpx, wpoff, i, t, tref):
    k = tkind[i]
    if k == 0:
        return tpar[i, 0], 0.0
    if k == 2:
        a = tpar[i, 1]
        w = tpar[i, 2]
        ph = tpar[i, 3]
        return tpar[i, 0] + a * math.sin(w * t + ph), a * w * math.cos(w * t + ph)
    lo = wpoff[i]
    hi = wpoff[i + 1]
    seg = lo
    while seg + 2 < hi and wpt[seg + 1] <= tref:
        seg += 1
    v = (wpx[seg + 1] - wpx[seg]) / (wpt[seg + 1] - wpt[seg])
    return wpx[seg] + v * (t - wpt[seg]), v


@njit(cache=True)
def _cell(tref, dt, n):
    if n == 0:
        return 0
    c = int(tref / dt)
    if c < 0:
        c = 0
    if c > n - 1:
        c = n - 1
    return c


@njit(cache=True)
def evaluate(t, tref, x, D, mdl, modes, dx, u, v, e, tp, tv, P, pm):
    """Right-hand side at ``(t, x)``; fills control ``u``, unsaturated control
    ``v``, tracking error ``e``, true target states ``tp``/``tv``, joint
    monitoring ``P`` and pairwise monitoring ``pm``."""
    r, A, B, tkind, tpar, wpt, wpx, wpoff, nu, npar, olu, olpar = mdl
    amode, adir, asat, aact, gains, alpha, aidx, inz, inside, side = modes
    N = r.shape[0]
    M = A.shape[0]
    nk = _cell(tref, npar[0], nu.shape[1])
    k1 = npar[1]
    k2 = npar[2]
    has_noise = nu.shape[1] > 0
    for i in range(M):
        tp[i], tv[i] = _target(tkind, tpar, wpt, wpx, wpoff, i, t, tref)

    for j in range(N):
        md = amode[j]
        dI = 0.0
        e[j] = 0.0
        if md == BANG:
            u[j] = adir[j]
            v[j] = adir[j]
        elif md == TRACK:
            vv = 0.0
            for i in range(M):
                w = tv[i]
                if has_noise:
                    w += k2 * nu[i, nk]
                vv += alpha[j, i] * w
            v[j] = vv
            u[j] = vv if asat[j] == 0 else float(asat[j])
        elif md == PI_TRACK:
            ee = -x[j]
            for i in range(M):
                w = tp[i]
                if has_noise:
                    w += k1 * nu[i, nk]
                ee += alpha[j, i] * w
            vv = gains[j, 0] * ee
            if aact[j] != 0:
                vv += gains[j, 1] * x[N + M + j]
                dI = ee
            e[j] = ee
            v[j] = vv
            u[j] = vv if asat[j] == 0 else float(asat[j])
        else:
            c = _cell(tref, olpar[0], olu.shape[1])
            u[j] = olu[j, c]
            v[j] = u[j]
        dx[j] = u[j]
        dx[N + M + j] = dI

    for i in range(M):
        prod = 1.0
        for j in range(N):
            if inside[i, j] != 0:
                p = 1.0 - side[i, j] * (tp[i] - x[j]) / r[j]
            else:
                p = 0.0
            pm[i, j] = p
            prod *= 1.0 - p
        P[i] = 1.0 - prod
        dx[N + i] = 0.0 if inz[i] != 0 else A[i] - B[i] * P[i]

    if D == 0:
        return
    base = 2 * N + M
    soff = base
    roff = base + N * D
    ioff = base + N * D + M * D
    for j in range(N):
        so = soff + j * D
        io = ioff + j * D
        for d in range(D):
            dx[so + d] = 0.0
            dx[io + d] = 0.0
        md = amode[j]
        if md == TRACK:
            if asat[j] == 0:
                for i in range(M):
                    k = aidx[j, i]
                    if k >= 0:
                        w = tv[i]
                        if has_noise:
                            w += k2 * nu[i, nk]
                        dx[so + k] += w
        elif md == PI_TRACK:
            kp = gains[j, 0]
            ki = gains[j, 1]
            act = aact[j] != 0
            sat = asat[j] != 0
            for d in range(D):
                ep = -x[so + d]
                if act:
                    dx[io + d] = ep
                if not sat:
                    val = kp * ep
                    if act:
                        val += ki * x[io + d]
                    dx[so + d] = val
            for i in range(M):
                k = aidx[j, i]
                if k >= 0:
                    w = tp[i]
                    if has_noise:
                        w += k1 * nu[i, nk]
                    if act:
                        dx[io + k] += w
                    if not sat:
                        dx[so + k] += kp * w
    for i in range(M):
        ro = roff + i * D
        for d in range(D):
            dx[ro + d] = 0.0
        if inz[i] != 0:
            continue
        for j in range(N):
            if inside[i, j] == 0:
                continue
            q = 1.0
            for l in range(N):
                if l != j:
                    q *= 1.0 - pm[i, l]
            c = -B[i] * side[i, j] / r[j] * q
            so = soff + j * D
            for d in range(D):
                dx[ro + d] += c * x[so + d]


@njit(cache=True)
def guards(x, mdl, modes, u, v, e, tp, P, G):
    """Signed guard values; a negative entry means the frozen flag is stale.

    Layout: sensing boundaries (M*N), target passes (M*N), zero-set (M),
    saturation (N), integrator activation (N).
    """
    r, A, B = mdl[0], mdl[1], mdl[2]
    amode, adir, asat, aact, gains, alpha, aidx, inz, inside, side = modes
    N = r.shape[0]
    M = A.shape[0]
    MN = M * N
    for i in range(M):
        for j in range(N):
            k = i * N + j
            dist = tp[i] - x[j]
            if inside[i, j] != 0:
                G[k] = r[j] - abs(dist)
                G[MN + k] = side[i, j] * dist + PASS_BAND * r[j]
            else:
                G[k] = abs(dist) - r[j]
                G[MN + k] = INACTIVE
    for i in range(M):
        if inz[i] != 0:
            G[2 * MN + i] = B[i] * P[i] - A[i]
        else:
            G[2 * MN + i] = x[N + i]
    o = 2 * MN + M
    for j in range(N):
        md = amode[j]
        if md == TRACK or md == PI_TRACK:
            if asat[j] == 0:
                G[o + j] = 1.0 + SAT_BAND - abs(v[j])
            else:
                G[o + j] = asat[j] * v[j] - 1.0 + SAT_BAND
        else:
            G[o + j] = INACTIVE
        if md == PI_TRACK and aact[j] == 0:
            G[o + N + j] = abs(gains[j, 0] * e[j]) - gains[j, 2]
        else:
            G[o + N + j] = INACTIVE


@njit(cache=True)
def _rk4(t, x, h, tref, D, mdl, modes, k1, k2, k3, k4, xt, out, u, v, e, tp, tv, P, pm):
    n = x.shape[0]
    for q in range(n):
        xt[q] = x[q] + 0.5 * h * k1[q]
    evaluate(t + 0.5 * h, tref, xt, D, mdl, modes, k2, u, v, e, tp, tv, P, pm)
    for q in range(n):
        xt[q] = x[q] + 0.5 * h * k2[q]
    evaluate(t + 0.5 * h, tref, xt, D, mdl, modes, k3, u, v, e, tp, tv, P, pm)
    for q in range(n):
        xt[q] = x[q] + h * k3[q]
    evaluate(t + h, tref, xt, D, mdl, modes, k4, u, v, e, tp, tv, P, pm)
    for q in range(n):
        out[q] = x[q] + h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q])


@njit(cache=True)
def _any_neg(G):
    for k in range(G.shape[0]):
        if G[k] < 0.0:
            return True
    return False


@njit(cache=True)
def _record(rows, nrec, t, x, N, M, u, tp, dx):
    row = rows[nrec]
    row[0] = t
    c = 1
    for j in range(N):
        row[c] = x[j]
        c += 1
    for i in range(M):
        row[c] = x[N + i]
        c += 1
    for j in range(N):
        row[c] = u[j]
        c += 1
    for i in range(M):
        row[c] = tp[i]
        c += 1
    for i in range(M):
        row[c] = dx[N + i]
        c += 1
    for j in range(N):
        row[c] = x[N + M + j]
        c += 1


@njit(cache=True)
def _accumulate(acc, h, x0, x1, f0, f1, N, M, D):
    """Hermite-Simpson increment of the integral of sum_i R_i (and of its sensitivities).

    The last slot of ``acc`` keeps the smallest R_i seen at any step end.
    """
    s0 = 0.0
    s1 = 0.0
    r0 = 0.0
    r1 = 0.0
    for i in range(M):
        s0 += x0[N + i]
        s1 += x1[N + i]
        r0 += f0[N + i]
        r1 += f1[N + i]
        if x1[N + i] < acc[1 + D]:
            acc[1 + D] = x1[N + i]
    acc[0] += 0.5 * h * (s0 + s1) + h * h / 12.0 * (r0 - r1)
    if D == 0:
        return
    roff = 2 * N + M + N * D
    for d in range(D):
        a0 = 0.0
        a1 = 0.0
        b0 = 0.0
        b1 = 0.0
        for i in range(M):
            q = roff + i * D + d
            a0 += x0[q]
            a1 += x1[q]
            b0 += f0[q]
            b1 += f1[q]
        acc[1 + d] += 0.5 * h * (a0 + a1) + h * h / 12.0 * (b0 - b1)


@njit(cache=True)
def _sense_slope(inside_ij, side_ij, dist, tv_i, u_j):
    if inside_ij != 0:
        return -side_ij * (tv_i - u_j)
    sg = 1.0 if dist >= 0.0 else -1.0
    return sg * (tv_i - u_j)


@njit(cache=True)
def advance(t, t_stop, h, tol, x, D, mdl, modes,
            bp_t, bp_kind, bp_idx, bp_ptr,
            record, rows, nrec, kev, nkev, acc, G):
    """Integrate from ``t`` until ``t_stop`` or the first stale guard.

    Returns ``(status, t, nrec, nkev, bp_ptr)``; ``x`` holds the state at the
    returned time (pre-event values when ``status == EVENT``) and ``G`` the
    guard values at the right end of the localization bracket.
    """
    r = mdl[0]
    N = r.shape[0]
    M = mdl[1].shape[0]
    inside = modes[8]
    side = modes[9]
    n = x.shape[0]
    nG = G.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xt = np.empty(n)
    xn = np.empty(n)
    xm = np.empty(n)
    fe = np.empty(n)
    u = np.empty(N)
    v = np.empty(N)
    e = np.empty(N)
    u0 = np.empty(N)
    tp = np.empty(M)
    tv = np.empty(M)
    tp0 = np.empty(M)
    tv0 = np.empty(M)
    P = np.empty(M)
    pm = np.empty((M, N))
    Glo = np.empty(nG)
    nbp = bp_t.shape[0]
    eps_t = 1e-12 * max(1.0, abs(t_stop))
    first = True
    have_k1 = False
    cap = rows.shape[0]
    kcap = kev.shape[0]

    while True:
        crossed_bp = False
        while bp_ptr < nbp and bp_t[bp_ptr] <= t + eps_t:
            if nkev >= kcap:
                return FULL, t, nrec, nkev, bp_ptr
            kev[nkev, 0] = bp_t[bp_ptr]
            kev[nkev, 1] = bp_kind[bp_ptr]
            kev[nkev, 2] = bp_idx[bp_ptr]
            nkev += 1
            bp_ptr += 1
            have_k1 = False
            crossed_bp = True
        if t >= t_stop - eps_t:
            return STOP, t_stop, nrec, nkev, bp_ptr
        if record and nrec + 2 > cap:
            return FULL, t, nrec, nkev, bp_ptr
        if nkev + 2 > kcap:
            return FULL, t, nrec, nkev, bp_ptr

        t_next = t_stop
        land_bp = False
        if bp_ptr < nbp and bp_t[bp_ptr] < t_next:
            t_next = bp_t[bp_ptr]
            land_bp = True
        hs = h
        land = False
        if t + hs >= t_next - eps_t:
            hs = t_next - t
            land = True
        tref = t + 0.5 * hs

        if not have_k1:
            evaluate(t, tref, x, D, mdl, modes, k1, u, v, e, tp, tv, P, pm)
            if crossed_bp and not first:
                # a jump in measured/true target motion can flip a guard right at the breakpoint
                guards(x, mdl, modes, u, v, e, tp, P, G)
                if _any_neg(G):
                    return EVENT, t, nrec, nkev, bp_ptr
        for j in range(N):
            u0[j] = u[j]
        for i in range(M):
            tp0[i] = tp[i]
            tv0[i] = tv[i]
        if first and record:
            _record(rows, nrec, t, x, N, M, u, tp, k1)
            nrec += 1
        first = False

        _rk4(t, x, hs, tref, D, mdl, modes, k1, k2, k3, k4, xt, xn, u, v, e, tp, tv, P, pm)
        t_new = t_next if land else t + hs
        evaluate(t_new, tref, xn, D, mdl, modes, fe, u, v, e, tp, tv, P, pm)
        guards(xn, mdl, modes, u, v, e, tp, P, G)

        hit = _any_neg(G)
        hi = hs
        if not hit:
            # grazing of a sensing boundary inside the step: slope turns from
            # approaching to receding while both endpoints look consistent
            for i in range(M):
                for j in range(N):
                    s_a = _sense_slope(inside[i, j], side[i, j], tp0[i] - x[j], tv0[i], u0[j])
                    s_b = _sense_slope(inside[i, j], side[i, j], tp[i] - xn[j], tv[i], u[j])
                    if not (s_a < 0.0 and s_b > 0.0):
                        continue
                    a = 0.0
                    b = hs
                    gr = 0.6180339887498949
                    c1 = b - gr * (b - a)
                    c2 = a + gr * (b - a)
                    g1 = 0.0
                    g2 = 0.0
                    for it in range(2):
                        cc = c1 if it == 0 else c2
                        _rk4(t, x, cc, tref, D, mdl, modes, k1, k2, k3, k4, xt, xm, u, v, e, tp, tv, P, pm)
                        evaluate(t + cc, tref, xm, D, mdl, modes, k4, u, v, e, tp, tv, P, pm)
                        d0 = abs(tp[i] - xm[j])
                        gg = r[j] - d0 if inside[i, j] != 0 else d0 - r[j]
                        if it == 0:
                            g1 = gg
                        else:
                            g2 = gg
                    for it in range(60):
                        if b - a <= tol:
                            break
                        if g1 < g2:
                            b = c2
                            c2 = c1
                            g2 = g1
                            c1 = b - gr * (b - a)
                            cc = c1
                        else:
                            a = c1
                            c1 = c2
                            g1 = g2
                            c2 = a + gr * (b - a)
                            cc = c2
                        _rk4(t, x, cc, tref, D, mdl, modes, k1, k2, k3, k4, xt, xm, u, v, e, tp, tv, P, pm)
                        evaluate(t + cc, tref, xm, D, mdl, modes, k4, u, v, e, tp, tv, P, pm)
                        d0 = abs(tp[i] - xm[j])
                        gg = r[j] - d0 if inside[i, j] != 0 else d0 - r[j]
                        if cc == c1:
                            g1 = gg
                        else:
                            g2 = gg
                    tm = c1 if g1 < g2 else c2
                    gmin = g1 if g1 < g2 else g2
                    if gmin < 0.0:
                        if tm < hi:
                            hi = tm
                            hit = True
                    elif gmin <= tol and nkev + 2 <= kcap:
                        kev[nkev, 0] = t + tm
                        kev[nkev, 1] = KEV_GRAZE
                        kev[nkev, 2] = i * N + j
                        nkev += 1
            if hit:
                # restore end-of-bracket guard values at hi
                _rk4(t, x, hi, tref, D, mdl, modes, k1, k2, k3, k4, xt, xn, u, v, e, tp, tv, P, pm)
                evaluate(t + hi, tref, xn, D, mdl, modes, fe, u, v, e, tp, tv, P, pm)
                guards(xn, mdl, modes, u, v, e, tp, P, G)
                if not _any_neg(G):
                    hit = False
                    hi = hs
                    _rk4(t, x, hs, tref, D, mdl, modes, k1, k2, k3, k4, xt, xn, u, v, e, tp, tv, P, pm)
                    evaluate(t_new, tref, xn, D, mdl, modes, fe, u, v, e, tp, tv, P, pm)
                    guards(xn, mdl, modes, u, v, e, tp, P, G)

        if not hit:
            _accumulate(acc, t_new - t, x, xn, k1, fe, N, M, D)
            for q in range(n):
                x[q] = xn[q]
            t = t_new
            if record:
                _record(rows, nrec, t, x, N, M, u, tp, fe)
                nrec += 1
            if land_bp and land:
                have_k1 = False
            else:
                for q in range(n):
                    k1[q] = fe[q]
                have_k1 = True
            continue

        # bisection on "some guard is stale", then one secant step per guard
        lo = 0.0
        evaluate(t, tref, x, D, mdl, modes, fe, u, v, e, tp, tv, P, pm)
        guards(x, mdl, modes, u, v, e, tp, P, Glo)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            _rk4(t, x, mid, tref, D, mdl, modes, k1, k2, k3, k4, xt, xm, u, v, e, tp, tv, P, pm)
            evaluate(t + mid, tref, xm, D, mdl, modes, fe, u, v, e, tp, tv, P, pm)
            guards(xm, mdl, modes, u, v, e, tp, P, G)
            if _any_neg(G):
                hi = mid
            else:
                lo = mid
                for k in range(nG):
                    Glo[k] = G[k]
        _rk4(t, x, hi, tref, D, mdl, modes, k1, k2, k3, k4, xt, xm, u, v, e, tp, tv, P, pm)
        evaluate(t + hi, tref, xm, D, mdl, modes, fe, u, v, e, tp, tv, P, pm)
        guards(xm, mdl, modes, u, v, e, tp, P, G)
        ts = hi
        zlo = 2 * M * N
        for k in range(nG):
            if zlo <= k < zlo + M and modes[7][k - zlo] != 0:
                # leave the zero set strictly after the crossing so the released rate is >= 0
                continue
            if G[k] < 0.0 and Glo[k] >= 0.0:
                cand = lo + (hi - lo) * Glo[k] / (Glo[k] - G[k])
                if cand < ts:
                    ts = cand
        if ts < lo:
            ts = lo
        _rk4(t, x, ts, tref, D, mdl, modes, k1, k2, k3, k4, xt, xn, u, v, e, tp, tv, P, pm)
        # a zero crossing is localized just past the root; drop the overshoot
        for i in range(M):
            if xn[N + i] < 0.0:
                xn[N + i] = 0.0
        evaluate(t + ts, tref, xn, D, mdl, modes, fe, u, v, e, tp, tv, P, pm)
        _accumulate(acc, ts, x, xn, k1, fe, N, M, D)
        for q in range(n):
            x[q] = xn[q]
        t = t + ts
        if record:
            _record(rows, nrec, t, x, N, M, u, tp, fe)
            nrec += 1
        return EVENT, t, nrec, nkev, bp_ptr


@njit(cache=True)
def dense_cost(T, dt, s0, r, A, B, R0, tkind, tpar, wpt, wpx, wpoff,
               variant, psi, alpha, phi, nph, gains):
    """Reference cost by plain fixed-step RK4 with controller logic re-decided at
    every step start and no event localization.

    ``variant`` 0 is the switching-point law, 1 the PI law.  Independent of the
    event-driven path; used only as an oracle.
    """
    N = s0.shape[0]
    M = A.shape[0]
    s = s0.copy()
    R = R0.copy()
    I = np.zeros(N)
    phase = np.zeros(N, dtype=np.int64)
    stage = np.zeros(N, dtype=np.int64)      # 0 travelling to psi, 1 tracking
    tmark = np.zeros(N)                       # start of the current stage
    act = np.zeros(N, dtype=np.int64)
    dirs = np.zeros(N)
    for j in range(N):
        if variant == 0:
            dirs[j] = np.sign(psi[j, 0] - s[j])
            if dirs[j] == 0.0:
                stage[j] = 1
    nsteps = int(math.ceil(T / dt - 1e-9))
    total = 0.0
    t = 0.0
    tpos = np.empty(M)
    tvel = np.empty(M)
    ucur = np.empty(N)
    y = np.empty(2 * N + M)
    ynew = np.empty(2 * N + M)
    stage_x = np.empty(2 * N + M)
    ks = np.zeros((4, 2 * N + M))
    for step in range(nsteps):
        hs = min(dt, T - t)
        # discrete decisions at the step start
        for j in range(N):
            L = nph[j]
            if variant == 0:
                changed = True
                while changed:
                    changed = False
                    l = phase[j]
                    if stage[j] == 0:
                        if (psi[j, l] - s[j]) * dirs[j] <= 0.0:
                            s[j] = psi[j, l]
                            stage[j] = 1
                            tmark[j] = t
                            changed = True
                    elif l < L - 1 and t - tmark[j] >= phi[j, l] - 1e-12:
                        phase[j] = l + 1
                        stage[j] = 0
                        tmark[j] = t
                        dirs[j] = np.sign(psi[j, l + 1] - s[j])
                        if dirs[j] == 0.0:
                            stage[j] = 1
                        changed = True
            else:
                l = phase[j]
                while l < L - 1 and t - tmark[j] >= phi[j, l] - 1e-12:
                    tmark[j] = tmark[j] + phi[j, l]
                    l += 1
                    I[j] = 0.0
                    act[j] = 0
                phase[j] = l
        mid_ref = t + 0.5 * hs

        for j in range(N):
            y[j] = s[j]
            y[N + M + j] = I[j]
        for i in range(M):
            y[N + i] = R[i]
        # PI activation check at step start
        if variant == 1:
            for i in range(M):
                tpos[i], tvel[i] = _target(tkind, tpar, wpt, wpx, wpoff, i, t, mid_ref)
            for j in range(N):
                if act[j] == 0:
                    ee = -s[j]
                    for i in range(M):
                        ee += alpha[j, phase[j], i] * tpos[i]
                    if abs(gains[j, 0] * ee) <= gains[j, 2]:
                        act[j] = 1
        for stg in range(4):
            if stg == 0:
                tt = t
                for q in range(2 * N + M):
                    stage_x[q] = y[q]
            elif stg < 3:
                tt = t + 0.5 * hs
                for q in range(2 * N + M):
                    stage_x[q] = y[q] + 0.5 * hs * ks[stg - 1, q]
            else:
                tt = t + hs
                for q in range(2 * N + M):
                    stage_x[q] = y[q] + hs * ks[2, q]
            for i in range(M):
                tpos[i], tvel[i] = _target(tkind, tpar, wpt, wpx, wpoff, i, tt, mid_ref)
            for j in range(N):
                l = phase[j]
                if variant == 0:
                    if stage[j] == 0:
                        uu = dirs[j]
                    else:
                        uu = 0.0
                        for i in range(M):
                            uu += alpha[j, l, i] * tvel[i]
                        uu = min(1.0, max(-1.0, uu))
                    ks[stg, N + M + j] = 0.0
                else:
                    ee = -stage_x[j]
                    for i in range(M):
                        ee += alpha[j, l, i] * tpos[i]
                    vv = gains[j, 0] * ee
                    if act[j] != 0:
                        vv += gains[j, 1] * stage_x[N + M + j]
                        ks[stg, N + M + j] = ee
                    else:
                        ks[stg, N + M + j] = 0.0
                    uu = min(1.0, max(-1.0, vv))
                ks[stg, j] = uu
                if stg == 0:
                    ucur[j] = uu
            for i in range(M):
                prod = 1.0
                for j in range(N):
                    p = 1.0 - abs(tpos[i] - stage_x[j]) / r[j]
                    if p > 0.0:
                        prod *= 1.0 - p
                rate = A[i] - B[i] * (1.0 - prod)
                if stage_x[N + i] <= 0.0 and rate < 0.0:
                    rate = 0.0
                ks[stg, N + i] = rate
        for q in range(2 * N + M):
            ynew[q] = y[q] + hs / 6.0 * (ks[0, q] + 2.0 * ks[1, q] + 2.0 * ks[2, q] + ks[3, q])
        # bang phases must not overshoot the switching point
        if variant == 0:
            for j in range(N):
                if stage[j] == 0:
                    l = phase[j]
                    if (psi[j, l] - ynew[j]) * dirs[j] < 0.0:
                        ynew[j] = psi[j, l]
        Rsum0 = 0.0
        Rsum1 = 0.0
        for i in range(M):
            if ynew[N + i] < 0.0:
                ynew[N + i] = 0.0
            Rsum0 += y[N + i]
            Rsum1 += ynew[N + i]
        total += 0.5 * hs * (Rsum0 + Rsum1)
        for j in range(N):
            s[j] = ynew[j]
            I[j] = ynew[N + M + j]
        for i in range(M):
            R[i] = ynew[N + i]
        t += hs
    return total / T
