"""Compiled stepping kernel for the planar ragdoll.

Maximal-coordinate rigid links joined by revolute joints. Each substep runs
semi-implicit Euler with a fixed-order, fixed-count velocity iteration and a
position projection pass afterwards:

* the revolute point constraints of all joints are solved together as one
  exact block (dense Cholesky on J M^-1 J^T), so loads travel the whole chain
  in a single sweep;
* joint muscles (passive spring-damper plus key torque) and penetrating
  ground contacts are spring-dampers solved implicitly as soft constraints;
* joint limits and ground contacts are one-sided and speculative: a gap may
  close within a substep but not be crossed;
* friction is clamped to the Coulomb cone of the accumulated normal impulse.

Accumulated impulses persist between substeps for warm starting.
"""
from __future__ import annotations

import numpy as np
from numba import njit

RUNNING = 0
WON = 1
FELL = 2
TIMED_OUT = 3

# params layout
P_GRAVITY, P_DT, P_BETA, P_MU, P_KC, P_DC, P_CONTACT_TOL, P_FINISH = range(8)
# joint float layout
J_APX, J_APY, J_ACX, J_ACY, J_LO, J_HI, J_K, J_D, J_TAU = range(9)
# joint int layout
J_PARENT, J_CHILD, J_KEY = range(3)

CONTACT_MARGIN = 0.05
CONTACT_SLOP = 0.003


@njit(cache=True, nogil=True)
def _rotate(angle, x, y):
    c = np.cos(angle)
    s = np.sin(angle)
    return c * x - s * y, s * x + c * y


@njit(cache=True, nogil=True)
def _apply(lin, rot, b, invm, invi, rx, ry, px, py):
    lin[b, 0] += invm[b] * px
    lin[b, 1] += invm[b] * py
    rot[b] += invi[b] * (rx * py - ry * px)


@njit(cache=True, nogil=True)
def _anchors(ang, jint, jf, r):
    """World-frame anchor offsets: r[j] = (parent x, parent y, child x, child y)."""
    for j in range(jint.shape[0]):
        px, py = _rotate(ang[jint[j, J_PARENT]], jf[j, J_APX], jf[j, J_APY])
        cx, cy = _rotate(ang[jint[j, J_CHILD]], jf[j, J_ACX], jf[j, J_ACY])
        r[j, 0] = px
        r[j, 1] = py
        r[j, 2] = cx
        r[j, 3] = cy


@njit(cache=True, nogil=True)
def _cholesky(A, n, L):
    for i in range(n):
        for k in range(i + 1):
            acc = A[i, k]
            for m in range(k):
                acc -= L[i, m] * L[k, m]
            if i == k:
                L[i, i] = np.sqrt(acc)
            else:
                L[i, k] = acc / L[k, k]


@njit(cache=True, nogil=True)
def _cholesky_solve(L, n, rhs, out):
    for i in range(n):
        acc = rhs[i]
        for m in range(i):
            acc -= L[i, m] * out[m]
        out[i] = acc / L[i, i]
    for i in range(n - 1, -1, -1):
        acc = out[i]
        for m in range(i + 1, n):
            acc -= L[m, i] * out[m]
        out[i] = acc / L[i, i]


@njit(cache=True, nogil=True)
def _block_factor(jint, r, invm, invi, L):
    """Cholesky factor of the joint block matrix J M^-1 J^T into ``L``."""
    nj = jint.shape[0]
    n = 2 * nj
    A = np.zeros((n, n))
    for j in range(nj):
        for k in range(nj):
            for side_j in range(2):
                bj = jint[j, J_CHILD] if side_j == 0 else jint[j, J_PARENT]
                sj = 1.0 if side_j == 0 else -1.0
                rjx = r[j, 2] if side_j == 0 else r[j, 0]
                rjy = r[j, 3] if side_j == 0 else r[j, 1]
                for side_k in range(2):
                    bk = jint[k, J_CHILD] if side_k == 0 else jint[k, J_PARENT]
                    if bj != bk:
                        continue
                    sk = 1.0 if side_k == 0 else -1.0
                    rkx = r[k, 2] if side_k == 0 else r[k, 0]
                    rky = r[k, 3] if side_k == 0 else r[k, 1]
                    s = sj * sk
                    # angular Jacobian of the x row is -ry, of the y row rx
                    A[2 * j, 2 * k] += s * (invm[bj] + invi[bj] * rjy * rky)
                    A[2 * j, 2 * k + 1] += s * (-invi[bj] * rjy * rkx)
                    A[2 * j + 1, 2 * k] += s * (-invi[bj] * rjx * rky)
                    A[2 * j + 1, 2 * k + 1] += s * (invm[bj] + invi[bj] * rjx * rkx)
    _cholesky(A, n, L)


@njit(cache=True, nogil=True)
def _joint_error(pos, jint, r, out):
    for j in range(jint.shape[0]):
        p = jint[j, J_PARENT]
        c = jint[j, J_CHILD]
        out[2 * j] = pos[c, 0] + r[j, 2] - pos[p, 0] - r[j, 0]
        out[2 * j + 1] = pos[c, 1] + r[j, 3] - pos[p, 1] - r[j, 1]


@njit(cache=True, nogil=True)
def _joint_velocity_error(vel, angvel, jint, r, out):
    for j in range(jint.shape[0]):
        p = jint[j, J_PARENT]
        c = jint[j, J_CHILD]
        out[2 * j] = vel[c, 0] - angvel[c] * r[j, 3] - vel[p, 0] + angvel[p] * r[j, 1]
        out[2 * j + 1] = vel[c, 1] + angvel[c] * r[j, 2] - vel[p, 1] - angvel[p] * r[j, 0]


@njit(cache=True, nogil=True)
def _apply_joint_impulses(lin, rot, jint, r, invm, invi, lam):
    for j in range(jint.shape[0]):
        p = jint[j, J_PARENT]
        c = jint[j, J_CHILD]
        _apply(lin, rot, c, invm, invi, r[j, 2], r[j, 3], lam[2 * j], lam[2 * j + 1])
        _apply(lin, rot, p, invm, invi, r[j, 0], r[j, 1], -lam[2 * j], -lam[2 * j + 1])


@njit(cache=True, nogil=True)
def _project(pos, ang, invm, invi, jint, jf, cint, cf):
    """One Newton step of the position projection.

    Joint anchors are equality rows; penetrating contacts and violated limits
    are inequality rows. All rows are solved together in one mass-weighted
    least-change correction, dropping any inequality row that would pull
    until every remaining multiplier pushes.
    """
    nb = pos.shape[0]
    nj = jint.shape[0]
    nc = cint.shape[0]
    nd = 3 * nb
    cap = 2 * nj + nc + 2 * nj
    J = np.zeros((cap, nd))
    C = np.empty(cap)
    for j in range(nj):
        p = jint[j, J_PARENT]
        c = jint[j, J_CHILD]
        rpx, rpy = _rotate(ang[p], jf[j, J_APX], jf[j, J_APY])
        rcx, rcy = _rotate(ang[c], jf[j, J_ACX], jf[j, J_ACY])
        C[2 * j] = pos[c, 0] + rcx - pos[p, 0] - rpx
        C[2 * j + 1] = pos[c, 1] + rcy - pos[p, 1] - rpy
        J[2 * j, 3 * c] = 1.0
        J[2 * j, 3 * c + 2] = -rcy
        J[2 * j, 3 * p] = -1.0
        J[2 * j, 3 * p + 2] = rpy
        J[2 * j + 1, 3 * c + 1] = 1.0
        J[2 * j + 1, 3 * c + 2] = rcx
        J[2 * j + 1, 3 * p + 1] = -1.0
        J[2 * j + 1, 3 * p + 2] = -rpx
    n_eq = 2 * nj
    n = n_eq
    for i in range(nc):
        b = cint[i, 0]
        rx, ry = _rotate(ang[b], cf[i, 0], cf[i, 1])
        J[n, 3 * b + 1] = 1.0
        J[n, 3 * b + 2] = rx
        C[n] = pos[b, 1] + ry + CONTACT_SLOP
        n += 1
    for j in range(nj):
        p = jint[j, J_PARENT]
        c = jint[j, J_CHILD]
        rel = ang[c] - ang[p]
        J[n, 3 * c + 2] = 1.0
        J[n, 3 * p + 2] = -1.0
        C[n] = rel - jf[j, J_LO]
        J[n + 1, 3 * c + 2] = -1.0
        J[n + 1, 3 * p + 2] = 1.0
        C[n + 1] = jf[j, J_HI] - rel
        n += 2
    n_ineq = n

    w = np.empty(nd)
    for b in range(nb):
        w[3 * b] = invm[b]
        w[3 * b + 1] = invm[b]
        w[3 * b + 2] = invi[b]
    keep = np.zeros(n, dtype=np.bool_)
    violated = False
    for i in range(n_ineq):
        keep[i] = i < n_eq or C[i] < 0.0
        violated = violated or (i >= n_eq and C[i] < 0.0)
    if not violated:
        # common case: only the chain needs closing, which the smaller joint block handles
        r = np.empty((nj, 4))
        Lj = np.zeros((n_eq, n_eq))
        lam_j = np.empty(n_eq)
        for i in range(n_eq):
            C[i] = -C[i]
        _anchors(ang, jint, jf, r)
        _block_factor(jint, r, invm, invi, Lj)
        _cholesky_solve(Lj, n_eq, C[:n_eq], lam_j)
        _apply_joint_impulses(pos, ang, jint, r, invm, invi, lam_j)
        return
    rows = np.empty(n, dtype=np.int64)
    A = np.empty((n, n))
    L = np.zeros((n, n))
    rhs = np.empty(n)
    lam = np.empty(n)
    dq = np.zeros(nd)
    m = 0
    # active-set iteration: drop pulling rows first, then add rows the correction would violate
    for _ in range(2 * n):
        m = 0
        for i in range(n):
            if keep[i]:
                rows[m] = i
                m += 1
        for a in range(m):
            ra = rows[a]
            for b2 in range(a + 1):
                rb = rows[b2]
                acc = 0.0
                for d in range(nd):
                    acc += J[ra, d] * w[d] * J[rb, d]
                A[a, b2] = acc
            # inequality rows can be redundant with the chain; a tiny compliance keeps A definite
            if ra >= n_eq:
                A[a, a] += 1e-9 + 1e-6 * A[a, a]
            rhs[a] = -C[ra]
        _cholesky(A, m, L)
        _cholesky_solve(L, m, rhs, lam)
        worst = -1
        worst_val = 0.0
        for a in range(m):
            if n_eq <= rows[a] < n_ineq and lam[a] < worst_val:
                worst_val = lam[a]
                worst = rows[a]
        if worst >= 0:
            keep[worst] = False
            continue
        for d in range(nd):
            dq[d] = 0.0
        for a in range(m):
            ra = rows[a]
            for d in range(nd):
                dq[d] += w[d] * J[ra, d] * lam[a]
        worst_val = -1e-9
        for i in range(n_eq, n_ineq):
            if keep[i]:
                continue
            pred = C[i]
            for d in range(nd):
                pred += J[i, d] * dq[d]
            if pred < worst_val:
                worst_val = pred
                worst = i
        if worst < 0:
            break
        keep[worst] = True

    for a in range(m):
        ra = rows[a]
        for d in range(nd):
            if J[ra, d] != 0.0:
                dq = w[d] * J[ra, d] * lam[a]
                b = d // 3
                k = d % 3
                if k == 0:
                    pos[b, 0] += dq
                elif k == 1:
                    pos[b, 1] += dq
                else:
                    ang[b] += dq



@njit(cache=True, nogil=True)
def substep(pos, ang, vel, angvel, jacc, cacc, mask, invm, invi, jint, jf, cint, cf,
            params, h, viters, piters):
    nb = pos.shape[0]
    nj = jint.shape[0]
    nc = cint.shape[0]
    g = params[P_GRAVITY]
    beta = params[P_BETA]
    mu = params[P_MU]
    kc = params[P_KC]
    dc = params[P_DC]

    for b in range(nb):
        vel[b, 1] -= g * h

    r = np.empty((nj, 4))
    L = np.zeros((2 * nj, 2 * nj))
    err = np.empty(2 * nj)
    rhs = np.empty(2 * nj)
    lam = np.empty(2 * nj)
    jbias = np.empty(2 * nj)
    _anchors(ang, jint, jf, r)
    _block_factor(jint, r, invm, invi, L)
    _joint_error(pos, jint, r, err)
    for i in range(2 * nj):
        jbias[i] = -beta / h * err[i]

    s_mass = np.empty(nj)
    s_bias = np.empty(nj)
    s_gamma = np.empty(nj)
    l_mass = np.empty(nj)
    lo_bias = np.empty(nj)
    hi_bias = np.empty(nj)
    for j in range(nj):
        p = jint[j, J_PARENT]
        c = jint[j, J_CHILD]
        isum = invi[p] + invi[c]
        rel = ang[c] - ang[p]
        k = jf[j, J_K]
        d = jf[j, J_D]
        soft = h * (d + h * k)
        gamma = 1.0 / soft if soft > 0.0 else 0.0
        # a pressed key adds a constant torque, folded in as a shifted spring rest angle
        rest = 0.0
        bit = jint[j, J_KEY]
        if bit != 0 and (mask & bit) != 0 and k > 0.0:
            rest = jf[j, J_TAU] / k
        s_gamma[j] = gamma
        s_bias[j] = (rel - rest) * h * k * gamma
        s_mass[j] = 1.0 / (isum + gamma)
        l_mass[j] = 1.0 / isum
        dlo = rel - jf[j, J_LO]
        dhi = jf[j, J_HI] - rel
        lo_bias[j] = dlo / h if dlo > 0.0 else beta * dlo / h
        hi_bias[j] = dhi / h if dhi > 0.0 else beta * dhi / h

        wimp = jacc[j, 2] + jacc[j, 3] - jacc[j, 4]
        angvel[c] += invi[c] * wimp
        angvel[p] -= invi[p] * wimp
    for j in range(nj):
        lam[2 * j] = jacc[j, 0]
        lam[2 * j + 1] = jacc[j, 1]
    _apply_joint_impulses(vel, angvel, jint, r, invm, invi, lam)

    crx = np.empty(nc)
    cry = np.empty(nc)
    active = np.zeros(nc, dtype=np.bool_)
    n_mass = np.empty(nc)
    t_mass = np.empty(nc)
    n_bias = np.empty(nc)
    n_gamma = np.zeros(nc)
    for i in range(nc):
        b = cint[i, 0]
        rx, ry = _rotate(ang[b], cf[i, 0], cf[i, 1])
        crx[i] = rx
        cry[i] = ry
        sep = pos[b, 1] + ry
        if sep < CONTACT_MARGIN:
            active[i] = True
            t_mass[i] = 1.0 / (invm[b] + invi[b] * ry * ry)
            if sep > 0.0:
                n_bias[i] = sep / h
                n_mass[i] = 1.0 / (invm[b] + invi[b] * rx * rx)
            else:
                gamma = 1.0 / (h * (dc + h * kc))
                n_gamma[i] = gamma
                n_bias[i] = sep * h * kc * gamma
                n_mass[i] = 1.0 / (invm[b] + invi[b] * rx * rx + gamma)
            _apply(vel, angvel, b, invm, invi, rx, ry, cacc[i, 1], cacc[i, 0])
        else:
            cacc[i, 0] = 0.0
            cacc[i, 1] = 0.0

    for _ in range(viters):
        for j in range(nj):
            p = jint[j, J_PARENT]
            c = jint[j, J_CHILD]

            wrel = angvel[c] - angvel[p]
            imp = -s_mass[j] * (wrel + s_bias[j] + s_gamma[j] * jacc[j, 2])
            jacc[j, 2] += imp
            angvel[c] += invi[c] * imp
            angvel[p] -= invi[p] * imp

            wrel = angvel[c] - angvel[p]
            imp = -l_mass[j] * (wrel + lo_bias[j])
            old = jacc[j, 3]
            jacc[j, 3] = max(old + imp, 0.0)
            imp = jacc[j, 3] - old
            angvel[c] += invi[c] * imp
            angvel[p] -= invi[p] * imp

            wrel = angvel[c] - angvel[p]
            imp = -l_mass[j] * (-wrel + hi_bias[j])
            old = jacc[j, 4]
            jacc[j, 4] = max(old + imp, 0.0)
            imp = jacc[j, 4] - old
            angvel[c] -= invi[c] * imp
            angvel[p] += invi[p] * imp

        for i in range(nc):
            if not active[i]:
                continue
            b = cint[i, 0]
            rx = crx[i]
            ry = cry[i]
            vn = vel[b, 1] + angvel[b] * rx
            imp = -n_mass[i] * (vn + n_bias[i] + n_gamma[i] * cacc[i, 0])
            old = cacc[i, 0]
            cacc[i, 0] = max(old + imp, 0.0)
            imp = cacc[i, 0] - old
            _apply(vel, angvel, b, invm, invi, rx, ry, 0.0, imp)

            vt = vel[b, 0] - angvel[b] * ry
            imp = -t_mass[i] * vt
            bound = mu * cacc[i, 0]
            old = cacc[i, 1]
            cacc[i, 1] = min(max(old + imp, -bound), bound)
            imp = cacc[i, 1] - old
            _apply(vel, angvel, b, invm, invi, rx, ry, imp, 0.0)

        _joint_velocity_error(vel, angvel, jint, r, err)
        for i in range(2 * nj):
            rhs[i] = jbias[i] - err[i]
        _cholesky_solve(L, 2 * nj, rhs, lam)
        for j in range(nj):
            jacc[j, 0] += lam[2 * j]
            jacc[j, 1] += lam[2 * j + 1]
        _apply_joint_impulses(vel, angvel, jint, r, invm, invi, lam)

    for b in range(nb):
        pos[b, 0] += vel[b, 0] * h
        pos[b, 1] += vel[b, 1] * h
        ang[b] += angvel[b] * h

    for _ in range(piters):
        _project(pos, ang, invm, invi, jint, jf, cint, cf)


@njit(cache=True, nogil=True)
def measure(pos, ang, jint, jf, cint, cf, out):
    """Write (max penetration, max joint gap, max limit overshoot, lowest torso point) into ``out``."""
    pen = 0.0
    low = np.inf
    for i in range(cint.shape[0]):
        b = cint[i, 0]
        rx, ry = _rotate(ang[b], cf[i, 0], cf[i, 1])
        y = pos[b, 1] + ry
        if -y > pen:
            pen = -y
        if cint[i, 1] != 0 and y < low:
            low = y
    gap = 0.0
    over = 0.0
    for j in range(jint.shape[0]):
        p = jint[j, J_PARENT]
        c = jint[j, J_CHILD]
        rpx, rpy = _rotate(ang[p], jf[j, J_APX], jf[j, J_APY])
        rcx, rcy = _rotate(ang[c], jf[j, J_ACX], jf[j, J_ACY])
        dx = pos[c, 0] + rcx - pos[p, 0] - rpx
        dy = pos[c, 1] + rcy - pos[p, 1] - rpy
        d = np.sqrt(dx * dx + dy * dy)
        if d > gap:
            gap = d
        rel = ang[c] - ang[p]
        if jf[j, J_LO] - rel > over:
            over = jf[j, J_LO] - rel
        if rel - jf[j, J_HI] > over:
            over = rel - jf[j, J_HI]
    out[0] = pen
    out[1] = gap
    out[2] = over
    out[3] = low


@njit(cache=True, nogil=True)
def is_finite(pos, ang, vel, angvel):
    for b in range(pos.shape[0]):
        if not (np.isfinite(pos[b, 0]) and np.isfinite(pos[b, 1]) and np.isfinite(ang[b])
                and np.isfinite(vel[b, 0]) and np.isfinite(vel[b, 1]) and np.isfinite(angvel[b])):
            return False
    return True


@njit(cache=True, nogil=True)
def step(pos, ang, vel, angvel, jacc, cacc, mask, invm, invi, jint, jf, cint, cf, params,
         substeps, viters, piters):
    h = params[P_DT] / substeps
    for _ in range(substeps):
        substep(pos, ang, vel, angvel, jacc, cacc, mask, invm, invi, jint, jf, cint, cf,
                params, h, viters, piters)


@njit(cache=True, nogil=True)
def classify(pos, low, finish, tol, steps, max_steps):
    """Outcome after a step; falling beats winning beats the clock."""
    if low <= tol:
        return FELL
    if pos[0, 0] >= finish:
        return WON
    if steps >= max_steps:
        return TIMED_OUT
    return RUNNING


@njit(cache=True, nogil=True)
def simulate(pos, ang, vel, angvel, jacc, cacc, invm, invi, jint, jf, cint, cf, params,
             substeps, viters, piters, masks, ends_us, step_us, max_steps,
             trace, trace_masks, record, diag):
    """Play a looping mask schedule until termination.

    ``ends_us`` holds cumulative event end times within one loop; the mask in
    force during a step is the event covering the step's start time. State
    arrays are advanced in place. ``diag`` receives the worst penetration,
    joint gap and limit overshoot seen after any step, plus a finiteness flag.
    Returns (steps taken, outcome code).
    """
    loop_us = ends_us[ends_us.shape[0] - 1]
    nb = pos.shape[0]
    m = np.empty(4)
    diag[0] = 0.0
    diag[1] = 0.0
    diag[2] = 0.0
    diag[3] = 1.0
    k = 0
    prev_t = -1
    steps = 0
    outcome = RUNNING
    while outcome == RUNNING:
        t = (steps * step_us) % loop_us
        if t < prev_t:
            k = 0
        while ends_us[k] <= t:
            k += 1
        prev_t = t
        mask = masks[k]
        step(pos, ang, vel, angvel, jacc, cacc, mask, invm, invi, jint, jf, cint, cf, params,
             substeps, viters, piters)
        steps += 1
        if not is_finite(pos, ang, vel, angvel):
            diag[3] = 0.0
            outcome = FELL
            break
        measure(pos, ang, jint, jf, cint, cf, m)
        if m[0] > diag[0]:
            diag[0] = m[0]
        if m[1] > diag[1]:
            diag[1] = m[1]
        if m[2] > diag[2]:
            diag[2] = m[2]
        if record:
            trace_masks[steps - 1] = mask
            for b in range(nb):
                trace[steps - 1, b, 0] = pos[b, 0]
                trace[steps - 1, b, 1] = pos[b, 1]
                trace[steps - 1, b, 2] = ang[b]
        outcome = classify(pos, m[3], params[P_FINISH], params[P_CONTACT_TOL], steps, max_steps)
    return steps, outcome
