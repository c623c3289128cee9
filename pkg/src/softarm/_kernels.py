"""Numba-compiled inner loops: rod dynamics, coupling, contact, CEM rollouts.

Everything here works on flat float64 arrays so that environment state can be
cloned cheaply and candidate rollouts can run on independent copies in parallel.
Scalar tuples are used instead of small temporaries to keep the hot path
allocation-free.  No fastmath anywhere: results must be bit-reproducible.
"""

import numpy as np
from numba import njit, prange

# indices into the flat parameter vector shared by all kernels
P_DT = 0
P_KF = 1
P_KM = 2
P_CF = 3
P_CM = 4
P_KC = 5
P_MU = 6
P_VEPS = 7
P_TBX0 = 8
P_TBX1 = 9
P_TBY0 = 10
P_TBY1 = 11
P_GX = 12
P_GY = 13
P_GZ = 14
P_DAMP = 15
P_RODR = 16
P_EEFR = 17
P_EEFM = 18
P_S1 = 19   # shear/stretch stiffness diagonal (3)
P_B1 = 22   # bend/twist stiffness diagonal (3)
P_J1 = 25   # per-element rotational inertia diagonal (3)
P_EI1 = 28  # end-effector inertia diagonal (3)
P_BPX = 31  # base mount position (3)
P_BQW = 34  # base mount quaternion (4)
P_CLAMP = 38
P_RODCT = 39   # rod body collides with table/objects
P_EEFGC = 40   # end-effector gravity compensated
P_ADAMP = 41   # rod angular-velocity decay (element spin modes)
P_IDAMP = 42   # internal dashpot between adjacent nodes (N*s/m)
N_PARAMS = 43

BLOWUP_SPEED = 1.0e4


# ---------------------------------------------------------------------------
# quaternion / SE(3) scalar helpers
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _qmul(aw, ax, ay, az, bw, bx, by, bz):
    return (aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw)


@njit(cache=True, nogil=True)
def _qrot(qw, qx, qy, qz, vx, vy, vz):
    # R(q) v with q mapping local -> world
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    return (vx + qw * tx + qy * tz - qz * ty,
            vy + qw * ty + qz * tx - qx * tz,
            vz + qw * tz + qx * ty - qy * tx)


@njit(cache=True, nogil=True)
def _qrot_inv(qw, qx, qy, qz, vx, vy, vz):
    return _qrot(qw, -qx, -qy, -qz, vx, vy, vz)


@njit(cache=True, nogil=True)
def _qexp(wx, wy, wz):
    # unit quaternion of the rotation vector (wx, wy, wz)
    th = np.sqrt(wx * wx + wy * wy + wz * wz)
    if th < 1.0e-12:
        # first-order: enough below the renormalisation threshold
        return (1.0, 0.5 * wx, 0.5 * wy, 0.5 * wz)
    half = 0.5 * th
    s = np.sin(half) / th
    return (np.cos(half), s * wx, s * wy, s * wz)


@njit(cache=True, nogil=True)
def _qlog(qw, qx, qy, qz):
    # rotation vector of a unit quaternion, angle in [0, pi]
    if qw < 0.0:
        qw, qx, qy, qz = -qw, -qx, -qy, -qz
    s = np.sqrt(qx * qx + qy * qy + qz * qz)
    if s < 1.0e-12:
        return (2.0 * qx, 2.0 * qy, 2.0 * qz)
    ang = 2.0 * np.arctan2(s, qw)
    k = ang / s
    return (k * qx, k * qy, k * qz)


@njit(cache=True, nogil=True)
def _quat_step(q, i, wx, wy, wz):
    # q[i] <- q[i] * exp(w), renormalised; body-frame angular increment
    ew, ex, ey, ez = _qexp(wx, wy, wz)
    nw, nx, ny, nz = _qmul(q[i, 0], q[i, 1], q[i, 2], q[i, 3], ew, ex, ey, ez)
    inv = 1.0 / np.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    q[i, 0] = nw * inv
    q[i, 1] = nx * inv
    q[i, 2] = ny * inv
    q[i, 3] = nz * inv


@njit(cache=True, nogil=True)
def _vinv_apply(rx, ry, rz, px, py, pz):
    # translational component of the SE(3) log: V(r)^-1 p
    th2 = rx * rx + ry * ry + rz * rz
    if th2 < 1.0e-6:
        c = 1.0 / 12.0 + th2 / 720.0
    else:
        th = np.sqrt(th2)
        c = (1.0 - th * np.sin(th) / (2.0 * (1.0 - np.cos(th)))) / th2
    cx = ry * pz - rz * py
    cy = rz * px - rx * pz
    cz = rx * py - ry * px
    ccx = ry * cz - rz * cy
    ccy = rz * cx - rx * cz
    ccz = rx * cy - ry * cx
    return (px - 0.5 * cx + c * ccx,
            py - 0.5 * cy + c * ccy,
            pz - 0.5 * cz + c * ccz)


@njit(cache=True, nogil=True)
def _pose_less(ap, aq, bp, bq):
    # deterministic total-order on poses; used to canonicalise the log
    # direction so the scalar distance is exactly symmetric in its arguments
    for k in range(3):
        if ap[k] < bp[k]:
            return True
        if ap[k] > bp[k]:
            return False
    for k in range(4):
        if aq[k] < bq[k]:
            return True
        if aq[k] > bq[k]:
            return False
    return False


@njit(cache=True, nogil=True)
def _rel_log(cp, cq, tp, tq):
    # twist (dp, dr) of the relative pose current^-1 . target
    rw, rx, ry, rz = _qmul(cq[0], -cq[1], -cq[2], -cq[3],
                           tq[0], tq[1], tq[2], tq[3])
    drx, dry, drz = _qlog(rw, rx, ry, rz)
    px, py, pz = _qrot_inv(cq[0], cq[1], cq[2], cq[3],
                           tp[0] - cp[0], tp[1] - cp[1], tp[2] - cp[2])
    dpx, dpy, dpz = _vinv_apply(drx, dry, drz, px, py, pz)
    return dpx, dpy, dpz, drx, dry, drz


@njit(cache=True, nogil=True)
def se3_log(cp, cq, tp, tq):
    """Twist of current^-1 . target, evaluated through a canonical argument
    order so that swapping the poses negates the result bitwise."""
    if _pose_less(tp, tq, cp, cq):
        dpx, dpy, dpz, drx, dry, drz = _rel_log(tp, tq, cp, cq)
        return -dpx, -dpy, -dpz, -drx, -dry, -drz
    return _rel_log(cp, cq, tp, tq)


@njit(cache=True, nogil=True)
def pose_distance(cp, cq, tp, tq, alpha):
    dpx, dpy, dpz, drx, dry, drz = se3_log(cp, cq, tp, tq)
    return (np.sqrt(dpx * dpx + dpy * dpy + dpz * dpz)
            + alpha * np.sqrt(drx * drx + dry * dry + drz * drz))


# ---------------------------------------------------------------------------
# rod internal loads
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def rod_internal_loads(x, q, om, prev_e, dt, S3, B3, J3, rest_len, vor_rest,
                       node_f, elem_t, e_out, nglob, bendc, bend3):
    """Elastic + gyroscopic loads of the discrete rod.

    Overwrites node_f ((n+1)x3, global frame) and elem_t (nx3, element
    frames).  Returns False when a segment length underflows or the state is
    not finite.
    """
    n = q.shape[0]
    for i in range(n):
        sx = x[i + 1, 0] - x[i, 0]
        sy = x[i + 1, 1] - x[i, 1]
        sz = x[i + 1, 2] - x[i, 2]
        ell = np.sqrt(sx * sx + sy * sy + sz * sz)
        if not np.isfinite(ell) or ell < 1.0e-12:
            return False
        e = ell / rest_len[i]
        e_out[i] = e
        inv_l = 1.0 / ell
        # unit tangent in the element frame
        tlx, tly, tlz = _qrot_inv(q[i, 0], q[i, 1], q[i, 2], q[i, 3],
                                  sx * inv_l, sy * inv_l, sz * inv_l)
        # strain relative to the reference configuration
        phix = e * tlx
        phiy = e * tly
        phiz = e * tlz - 1.0
        stx = S3[0] * phix
        sty = S3[1] * phiy
        stz = S3[2] * phiz
        gx, gy, gz = _qrot(q[i, 0], q[i, 1], q[i, 2], q[i, 3], stx, sty, stz)
        nglob[i, 0] = gx
        nglob[i, 1] = gy
        nglob[i, 2] = gz
        # couple from shear stress acting across the section
        rl = rest_len[i]
        elem_t[i, 0] = (tly * stz - tlz * sty) * rl
        elem_t[i, 1] = (tlz * stx - tlx * stz) * rl
        elem_t[i, 2] = (tlx * sty - tly * stx) * rl

    for k in range(3):
        node_f[0, k] = nglob[0, k]
        node_f[n, k] = -nglob[n - 1, k]
    for i in range(1, n):
        for k in range(3):
            node_f[i, k] = nglob[i, k] - nglob[i - 1, k]

    for j in range(n - 1):
        rw, rx, ry, rz = _qmul(q[j, 0], -q[j, 1], -q[j, 2], -q[j, 3],
                               q[j + 1, 0], q[j + 1, 1], q[j + 1, 2], q[j + 1, 3])
        lx, ly, lz = _qlog(rw, rx, ry, rz)
        inv_d = 1.0 / vor_rest[j]
        kx = lx * inv_d
        ky = ly * inv_d
        kz = lz * inv_d
        eps = 0.5 * (e_out[j] * rest_len[j] + e_out[j + 1] * rest_len[j + 1]) * inv_d
        inv_e3 = 1.0 / (eps * eps * eps)
        bcx = B3[0] * kx * inv_e3
        bcy = B3[1] * ky * inv_e3
        bcz = B3[2] * kz * inv_e3
        bendc[j, 0] = bcx
        bendc[j, 1] = bcy
        bendc[j, 2] = bcz
        d_rest = vor_rest[j]
        bend3[j, 0] = (ky * bcz - kz * bcy) * d_rest
        bend3[j, 1] = (kz * bcx - kx * bcz) * d_rest
        bend3[j, 2] = (kx * bcy - ky * bcx) * d_rest

    for i in range(n):
        if i < n - 1:
            for k in range(3):
                elem_t[i, k] += bendc[i, k] + 0.5 * bend3[i, k]
        if i > 0:
            for k in range(3):
                elem_t[i, k] += -bendc[i - 1, k] + 0.5 * bend3[i - 1, k]
        e = e_out[i]
        inv_e = 1.0 / e
        jwx = J3[0] * om[i, 0]
        jwy = J3[1] * om[i, 1]
        jwz = J3[2] * om[i, 2]
        # transport of angular momentum in the co-moving frame
        elem_t[i, 0] += (jwy * om[i, 2] - jwz * om[i, 1]) * inv_e
        elem_t[i, 1] += (jwz * om[i, 0] - jwx * om[i, 2]) * inv_e
        elem_t[i, 2] += (jwx * om[i, 1] - jwy * om[i, 0]) * inv_e
        # stretch-rate correction
        edot = (e - prev_e[i]) / dt
        f = edot * inv_e * inv_e
        elem_t[i, 0] += jwx * f
        elem_t[i, 1] += jwy * f
        elem_t[i, 2] += jwz * f
    return True


# ---------------------------------------------------------------------------
# contact helpers
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _sphere_object_gap(cx, cy, cz, r, shape, par, op, oq):
    """Penetration depth and outward normal between a sphere and a primitive.

    Returns (pen, nx, ny, nz); normal points from the object towards the
    sphere centre.  pen <= 0 means no contact.
    """
    if shape == 1:  # sphere
        dx = cx - op[0]
        dy = cy - op[1]
        dz = cz - op[2]
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        pen = (r + par[0]) - dist
        if dist < 1.0e-12:
            return pen, 0.0, 0.0, 1.0
        inv = 1.0 / dist
        return pen, dx * inv, dy * inv, dz * inv
    # box / cylinder: work in the object frame
    lx, ly, lz = _qrot_inv(oq[0], oq[1], oq[2], oq[3],
                           cx - op[0], cy - op[1], cz - op[2])
    if shape == 0:  # box with half extents par
        qx = min(max(lx, -par[0]), par[0])
        qy = min(max(ly, -par[1]), par[1])
        qz = min(max(lz, -par[2]), par[2])
        dx = lx - qx
        dy = ly - qy
        dz = lz - qz
        d2 = dx * dx + dy * dy + dz * dz
        if d2 > 1.0e-24:
            dist = np.sqrt(d2)
            pen = r - dist
            inv = 1.0 / dist
            nx, ny, nz = dx * inv, dy * inv, dz * inv
        else:
            # centre inside the box: push out along the shallowest axis
            mx = par[0] - abs(lx)
            my = par[1] - abs(ly)
            mz = par[2] - abs(lz)
            if mx <= my and mx <= mz:
                pen = r + mx
                nx, ny, nz = (1.0 if lx >= 0.0 else -1.0), 0.0, 0.0
            elif my <= mz:
                pen = r + my
                nx, ny, nz = 0.0, (1.0 if ly >= 0.0 else -1.0), 0.0
            else:
                pen = r + mz
                nx, ny, nz = 0.0, 0.0, (1.0 if lz >= 0.0 else -1.0)
    else:  # cylinder: radius par[0], half height par[1], axis local z
        rc = par[0]
        hh = par[1]
        rho = np.sqrt(lx * lx + ly * ly)
        inside = rho <= rc and abs(lz) <= hh
        if inside:
            m_rad = rc - rho
            m_ax = hh - abs(lz)
            if m_rad <= m_ax:
                pen = r + m_rad
                if rho > 1.0e-12:
                    inv = 1.0 / rho
                    nx, ny, nz = lx * inv, ly * inv, 0.0
                else:
                    nx, ny, nz = 1.0, 0.0, 0.0
            else:
                pen = r + m_ax
                nx, ny, nz = 0.0, 0.0, (1.0 if lz >= 0.0 else -1.0)
        else:
            qz = min(max(lz, -hh), hh)
            if rho <= rc:
                qx, qy = lx, ly
            else:
                s = rc / rho
                qx, qy = lx * s, ly * s
            dx = lx - qx
            dy = ly - qy
            dz = lz - qz
            dist = np.sqrt(dx * dx + dy * dy + dz * dz)
            pen = r - dist
            if dist < 1.0e-12:
                nx, ny, nz = 0.0, 0.0, 1.0
            else:
                inv = 1.0 / dist
                nx, ny, nz = dx * inv, dy * inv, dz * inv
    wx, wy, wz = _qrot(oq[0], oq[1], oq[2], oq[3], nx, ny, nz)
    return pen, wx, wy, wz


@njit(cache=True, nogil=True)
def _object_table_pen(shape, par, op, oq):
    """Penetration of a primitive below the z=0 table surface."""
    if shape == 1:
        return par[0] - op[2]
    if shape == 0:
        lowest = 1.0e30
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                for sz in (-1.0, 1.0):
                    _, _, wz = _qrot(oq[0], oq[1], oq[2], oq[3],
                                     sx * par[0], sy * par[1], sz * par[2])
                    z = op[2] + wz
                    if z < lowest:
                        lowest = z
        return -lowest
    ax, ay, az = _qrot(oq[0], oq[1], oq[2], oq[3], 0.0, 0.0, 1.0)
    s = 1.0 - az * az
    if s < 0.0:
        s = 0.0
    return -(op[2] - par[1] * abs(az) - par[0] * np.sqrt(s))


@njit(cache=True, nogil=True)
def _penalty_force(pen, nx, ny, nz, rvx, rvy, rvz, kc, mu, veps, meff, dt):
    """Spring-damper normal force plus regularised Coulomb friction.

    rv is the velocity of the contacting body relative to the other body.
    Returns the force on the contacting body; never attractive.
    """
    vn = rvx * nx + rvy * ny + rvz * nz
    c = 2.0 * np.sqrt(kc * meff)
    cmax = 0.4 * meff / dt
    if c > cmax:
        c = cmax
    fn = kc * pen - c * vn
    if fn < 0.0:
        fn = 0.0
    fx = fn * nx
    fy = fn * ny
    fz = fn * nz
    # tangential slip
    tx = rvx - vn * nx
    ty = rvy - vn * ny
    tz = rvz - vn * nz
    tmag = np.sqrt(tx * tx + ty * ty + tz * tz)
    if tmag > 1.0e-12:
        ft = mu * fn * np.tanh(tmag / veps) / tmag
        fx -= ft * tx
        fy -= ft * ty
        fz -= ft * tz
    return fx, fy, fz


@njit(cache=True, nogil=True)
def _on_table(px, py, par):
    return par[P_TBX0] <= px <= par[P_TBX1] and par[P_TBY0] <= py <= par[P_TBY1]


# ---------------------------------------------------------------------------
# coupled substep
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def coupling_wrench(tip_p, tip_q, tip_v, tip_w, ep, eq, ev, ew_world,
                    kf, km, cf, cm):
    """Restoring wrench on the end-effector from the zero-rest-length spring.

    tip_w and ew_world are world-frame angular velocities.  Returns
    (fx, fy, fz, mx, my, mz) acting on the end-effector; the rod tip takes
    the exact negative.
    """
    fx = -kf * (ep[0] - tip_p[0]) - cf * (ev[0] - tip_v[0])
    fy = -kf * (ep[1] - tip_p[1]) - cf * (ev[1] - tip_v[1])
    fz = -kf * (ep[2] - tip_p[2]) - cf * (ev[2] - tip_v[2])
    # world-frame rotation carrying the tip frame onto the end-effector frame
    rw, rx, ry, rz = _qmul(eq[0], eq[1], eq[2], eq[3],
                           tip_q[0], -tip_q[1], -tip_q[2], -tip_q[3])
    thx, thy, thz = _qlog(rw, rx, ry, rz)
    mx = -km * thx - cm * (ew_world[0] - tip_w[0])
    my = -km * thy - cm * (ew_world[1] - tip_w[1])
    mz = -km * thz - cm * (ew_world[2] - tip_w[2])
    return fx, fy, fz, mx, my, mz


@njit(cache=True, nogil=True)
def sim_substep(par, x, v, q, om, prev_e, rest_len, vor_rest, node_mass,
                ep, eq, ev, ew,
                opos, oquat, ovel, oshape, oparams, omass, oflags, obound,
                held_idx, held_rel_p, held_rel_q, tau_elem,
                node_f, elem_t, e_buf, nglob, bendc, bend3):
    """One explicit step of the coupled rod / end-effector / object system.

    Rod: position-Verlet (half drift, kick, half drift).  End-effector and
    free objects: semi-implicit Euler.  Returns 0 on success, 1 on numeric
    blow-up, 2 on segment collapse.
    """
    n = q.shape[0]
    dt = par[P_DT]
    half = 0.5 * dt
    clamp = par[P_CLAMP] != 0.0

    # --- rod half drift
    for i in range(n + 1):
        x[i, 0] += half * v[i, 0]
        x[i, 1] += half * v[i, 1]
        x[i, 2] += half * v[i, 2]
    for i in range(n):
        _quat_step(q, i, om[i, 0] * half, om[i, 1] * half, om[i, 2] * half)
    if clamp:
        x[0, 0] = par[P_BPX]
        x[0, 1] = par[P_BPX + 1]
        x[0, 2] = par[P_BPX + 2]
        for k in range(4):
            q[0, k] = par[P_BQW + k]

    # --- loads at the midpoint configuration
    ok = rod_internal_loads(x, q, om, prev_e, dt,
                            par[P_S1:P_S1 + 3], par[P_B1:P_B1 + 3],
                            par[P_J1:P_J1 + 3], rest_len, vor_rest,
                            node_f, elem_t, e_buf, nglob, bendc, bend3)
    if not ok:
        return 2
    for i in range(n):
        prev_e[i] = e_buf[i]

    # actuation torques (element frames) and gravity
    for i in range(n):
        elem_t[i, 0] += tau_elem[i, 0]
        elem_t[i, 1] += tau_elem[i, 1]
        elem_t[i, 2] += tau_elem[i, 2]
    for i in range(n + 1):
        node_f[i, 0] += node_mass[i] * par[P_GX]
        node_f[i, 1] += node_mass[i] * par[P_GY]
        node_f[i, 2] += node_mass[i] * par[P_GZ]
    # internal dashpot: damps deformation waves, transparent to rigid motion
    ci = par[P_IDAMP]
    if ci > 0.0:
        for i in range(n):
            fx = ci * (v[i + 1, 0] - v[i, 0])
            fy = ci * (v[i + 1, 1] - v[i, 1])
            fz = ci * (v[i + 1, 2] - v[i, 2])
            node_f[i, 0] += fx
            node_f[i, 1] += fy
            node_f[i, 2] += fz
            node_f[i + 1, 0] -= fx
            node_f[i + 1, 1] -= fy
            node_f[i + 1, 2] -= fz

    # --- coupling with the end-effector
    tip_q = q[n - 1]
    twx, twy, twz = _qrot(tip_q[0], tip_q[1], tip_q[2], tip_q[3],
                          om[n - 1, 0], om[n - 1, 1], om[n - 1, 2])
    ewx, ewy, ewz = _qrot(eq[0], eq[1], eq[2], eq[3], ew[0], ew[1], ew[2])
    fx = -par[P_KF] * (ep[0] - x[n, 0]) - par[P_CF] * (ev[0] - v[n, 0])
    fy = -par[P_KF] * (ep[1] - x[n, 1]) - par[P_CF] * (ev[1] - v[n, 1])
    fz = -par[P_KF] * (ep[2] - x[n, 2]) - par[P_CF] * (ev[2] - v[n, 2])
    rw, rx, ry, rz = _qmul(eq[0], eq[1], eq[2], eq[3],
                           tip_q[0], -tip_q[1], -tip_q[2], -tip_q[3])
    thx, thy, thz = _qlog(rw, rx, ry, rz)
    mx = -par[P_KM] * thx - par[P_CM] * (ewx - twx)
    my = -par[P_KM] * thy - par[P_CM] * (ewy - twy)
    mz = -par[P_KM] * thz - par[P_CM] * (ewz - twz)
    node_f[n, 0] -= fx
    node_f[n, 1] -= fy
    node_f[n, 2] -= fz
    bx, by, bz = _qrot_inv(tip_q[0], tip_q[1], tip_q[2], tip_q[3], -mx, -my, -mz)
    elem_t[n - 1, 0] += bx
    elem_t[n - 1, 1] += by
    elem_t[n - 1, 2] += bz

    # --- contact
    efx = fx
    efy = fy
    efz = fz
    n_obj = oshape.shape[0]
    kc = par[P_KC]
    mu = par[P_MU]
    veps = par[P_VEPS]
    eefm = par[P_EEFM]
    eefr = par[P_EEFR]

    # end-effector sphere vs table
    if _on_table(ep[0], ep[1], par) and ep[2] < eefr:
        gx, gy, gz = _penalty_force(eefr - ep[2], 0.0, 0.0, 1.0,
                                    ev[0], ev[1], ev[2], kc, mu, veps, eefm, dt)
        efx += gx
        efy += gy
        efz += gz
    # end-effector vs objects (held object excluded)
    for j in range(n_obj):
        if j == held_idx:
            continue
        bdx = ep[0] - opos[j, 0]
        bdy = ep[1] - opos[j, 1]
        bdz = ep[2] - opos[j, 2]
        reach = obound[j] + eefr
        if bdx * bdx + bdy * bdy + bdz * bdz > reach * reach:
            continue
        pen, nx2, ny2, nz2 = _sphere_object_gap(ep[0], ep[1], ep[2], eefr,
                                                oshape[j], oparams[j],
                                                opos[j], oquat[j])
        if pen > 0.0:
            if oflags[j] == 1:
                meff = eefm
            else:
                meff = eefm * omass[j] / (eefm + omass[j])
            gx, gy, gz = _penalty_force(pen, nx2, ny2, nz2,
                                        ev[0] - ovel[j, 0],
                                        ev[1] - ovel[j, 1],
                                        ev[2] - ovel[j, 2],
                                        kc, mu, veps, meff, dt)
            efx += gx
            efy += gy
            efz += gz
            if oflags[j] == 0:
                ovel[j, 0] -= gx * dt / omass[j]
                ovel[j, 1] -= gy * dt / omass[j]
                ovel[j, 2] -= gz * dt / omass[j]

    # rod body (node spheres) vs table and objects
    if par[P_RODCT] != 0.0:
        rodr = par[P_RODR]
        for i in range(1, n + 1):
            if x[i, 2] < rodr and _on_table(x[i, 0], x[i, 1], par):
                gx, gy, gz = _penalty_force(rodr - x[i, 2], 0.0, 0.0, 1.0,
                                            v[i, 0], v[i, 1], v[i, 2],
                                            kc, mu, veps, node_mass[i], dt)
                node_f[i, 0] += gx
                node_f[i, 1] += gy
                node_f[i, 2] += gz
            for j in range(n_obj):
                if j == held_idx:
                    continue
                # broad phase: bounding spheres
                bdx = x[i, 0] - opos[j, 0]
                bdy = x[i, 1] - opos[j, 1]
                bdz = x[i, 2] - opos[j, 2]
                reach = obound[j] + rodr
                if bdx * bdx + bdy * bdy + bdz * bdz > reach * reach:
                    continue
                pen, nx2, ny2, nz2 = _sphere_object_gap(
                    x[i, 0], x[i, 1], x[i, 2], rodr, oshape[j], oparams[j],
                    opos[j], oquat[j])
                if pen > 0.0:
                    gx, gy, gz = _penalty_force(pen, nx2, ny2, nz2,
                                                v[i, 0] - ovel[j, 0],
                                                v[i, 1] - ovel[j, 1],
                                                v[i, 2] - ovel[j, 2],
                                                kc, mu, veps, node_mass[i], dt)
                    node_f[i, 0] += gx
                    node_f[i, 1] += gy
                    node_f[i, 2] += gz
                    if oflags[j] == 0:
                        ovel[j, 0] -= gx * dt / omass[j]
                        ovel[j, 1] -= gy * dt / omass[j]
                        ovel[j, 2] -= gz * dt / omass[j]

    # free objects vs table, then integrate them
    for j in range(n_obj):
        if oflags[j] != 0 or j == held_idx:
            continue
        pen = _object_table_pen(oshape[j], oparams[j], opos[j], oquat[j])
        gx = 0.0
        gy = 0.0
        gz = 0.0
        if pen > 0.0:
            gx, gy, gz = _penalty_force(pen, 0.0, 0.0, 1.0,
                                        ovel[j, 0], ovel[j, 1], ovel[j, 2],
                                        kc, mu, veps, omass[j], dt)
        ovel[j, 0] += dt * (gx / omass[j] + par[P_GX])
        ovel[j, 1] += dt * (gy / omass[j] + par[P_GY])
        ovel[j, 2] += dt * (gz / omass[j] + par[P_GZ])
        opos[j, 0] += dt * ovel[j, 0]
        opos[j, 1] += dt * ovel[j, 1]
        opos[j, 2] += dt * ovel[j, 2]

    # --- rod kick + damping + half drift
    decay = np.exp(-par[P_DAMP] * dt)
    adecay = np.exp(-par[P_ADAMP] * dt)
    for i in range(n + 1):
        im = dt / node_mass[i]
        v[i, 0] = (v[i, 0] + node_f[i, 0] * im) * decay
        v[i, 1] = (v[i, 1] + node_f[i, 1] * im) * decay
        v[i, 2] = (v[i, 2] + node_f[i, 2] * im) * decay
    for i in range(n):
        s = dt * e_buf[i]
        om[i, 0] = (om[i, 0] + s * elem_t[i, 0] / par[P_J1]) * adecay
        om[i, 1] = (om[i, 1] + s * elem_t[i, 1] / par[P_J1 + 1]) * adecay
        om[i, 2] = (om[i, 2] + s * elem_t[i, 2] / par[P_J1 + 2]) * adecay
    if clamp:
        v[0, 0] = 0.0
        v[0, 1] = 0.0
        v[0, 2] = 0.0
        om[0, 0] = 0.0
        om[0, 1] = 0.0
        om[0, 2] = 0.0
    for i in range(n + 1):
        x[i, 0] += half * v[i, 0]
        x[i, 1] += half * v[i, 1]
        x[i, 2] += half * v[i, 2]
    for i in range(n):
        _quat_step(q, i, om[i, 0] * half, om[i, 1] * half, om[i, 2] * half)
    if clamp:
        x[0, 0] = par[P_BPX]
        x[0, 1] = par[P_BPX + 1]
        x[0, 2] = par[P_BPX + 2]
        for k in range(4):
            q[0, k] = par[P_BQW + k]

    # --- end-effector semi-implicit Euler
    ev[0] += dt * efx / eefm
    ev[1] += dt * efy / eefm
    ev[2] += dt * efz / eefm
    if par[P_EEFGC] == 0.0:
        ev[0] += dt * par[P_GX]
        ev[1] += dt * par[P_GY]
        ev[2] += dt * par[P_GZ]
    mbx, mby, mbz = _qrot_inv(eq[0], eq[1], eq[2], eq[3], mx, my, mz)
    i1 = par[P_EI1]
    i2 = par[P_EI1 + 1]
    i3 = par[P_EI1 + 2]
    gyx = ew[1] * i3 * ew[2] - ew[2] * i2 * ew[1]
    gyy = ew[2] * i1 * ew[0] - ew[0] * i3 * ew[2]
    gyz = ew[0] * i2 * ew[1] - ew[1] * i1 * ew[0]
    ew[0] += dt * (mbx - gyx) / i1
    ew[1] += dt * (mby - gyy) / i2
    ew[2] += dt * (mbz - gyz) / i3
    ep[0] += dt * ev[0]
    ep[1] += dt * ev[1]
    ep[2] += dt * ev[2]
    ew2, ex2, ey2, ez2 = _qexp(ew[0] * dt, ew[1] * dt, ew[2] * dt)
    nw, nx2, ny2, nz2 = _qmul(eq[0], eq[1], eq[2], eq[3], ew2, ex2, ey2, ez2)
    inv = 1.0 / np.sqrt(nw * nw + nx2 * nx2 + ny2 * ny2 + nz2 * nz2)
    eq[0] = nw * inv
    eq[1] = nx2 * inv
    eq[2] = ny2 * inv
    eq[3] = nz2 * inv

    # --- held object follows the end-effector kinematically
    if held_idx >= 0:
        j = held_idx
        rxw, ryw, rzw = _qrot(eq[0], eq[1], eq[2], eq[3],
                              held_rel_p[0], held_rel_p[1], held_rel_p[2])
        opos[j, 0] = ep[0] + rxw
        opos[j, 1] = ep[1] + ryw
        opos[j, 2] = ep[2] + rzw
        qw2, qx2, qy2, qz2 = _qmul(eq[0], eq[1], eq[2], eq[3],
                                   held_rel_q[0], held_rel_q[1],
                                   held_rel_q[2], held_rel_q[3])
        oquat[j, 0] = qw2
        oquat[j, 1] = qx2
        oquat[j, 2] = qy2
        oquat[j, 3] = qz2
        wwx, wwy, wwz = _qrot(eq[0], eq[1], eq[2], eq[3], ew[0], ew[1], ew[2])
        ovel[j, 0] = ev[0] + (wwy * rzw - wwz * ryw)
        ovel[j, 1] = ev[1] + (wwz * rxw - wwx * rzw)
        ovel[j, 2] = ev[2] + (wwx * ryw - wwy * rxw)

    # --- blow-up detection
    for i in range(n + 1):
        for k in range(3):
            if not np.isfinite(x[i, k]) or abs(v[i, k]) > BLOWUP_SPEED:
                return 1
    for k in range(3):
        if not np.isfinite(ep[k]) or abs(ev[k]) > BLOWUP_SPEED:
            return 1
    return 0


@njit(cache=True, nogil=True)
def control_step(par, x, v, q, om, prev_e, rest_len, vor_rest, node_mass,
                 ep, eq, ev, ew, opos, oquat, ovel, oshape, oparams, omass,
                 oflags, obound, held_idx, held_rel_p, held_rel_q, tau_elem,
                 substeps, node_f, elem_t, e_buf, nglob, bendc, bend3):
    for _ in range(substeps):
        rc = sim_substep(par, x, v, q, om, prev_e, rest_len, vor_rest,
                         node_mass, ep, eq, ev, ew, opos, oquat, ovel,
                         oshape, oparams, omass, oflags, obound, held_idx,
                         held_rel_p, held_rel_q, tau_elem,
                         node_f, elem_t, e_buf, nglob, bendc, bend3)
        if rc != 0:
            return rc
    return 0


# ---------------------------------------------------------------------------
# batched candidate rollouts for the sampling controller
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, parallel=True)
def cem_rollouts(par, x, v, q, om, prev_e, rest_len, vor_rest, node_mass,
                 ep, eq, ev, ew, opos, oquat, ovel, oshape, oparams, omass,
                 oflags, obound, held_idx, held_rel_p, held_rel_q,
                 torques, substeps, tgt_p, tgt_q,
                 alpha, k1, k2, d1, d2, beta, big_d, d_prev0, scores):
    """Score candidate torque sequences on private copies of the state.

    torques has shape (n_candidates, horizon, n_elements, 3).  Each candidate
    accumulates the tracking reward over the horizon; numeric blow-up is
    penalised heavily.  Candidates are fully independent, so the parallel
    loop is deterministic regardless of scheduling.
    """
    n_cand = torques.shape[0]
    horizon = torques.shape[1]
    n = q.shape[0]
    for s in prange(n_cand):
        xl = x.copy()
        vl = v.copy()
        ql = q.copy()
        oml = om.copy()
        pel = prev_e.copy()
        epl = ep.copy()
        eql = eq.copy()
        evl = ev.copy()
        ewl = ew.copy()
        opl = opos.copy()
        oql = oquat.copy()
        ovl = ovel.copy()
        node_f = np.empty((n + 1, 3))
        elem_t = np.empty((n, 3))
        e_buf = np.empty(n)
        nglob = np.empty((n, 3))
        bendc = np.empty((n - 1, 3))
        bend3 = np.empty((n - 1, 3))
        total = 0.0
        d_prev = d_prev0
        for h in range(horizon):
            rc = control_step(par, xl, vl, ql, oml, pel, rest_len, vor_rest,
                              node_mass, epl, eql, evl, ewl, opl, oql, ovl,
                              oshape, oparams, omass, oflags, obound,
                              held_idx, held_rel_p, held_rel_q, torques[s, h],
                              substeps, node_f, elem_t, e_buf, nglob, bendc,
                              bend3)
            if rc != 0:
                total -= 1.0e7 * (horizon - h)
                break
            d = pose_distance(epl, eql, tgt_p, tgt_q, alpha)
            r = -d
            if d < d1:
                r += k1
            if d < d2:
                r += k2
            if d <= big_d:
                dd = d - d_prev
                if dd > 0.0:
                    r -= beta
                elif dd < 0.0:
                    r += beta
            total += r
            d_prev = d
        scores[s] = total


@njit(cache=True, nogil=True)
def rod_only_run(par, x, v, q, om, prev_e, rest_len, vor_rest, node_mass,
                 ext_force, tau_elem, n_steps):
    """Run the bare rod (no end-effector, no contact) for n_steps substeps.

    ext_force is a constant per-node external force.  Used by the static
    validation drivers where the coupled machinery is irrelevant.
    Returns 0/1/2 like sim_substep.
    """
    n = q.shape[0]
    dt = par[P_DT]
    half = 0.5 * dt
    clamp = par[P_CLAMP] != 0.0
    node_f = np.empty((n + 1, 3))
    elem_t = np.empty((n, 3))
    e_buf = np.empty(n)
    nglob = np.empty((n, 3))
    bendc = np.empty((n - 1, 3))
    bend3 = np.empty((n - 1, 3))
    decay = np.exp(-par[P_DAMP] * dt)
    adecay = np.exp(-par[P_ADAMP] * dt)
    for _ in range(n_steps):
        for i in range(n + 1):
            x[i, 0] += half * v[i, 0]
            x[i, 1] += half * v[i, 1]
            x[i, 2] += half * v[i, 2]
        for i in range(n):
            _quat_step(q, i, om[i, 0] * half, om[i, 1] * half, om[i, 2] * half)
        if clamp:
            x[0, 0] = par[P_BPX]
            x[0, 1] = par[P_BPX + 1]
            x[0, 2] = par[P_BPX + 2]
            for k in range(4):
                q[0, k] = par[P_BQW + k]
        ok = rod_internal_loads(x, q, om, prev_e, dt,
                                par[P_S1:P_S1 + 3], par[P_B1:P_B1 + 3],
                                par[P_J1:P_J1 + 3], rest_len, vor_rest,
                                node_f, elem_t, e_buf, nglob, bendc, bend3)
        if not ok:
            return 2
        for i in range(n):
            prev_e[i] = e_buf[i]
        ci = par[P_IDAMP]
        if ci > 0.0:
            for i in range(n):
                for k in range(3):
                    fd = ci * (v[i + 1, k] - v[i, k])
                    node_f[i, k] += fd
                    node_f[i + 1, k] -= fd
        for i in range(n + 1):
            im = dt / node_mass[i]
            v[i, 0] = (v[i, 0] + (node_f[i, 0] + ext_force[i, 0]
                                  + node_mass[i] * par[P_GX]) * im) * decay
            v[i, 1] = (v[i, 1] + (node_f[i, 1] + ext_force[i, 1]
                                  + node_mass[i] * par[P_GY]) * im) * decay
            v[i, 2] = (v[i, 2] + (node_f[i, 2] + ext_force[i, 2]
                                  + node_mass[i] * par[P_GZ]) * im) * decay
        for i in range(n):
            s = dt * e_buf[i]
            om[i, 0] = (om[i, 0] + s * (elem_t[i, 0] + tau_elem[i, 0]) / par[P_J1]) * adecay
            om[i, 1] = (om[i, 1] + s * (elem_t[i, 1] + tau_elem[i, 1]) / par[P_J1 + 1]) * adecay
            om[i, 2] = (om[i, 2] + s * (elem_t[i, 2] + tau_elem[i, 2]) / par[P_J1 + 2]) * adecay
        if clamp:
            v[0, 0] = 0.0
            v[0, 1] = 0.0
            v[0, 2] = 0.0
            om[0, 0] = 0.0
            om[0, 1] = 0.0
            om[0, 2] = 0.0
        for i in range(n + 1):
            x[i, 0] += half * v[i, 0]
            x[i, 1] += half * v[i, 1]
            x[i, 2] += half * v[i, 2]
        for i in range(n):
            _quat_step(q, i, om[i, 0] * half, om[i, 1] * half, om[i, 2] * half)
        if clamp:
            x[0, 0] = par[P_BPX]
            x[0, 1] = par[P_BPX + 1]
            x[0, 2] = par[P_BPX + 2]
            for k in range(4):
                q[0, k] = par[P_BQW + k]
        for i in range(n + 1):
            for k in range(3):
                if not np.isfinite(x[i, k]) or abs(v[i, k]) > BLOWUP_SPEED:
                    return 1
    return 0
