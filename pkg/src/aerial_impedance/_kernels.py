"""Compiled kernels for the quadrotor + planar arm Euler-Lagrange model.

Kinetic energy is written in body quasi-velocities nu = [R^T p_dot, omega, alpha_dot],
nu = T(q) chi_dot, so that M(chi) = T^T M_b(alpha) T with M_b depending on the joint
angles only. Every function here works on plain float arrays; the typed wrappers
live in :mod:`aerial_impedance.dynamics`.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def rotation_partials(phi, theta, psi):
    """Z-Y-X rotation R = Rz(psi) Ry(theta) Rx(phi) and dR/d(phi, theta, psi)."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    rz = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[ct, 0.0, st], [0.0, 1.0, 0.0], [-st, 0.0, ct]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cf, -sf], [0.0, sf, cf]])
    drz = np.array([[-sp, -cp, 0.0], [cp, -sp, 0.0], [0.0, 0.0, 0.0]])
    dry = np.array([[-st, 0.0, ct], [0.0, 0.0, 0.0], [-ct, 0.0, -st]])
    drx = np.array([[0.0, 0.0, 0.0], [0.0, -sf, -cf], [0.0, cf, -sf]])
    rzy = rz @ ry
    R = rzy @ rx
    dR = np.empty((3, 3, 3))
    dR[0] = rzy @ drx
    dR[1] = rz @ dry @ rx
    dR[2] = drz @ ry @ rx
    return R, dR


@njit(cache=True)
def euler_rate_map(phi, theta):
    """W with omega_body = W q_dot, plus dW/dphi and dW/dtheta (W is psi-free)."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    W = np.array([[1.0, 0.0, -st], [0.0, cf, sf * ct], [0.0, -sf, cf * ct]])
    dW = np.zeros((3, 3, 3))
    dW[0] = np.array([[0.0, 0.0, 0.0], [0.0, -sf, cf * ct], [0.0, -cf, -sf * ct]])
    dW[1] = np.array([[0.0, 0.0, -ct], [0.0, 0.0, -sf * st], [0.0, 0.0, -cf * st]])
    return W, dW


@njit(cache=True)
def arm_points(alpha, lengths, coms, mount):
    """Body-frame positions of the link COMs and the end effector (last row).

    Link directions are u(a) = (cos a, 0, -sin a) with a the cumulative joint angle,
    i.e. the arm rotates about the body y-axis in the body x-z plane.
    Returns r (P, 3), dr/dalpha (P, 3, n) and d2r/dalpha2 (P, 3, n, n), P = n + 1.
    """
    n = alpha.shape[0]
    npts = n + 1
    a = np.cumsum(alpha)
    U = np.zeros((n, 3))
    dU = np.zeros((n, 3))
    for j in range(n):
        U[j, 0] = np.cos(a[j])
        U[j, 2] = -np.sin(a[j])
        dU[j, 0] = -np.sin(a[j])
        dU[j, 2] = -np.cos(a[j])
    r = np.zeros((npts, 3))
    ra = np.zeros((npts, 3, n))
    raa = np.zeros((npts, 3, n, n))
    for i in range(npts):
        last = min(i, n)
        for c in range(3):
            r[i, c] = mount[c]
        for j in range(last):
            for c in range(3):
                r[i, c] += lengths[j] * U[j, c]
        if i < n:
            for c in range(3):
                r[i, c] += coms[i] * U[i, c]
        for k in range(n):
            for j in range(k, last):
                for c in range(3):
                    ra[i, c, k] += lengths[j] * dU[j, c]
            if i < n and i >= k:
                for c in range(3):
                    ra[i, c, k] += coms[i] * dU[i, c]
            for m in range(n):
                km = max(k, m)
                for j in range(km, last):
                    for c in range(3):
                        raa[i, c, k, m] -= lengths[j] * U[j, c]
                if i < n and i >= km:
                    for c in range(3):
                        raa[i, c, k, m] -= coms[i] * U[i, c]
    return r, ra, raa


@njit(cache=True)
def _skew_into(J, col, v):
    # writes -[v]x into J[:, col:col+3]
    J[0, col + 1] += v[2]
    J[0, col + 2] -= v[1]
    J[1, col + 0] -= v[2]
    J[1, col + 2] += v[0]
    J[2, col + 0] += v[1]
    J[2, col + 1] -= v[0]


@njit(cache=True)
def body_mass(alpha, base_mass, base_inertia, link_mass, link_len, link_com,
              link_inertia, mount, armature, payload):
    """M_b(alpha) over nu = [v_body, omega, alpha_dot] and dM_b/dalpha_k.

    ``armature`` is the reflected rotor inertia of each joint drive; it only adds
    to the joint diagonal.
    """
    n = alpha.shape[0]
    N = 6 + n
    r, ra, raa = arm_points(alpha, link_len, link_com, mount)
    Mb = np.zeros((N, N))
    dMb = np.zeros((n, N, N))
    for c in range(3):
        Mb[c, c] += base_mass
        Mb[3 + c, 3 + c] += base_inertia[c]
    for p in range(n + 1):
        m = link_mass[p] if p < n else payload
        if m == 0.0:
            continue
        J = np.zeros((3, N))
        for c in range(3):
            J[c, c] = 1.0
        _skew_into(J, 3, r[p])
        J[:, 6:] = ra[p]
        Mb += m * (J.T @ J)
        for k in range(n):
            Jk = np.zeros((3, N))
            _skew_into(Jk, 3, ra[p, :, k])
            Jk[:, 6:] = raa[p, :, :, k]
            A = m * (Jk.T @ J)
            dMb[k] += A + A.T
    for i in range(n):
        Jw = np.zeros((3, N))
        for c in range(3):
            Jw[c, 3 + c] = 1.0
        for k in range(i + 1):
            Jw[1, 6 + k] = 1.0
        Mb += link_inertia[i] * (Jw.T @ Jw)
        Mb[6 + i, 6 + i] += armature[i]
    return Mb, dMb, r, ra


@njit(cache=True)
def plant_terms(chi, base_mass, base_inertia, link_mass, link_len, link_com,
                link_inertia, mount, armature, payload, gravity):
    """Mass matrix M, its partials D[k] = dM/dchi_k, and the gravity vector."""
    n = link_mass.shape[0]
    N = 6 + n
    alpha = chi[6:]
    Mb, dMb, r, ra = body_mass(alpha, base_mass, base_inertia, link_mass, link_len,
                               link_com, link_inertia, mount, armature, payload)
    R, dR = rotation_partials(chi[3], chi[4], chi[5])
    W, dW = euler_rate_map(chi[3], chi[4])
    T = np.zeros((N, N))
    T[:3, :3] = R.T
    T[3:6, 3:6] = W
    for k in range(n):
        T[6 + k, 6 + k] = 1.0
    MbT = Mb @ T
    M = T.T @ MbT
    M = 0.5 * (M + M.T)
    D = np.zeros((N, N, N))
    for j in range(3):
        dT = np.zeros((N, N))
        dT[:3, :3] = dR[j].T
        dT[3:6, 3:6] = dW[j]
        A = dT.T @ MbT
        D[3 + j] = A + A.T
    for k in range(n):
        D[6 + k] = T.T @ dMb[k] @ T

    # potential = gravity * (m_tot z + e_z^T R c(alpha)), c = first mass moment
    total = base_mass
    c = np.zeros(3)
    ck = np.zeros((3, n))
    for p in range(n + 1):
        m = link_mass[p] if p < n else payload
        total += m
        c += m * r[p]
        ck += m * ra[p]
    g = np.zeros(N)
    g[2] = total * gravity
    for j in range(3):
        g[3 + j] = gravity * (dR[j][2] @ c)
    Rc = R[2] @ ck
    for k in range(n):
        g[6 + k] = gravity * Rc[k]
    return M, D, g


@njit(cache=True)
def coriolis_from_partials(D, v):
    """Christoffel-symbol Coriolis matrix C(chi, v) from D[k] = dM/dchi_k."""
    N = v.shape[0]
    C = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            acc = 0.0
            for k in range(N):
                acc += (D[k, i, j] + D[j, i, k] - D[i, j, k]) * v[k]
            C[i, j] = 0.5 * acc
    return C


@njit(cache=True)
def coriolis_vector(D, v):
    """C(chi, v) v without forming C."""
    N = v.shape[0]
    h = np.zeros(N)
    Mdot = np.zeros((N, N))
    for k in range(N):
        if v[k] != 0.0:
            Mdot += D[k] * v[k]
    h = Mdot @ v
    for i in range(N):
        h[i] -= 0.5 * (v @ (D[i] @ v))
    return h


@njit(cache=True)
def accelerations(chi, v, force, base_mass, base_inertia, link_mass, link_len,
                  link_com, link_inertia, mount, armature, payload, gravity):
    """chi_ddot = M^-1 (force - C v - g), force = tau + tau_ext - d."""
    M, D, g = plant_terms(chi, base_mass, base_inertia, link_mass, link_len,
                          link_com, link_inertia, mount, armature, payload, gravity)
    h = coriolis_vector(D, v)
    return np.linalg.solve(M, force - h - g)


@njit(cache=True)
def end_effector(chi, link_len, mount):
    """World position of the end effector and its world-frame joint Jacobian."""
    n = link_len.shape[0]
    zeros = np.zeros(n)
    r, ra, raa = arm_points(chi[6:], link_len, zeros, mount)
    R, dR = rotation_partials(chi[3], chi[4], chi[5])
    pos = chi[:3] + R @ r[n]
    return pos, R @ ra[n]


@njit(cache=True)
def unforced_rollout(chi, v, steps, dt, base_mass, base_inertia, link_mass, link_len,
                     link_com, link_inertia, mount, armature, payload, gravity):
    """Fixed-step RK4 of the unactuated, undisturbed plant; returns the final (chi, v)."""
    zero = np.zeros(chi.shape[0])
    q = chi.copy()
    w = v.copy()
    for _ in range(steps):
        a1 = accelerations(q, w, zero, base_mass, base_inertia, link_mass, link_len,
                           link_com, link_inertia, mount, armature, payload, gravity)
        q2 = q + 0.5 * dt * w
        w2 = w + 0.5 * dt * a1
        a2 = accelerations(q2, w2, zero, base_mass, base_inertia, link_mass, link_len,
                           link_com, link_inertia, mount, armature, payload, gravity)
        q3 = q + 0.5 * dt * w2
        w3 = w + 0.5 * dt * a2
        a3 = accelerations(q3, w3, zero, base_mass, base_inertia, link_mass, link_len,
                           link_com, link_inertia, mount, armature, payload, gravity)
        q4 = q + dt * w3
        w4 = w + dt * a3
        a4 = accelerations(q4, w4, zero, base_mass, base_inertia, link_mass, link_len,
                           link_com, link_inertia, mount, armature, payload, gravity)
        q = q + dt / 6.0 * (w + 2.0 * w2 + 2.0 * w3 + w4)
        w = w + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return q, w
