"""Compiled inner loops: implicit midpoint steps and their exact tangent maps.

Everything here works per orbit, so the result for one orbit never depends
on which other orbits share a call (or a thread).
"""

import numpy as np
from numba import njit

MIDPOINT = 0
MIDPOINT4 = 1

# symmetric triple-jump weights lifting the midpoint rule to fourth order
_G1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_G0 = 1.0 - 2.0 * _G1


@njit(cache=True, nogil=True)
def rhs(psi, table, counts, J, U, mu, out):
    """``dpsi_j/dt = i[(U|psi_j|^2 - mu) psi_j - J sum_k psi_k]``."""
    L = psi.shape[0]
    for j in range(L):
        s = 0j
        for q in range(counts[j]):
            s += psi[table[j, q]]
        p = psi[j]
        a = U * (p.real * p.real + p.imag * p.imag) - mu
        g = a * p - J * s
        out[j] = complex(-g.imag, g.real)


@njit(cache=True, nogil=True)
def midpoint_solve(y0, h, table, counts, J, U, mu, tol, maxit, y, mid, f):
    """Fixed-point solve of ``y = y0 + h f((y0 + y)/2)``; result in ``y``.

    Returns the number of iterations used, or ``-1`` if the residual never
    dropped below ``tol``.
    """
    L = y0.shape[0]
    rhs(y0, table, counts, J, U, mu, f)
    for j in range(L):
        y[j] = y0[j] + h * f[j]
    for it in range(maxit):
        for j in range(L):
            mid[j] = 0.5 * (y0[j] + y[j])
        rhs(mid, table, counts, J, U, mu, f)
        err = 0.0
        for j in range(L):
            new = y0[j] + h * f[j]
            d = abs(new - y[j])
            if d > err:
                err = d
            y[j] = new
        if err < tol:
            return it + 1
    return -1


@njit(cache=True, nogil=True)
def advance_batch(psi, h, nsteps, scheme, table, counts, J, U, mu, tol, maxit, status):
    """Advance every row of ``psi`` by ``nsteps`` steps of size ``h`` in place.

    ``status[i]`` is set to 1 for orbits whose implicit solve failed; such
    orbits stop advancing.
    """
    n, L = psi.shape
    y0 = np.empty(L, np.complex128)
    y = np.empty(L, np.complex128)
    mid = np.empty(L, np.complex128)
    f = np.empty(L, np.complex128)
    if scheme == MIDPOINT4:
        subs = np.array([_G1 * h, _G0 * h, _G1 * h])
    else:
        subs = np.array([h])
    for i in range(n):
        if status[i] != 0:
            continue
        for j in range(L):
            y0[j] = psi[i, j]
        ok = True
        for _ in range(nsteps):
            for hs in subs:
                if midpoint_solve(y0, hs, table, counts, J, U, mu, tol, maxit, y, mid, f) < 0:
                    ok = False
                    break
                for j in range(L):
                    y0[j] = y[j]
            if not ok:
                break
        if not ok:
            status[i] = 1
            continue
        for j in range(L):
            psi[i, j] = y0[j]


@njit(cache=True, nogil=True)
def real_jacobian(psi, table, counts, J, U, mu, D):
    """Jacobian of the flow in real coordinates ``x = (Re psi, Im psi)``, written into ``D``."""
    L = psi.shape[0]
    for r in range(2 * L):
        for c in range(2 * L):
            D[r, c] = 0.0
    for j in range(L):
        p = psi[j]
        d = 2.0 * U * (p.real * p.real + p.imag * p.imag) - mu
        sq = p * p
        D[j, j] = -U * sq.imag
        D[j, L + j] = -(d - U * sq.real)
        D[L + j, j] = d + U * sq.real
        D[L + j, L + j] = U * sq.imag
        for q in range(counts[j]):
            k = table[j, q]
            D[j, L + k] += J
            D[L + j, k] -= J


@njit(cache=True, nogil=True)
def advance_tangent(psi, Q, h, nsteps, scheme, table, counts, J, U, mu, tol, maxit):
    """Advance ``psi`` and the tangent columns ``Q`` (``2L x p``) in place.

    The tangent update is the exact derivative of the midpoint map,
    ``(1 - h/2 D) dQ' = (1 + h/2 D) dQ`` with ``D`` evaluated at the midpoint.
    Returns False if an implicit solve failed.
    """
    L = psi.shape[0]
    y = np.empty(L, np.complex128)
    mid = np.empty(L, np.complex128)
    f = np.empty(L, np.complex128)
    D = np.empty((2 * L, 2 * L))
    eye = np.eye(2 * L)
    if scheme == MIDPOINT4:
        subs = np.array([_G1 * h, _G0 * h, _G1 * h])
    else:
        subs = np.array([h])
    for _ in range(nsteps):
        for hs in subs:
            if midpoint_solve(psi, hs, table, counts, J, U, mu, tol, maxit, y, mid, f) < 0:
                return False
            for j in range(L):
                mid[j] = 0.5 * (psi[j] + y[j])
            real_jacobian(mid, table, counts, J, U, mu, D)
            A = eye - 0.5 * hs * D
            B = eye + 0.5 * hs * D
            Q[:, :] = np.linalg.solve(A, B @ Q)
            for j in range(L):
                psi[j] = y[j]
    return True
