"""Pure-NumPy reference implementation of the propagation kernels.

These functions define the semantics that the compiled backend mirrors.
Arithmetic is written component-wise (columns of the particle array) in the
same evaluation order as the C loops, so the linear-model kernels produce
bit-identical results across backends. The Lotka-Volterra kernels evaluate
logarithms (NumPy's vectorized log and libm may differ in the last ulp), so
their outputs agree only to floating-point rounding.

Shared conventions:
  * particles are float64 arrays of shape (N, 2), C-contiguous;
  * ``dW`` holds Brownian increments of shape (N, K, 2) with per-coordinate
    variance ``dt`` (K = number of sub-steps of the interval);
  * guided propagation iterates K-1 Euler steps (the interval endpoints are
    pinned), while the Girsanov-type correction integrand is accumulated at
    the K left grid points;
  * dead particles (Lotka-Volterra state leaving the positive quadrant) stop
    evolving and report ``alive = False``; their log-weight is -inf.
"""

import numpy as np

BACKEND_NAME = "python"


def ou_bridge(A, a, sig, B, M, Sinv, x0, x1, dW, dt, paths_out=None):
    """Guided-bridge correction sum for a linear model with a linear auxiliary.

    Model drift is -A x, model diffusion ``sig`` (a = sig sig^T); the
    auxiliary has drift B x and the same constant diffusion, so the trace
    part of the correction integrand vanishes identically and only the
    drift-mismatch dot product is accumulated.

    Parameters
    ----------
    M, Sinv : (K, 2, 2) arrays
        Per-sub-step transition matrix of the auxiliary over the remaining
        time and inverse of its covariance; the gradient of the auxiliary
        transition log-density at the sub-step is M^T Sinv (x1 - M x).
    paths_out : (N, K+1, 2) array, optional
        If given, filled with the bridge path including both endpoints.

    Returns
    -------
    (N,) array with sum_j L(t_j, X_j) * dt.
    """
    N, K = dW.shape[0], dW.shape[1]
    xa = x0[:, 0].copy()
    xb = x0[:, 1].copy()
    ea = x1[:, 0]
    eb = x1[:, 1]
    lsum = np.zeros(N)
    if paths_out is not None:
        paths_out[:, 0, 0] = xa
        paths_out[:, 0, 1] = xb
        paths_out[:, K, 0] = ea
        paths_out[:, K, 1] = eb
    for j in range(K):
        d0 = ea - (M[j, 0, 0] * xa + M[j, 0, 1] * xb)
        d1 = eb - (M[j, 1, 0] * xa + M[j, 1, 1] * xb)
        t0 = Sinv[j, 0, 0] * d0 + Sinv[j, 0, 1] * d1
        t1 = Sinv[j, 1, 0] * d0 + Sinv[j, 1, 1] * d1
        g0 = M[j, 0, 0] * t0 + M[j, 1, 0] * t1
        g1 = M[j, 0, 1] * t0 + M[j, 1, 1] * t1
        m0 = -(A[0, 0] * xa + A[0, 1] * xb)
        m1 = -(A[1, 0] * xa + A[1, 1] * xb)
        n0 = B[0, 0] * xa + B[0, 1] * xb
        n1 = B[1, 0] * xa + B[1, 1] * xb
        lsum = lsum + ((m0 - n0) * g0 + (m1 - n1) * g1) * dt
        if j < K - 1:
            f0 = m0 + (a[0, 0] * g0 + a[0, 1] * g1)
            f1 = m1 + (a[1, 0] * g0 + a[1, 1] * g1)
            xa = xa + f0 * dt + (sig[0, 0] * dW[:, j, 0] + sig[0, 1] * dW[:, j, 1])
            xb = xb + f1 * dt + (sig[1, 0] * dW[:, j, 0] + sig[1, 1] * dW[:, j, 1])
            if paths_out is not None:
                paths_out[:, j + 1, 0] = xa
                paths_out[:, j + 1, 1] = xb
    return lsum


def lv_bridge(alpha, beta, gamma, zeta, s1, s2, literal, r10, r11, r20, r21,
              x0, x1, dW, dt, h, paths_out=None):
    """Guided-bridge correction sum for the stochastic predator-prey model.

    The auxiliary is per-dimension geometric Brownian motion whose growth
    rate interpolates linearly in time between ``r{d}0`` (interval start)
    and ``r{d}1`` (interval end); its transition to the interval endpoint is
    log-normal. With ``literal`` the model's second diffusion entry is
    sigma2 * x1 (first component), otherwise sigma2 * x2.

    Returns
    -------
    lsum : (N,) array, -inf where the particle died.
    alive : (N,) bool array.
    """
    N, K = dW.shape[0], dW.shape[1]
    s1sq = s1 * s1
    s2sq = s2 * s2
    xa = x0[:, 0].copy()
    xb = x0[:, 1].copy()
    ea = x1[:, 0]
    eb = x1[:, 1]
    log_ea = np.log(ea)
    log_eb = np.log(eb)
    lsum = np.zeros(N)
    alive = (xa > 0.0) & (xb > 0.0)
    if paths_out is not None:
        paths_out[:, 0, 0] = xa
        paths_out[:, 0, 1] = xb
        paths_out[:, K, 0] = ea
        paths_out[:, K, 1] = eb
    for j in range(K):
        tau = h - j * dt
        u = (j * dt) / h
        c1 = r10 * (1.0 - u) + r11 * u
        c2 = r20 * (1.0 - u) + r21 * u
        i1 = tau * (c1 + r11) * 0.5
        i2 = tau * (c2 + r21) * 0.5
        with np.errstate(invalid="ignore", divide="ignore"):
            m1 = log_ea - np.log(xa) - i1 + s1sq * tau * 0.5
            m2 = log_eb - np.log(xb) - i2 + s2sq * tau * 0.5
            g1 = m1 / (xa * s1sq * tau)
            g2 = m2 / (xb * s2sq * tau)
            mu1 = xa * (alpha - beta * xb)
            mu2 = xb * (zeta * xa - gamma)
            n1 = xa * c1
            n2 = xb * c2
            ell = (mu1 - n1) * g1 + (mu2 - n2) * g2
            if literal:
                # a - a~ differs only in the (2,2) entry.
                h22 = -(1.0 + m2) / (xb * xb * s2sq * tau)
                ell = ell - 0.5 * (s2sq * (xa * xa - xb * xb)) * (-h22 - g2 * g2)
            lsum = np.where(alive, lsum + ell * dt, lsum)
            if j < K - 1:
                a11 = s1sq * xa * xa
                a22 = s2sq * (xa * xa if literal else xb * xb)
                f1 = mu1 + a11 * g1
                f2 = mu2 + a22 * g2
                d1 = s1 * xa
                d2 = s2 * (xa if literal else xb)
                na = xa + f1 * dt + d1 * dW[:, j, 0]
                nb = xb + f2 * dt + d2 * dW[:, j, 1]
                ok = alive & (na > 0.0) & (nb > 0.0)
                xa = np.where(ok, na, xa)
                xb = np.where(ok, nb, xb)
                alive = ok
                if paths_out is not None:
                    paths_out[:, j + 1, 0] = xa
                    paths_out[:, j + 1, 1] = xb
    lsum = np.where(alive, lsum, -np.inf)
    return lsum, alive


def ou_euler(A, sig, x0, dW, dt):
    """Euler-Maruyama propagation of the linear model over all given steps."""
    xa = x0[:, 0].copy()
    xb = x0[:, 1].copy()
    K = dW.shape[1]
    for j in range(K):
        m0 = -(A[0, 0] * xa + A[0, 1] * xb)
        m1 = -(A[1, 0] * xa + A[1, 1] * xb)
        xa = xa + m0 * dt + (sig[0, 0] * dW[:, j, 0] + sig[0, 1] * dW[:, j, 1])
        xb = xb + m1 * dt + (sig[1, 0] * dW[:, j, 0] + sig[1, 1] * dW[:, j, 1])
    return np.stack([xa, xb], axis=1)


def lv_euler(alpha, beta, gamma, zeta, s1, s2, literal, x0, dW, dt):
    """Euler-Maruyama propagation of the predator-prey model.

    Returns (states, alive); dead particles keep their last positive state.
    """
    xa = x0[:, 0].copy()
    xb = x0[:, 1].copy()
    alive = (xa > 0.0) & (xb > 0.0)
    K = dW.shape[1]
    for j in range(K):
        mu1 = xa * (alpha - beta * xb)
        mu2 = xb * (zeta * xa - gamma)
        d1 = s1 * xa
        d2 = s2 * (xa if literal else xb)
        na = xa + mu1 * dt + d1 * dW[:, j, 0]
        nb = xb + mu2 * dt + d2 * dW[:, j, 1]
        ok = alive & (na > 0.0) & (nb > 0.0)
        xa = np.where(ok, na, xa)
        xb = np.where(ok, nb, xb)
        alive = ok
    return np.stack([xa, xb], axis=1), alive
