"""Pure-numpy implementations of the hot ensemble kernels.

Kept in lockstep with the compiled versions in ``_kernels.pyx``; the two
backends must agree to rounding error (see tests/test_kernels.py).
"""

import numpy as np


def mean_and_cov(Y):
    """Particle mean and unbiased (N-1) sample covariance of an (N, d) array."""
    n = Y.shape[0]
    mean = Y.mean(axis=0)
    Yc = Y - mean
    cov = (Yc.T @ Yc) / (n - 1)
    return mean, cov


def cross_cov(Y, V):
    """Unbiased cross covariance between (N, d) states and (N, q) values."""
    n = Y.shape[0]
    Yc = Y - Y.mean(axis=0)
    Vc = V - V.mean(axis=0)
    return (Yc.T @ Vc) / (n - 1)


def linear_backward_step(Y, Eta, A, B, C, G, cn, dt):
    """One backward Euler-Maruyama step of the coupled linear particle system.

    Per particle: dY = (A y + B eta) dt + 0.5 dt * G (C y + cn), and the
    backward update is y <- y - dY.  G is the assimilation gain S C' and
    cn = C n for the current ensemble mean n.
    """
    drift = Y @ A.T + Eta @ B.T
    innov = Y @ C.T + cn
    return Y - drift * dt - innov @ G.T * (0.5 * dt)
