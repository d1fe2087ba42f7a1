"""Integrals of a population's continuous part over ellipsoids.

Integrals over ``E(m, G^2, r)`` are taken in the ellipsoid's own coordinates
``u = G^{-1}(x - m)``, where the domain is the ball of radius ``r``. The
integrand ``f(m + G u)`` is smooth there, so a fixed product rule on the
unit ball (Gauss-Legendre radially, trapezoid in angle) converges fast and,
unlike a fixed atom grid, varies smoothly with ``(m, G, r)``.

Densities with a jump (``uniform_ball``) lose this accuracy when the
ellipsoid crosses the jump.
"""

from functools import lru_cache

import numpy as np

DEFAULT_BALL_RULE = {1: (160,), 2: (64, 64), 3: (40, 24, 48)}


@lru_cache(maxsize=None)
def ball_rule(k, resolution=None):
    """Nodes ``v`` in the closed unit ball and weights summing to its volume."""
    res = resolution or DEFAULT_BALL_RULE[k]
    if k == 1:
        v, w = np.polynomial.legendre.leggauss(res[0])
        return v[:, None], w
    g, gw = np.polynomial.legendre.leggauss(res[0])
    rho = (g + 1) / 2
    wr = gw / 2 * rho ** (k - 1)
    if k == 2:
        t = np.arange(res[1]) * 2 * np.pi / res[1]
        dirs = np.column_stack([np.cos(t), np.sin(t)])
        dw = np.full(res[1], 2 * np.pi / res[1])
    elif k == 3:
        c, cw = np.polynomial.legendre.leggauss(res[1])
        a = np.arange(res[2]) * 2 * np.pi / res[2]
        s = np.sqrt(1 - c**2)
        dirs = np.column_stack(
            [np.outer(s, np.cos(a)).ravel(), np.outer(s, np.sin(a)).ravel(), np.repeat(c, res[2])]
        )
        dw = np.outer(cw, np.full(res[2], 2 * np.pi / res[2])).ravel()
    else:
        raise ValueError(f"ellipsoid quadrature supports k <= 3, got {k}")
    nodes = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, k)
    return nodes, np.outer(wr, dw).ravel()


def ellipsoid_nodes(spec, m, G, r, resolution=None):
    """Nodes ``u`` (ellipsoid coordinates) and weights for the continuous part.

    ``sum(weights * g(u))`` approximates ``int_{||u|| <= r} g(u) P(dx)``
    restricted to the continuous components of ``spec``.
    """
    k = spec.dim
    v, w = ball_rule(k, resolution)
    u = r * v
    x = m + u @ G.T
    dens = spec.density(x)
    scale = r**k * abs(np.linalg.det(G))
    return u, w * dens * scale


def ellipsoid_mass(spec, m, G, r, resolution=None):
    if r <= 0:
        return 0.0
    _, w = ellipsoid_nodes(spec, m, G, r, resolution)
    return float(w.sum())


def ellipsoid_moments(spec, m, G, r, resolution=None):
    """Mass, first and second moments of ``u`` over the ball of radius ``r``."""
    u, w = ellipsoid_nodes(spec, m, G, r, resolution)
    s0 = float(w.sum())
    s1 = w @ u
    s2 = (u * w[:, None]).T @ u
    return s0, s1, 0.5 * (s2 + s2.T)
