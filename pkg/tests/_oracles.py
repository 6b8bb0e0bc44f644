"""Independent reference implementations used only by the tests.

These deliberately avoid the algebra used inside `axlandau.kernel`
(polynomial fits, series expansions, reduction identities) so that
agreement is meaningful evidence rather than self-comparison.
"""

import math

import numpy as np


def agm_KE(m: float):
    """Complete elliptic integrals K(m), E(m) by the arithmetic-geometric mean.

    K = pi / (2 * AGM(1, sqrt(1-m))); E follows from the c_n sequence:
    E = K * (1 - sum_n 2^{n-1} c_n^2) with c_0^2 = m.
    """
    if not 0.0 <= m < 1.0:
        raise ValueError("m must be in [0, 1)")
    a, b = 1.0, math.sqrt(1.0 - m)
    s = 0.5 * m
    pow2 = 0.5
    # The iterates can land on a persistent one-ULP gap, so the stopping test
    # must not demand more than double precision; the dropped tail of the E sum
    # is O(2^n c^2) ~ 1e-28 at that point.  The cap is unreachable (quadratic
    # convergence) and guards against non-termination for any input.
    for _ in range(64):
        if a - b <= 4e-16 * a:
            break
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        pow2 *= 2.0
        s += pow2 * c * c
    K = math.pi / (2.0 * a)
    return K, K * (1.0 - s)


def landau_tensor_reference(v, vbar):
    """U(v, vbar) = (|d|^2 I - d d^T)/|d|^3 straight from the definition."""
    d = np.asarray(v, dtype=float) - np.asarray(vbar, dtype=float)
    n2 = float(d @ d)
    n = math.sqrt(n2)
    return (n2 * np.eye(3) - np.outer(d, d)) / n**3


def _azimuthal_integrals(r, z, rbar, zbar, nphi):
    """Midpoint-rule azimuthal integrals of the 3-D tensor (vectorized).

    Returns the 2x2 diffusion tensor (outer-plane components of the plain
    integral) and the 2x2 friction tensor whose first column picks up the
    inner point's radial direction via cos/sin factors.
    """
    phi = (np.arange(nphi) + 0.5) * (2.0 * np.pi / nphi)
    cph, sph = np.cos(phi), np.sin(phi)
    dx = r - rbar * cph
    dy = -rbar * sph
    dz = z - zbar
    n2 = dx * dx + dy * dy + dz * dz
    inv3 = n2 ** (-1.5)
    # tensor entries (xx, xz, zz, xy) of (n2 I - d d^T)/n^3
    Uxx = (n2 - dx * dx) * inv3
    Uxz = (-dx * dz) * inv3
    Uzz = (n2 - dz * dz) * inv3
    Uxy = (-dx * dy) * inv3
    Uzy = (-dz * dy) * inv3
    w = 2.0 * np.pi / nphi
    UD = np.array(
        [[Uxx.sum(), Uxz.sum()], [Uxz.sum(), Uzz.sum()]]
    ) * w
    UK = np.array(
        [
            [(Uxx * cph + Uxy * sph).sum(), Uxz.sum()],
            [(Uxz * cph + Uzy * sph).sum(), Uzz.sum()],
        ]
    ) * w
    return UK, UD


def pair_quadrature(r, z, rbar, zbar, rtol=1e-12, n0=256, nmax=1 << 21):
    """Adaptive azimuthal quadrature of the tensor pair.

    The integrand is smooth and 2*pi periodic for non-coincident pairs, so
    the midpoint rule converges geometrically; the point count doubles
    until two successive levels agree to rtol (relative to the largest
    entry).
    """
    n = n0
    UK, UD = _azimuthal_integrals(r, z, rbar, zbar, n)
    while n < nmax:
        n *= 2
        UK2, UD2 = _azimuthal_integrals(r, z, rbar, zbar, n)
        scale = max(np.abs(UK2).max(), np.abs(UD2).max())
        err = max(np.abs(UK2 - UK).max(), np.abs(UD2 - UD).max())
        UK, UD = UK2, UD2
        if err <= rtol * scale:
            return UK, UD
    raise RuntimeError("azimuthal quadrature failed to converge")
