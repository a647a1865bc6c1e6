"""Independent closed-form references used by the tests."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc, erfcx


def sech_soliton(x, omega=1.0):
    """Cubic focusing ground state sqrt(2 omega) sech(sqrt(omega) x)."""
    return math.sqrt(2 * omega) / np.cosh(math.sqrt(omega) * x)


def _gauss_exp_conv(x, a, b):
    """int exp(-a y^2) exp(b |x - y|)... split form: returns (left, right) pieces.

    left  = int_{-inf}^{x} exp(-a y^2 - b y) dy * exp(b x)
    right = int_{x}^{inf}  exp(-a y^2 + b y) dy * exp(-b x)
    """
    c = 0.5 * math.sqrt(math.pi / a)
    sa = math.sqrt(a)
    # left: exponent b^2/(4a) + b x, erfc(sa (x + b/(2a)))... written stably below
    zl = sa * (-b / (2 * a) - x) * -1  # = sa (x + b/(2a))
    zr = sa * (x - b / (2 * a))
    left = c * np.exp(b * b / (4 * a) + b * x) * erfc(-zl)
    right = c * np.exp(b * b / (4 * a) - b * x) * erfc(zr)
    return left, right


def free_outgoing_upper(x, s, k):
    """u = (-d^2 - k^2 - i0)^{-1} exp(-x^2/(2 s^2)) with kernel i exp(ik|x|)/(2k)."""
    a = 1.0 / (2 * s * s)
    left, right = _gauss_exp_conv(x, a, 1j * k)
    return 1j / (2 * k) * (left + right)


def free_lower(x, s, kappa):
    """u = -(-d^2 + kappa^2)^{-1} exp(-x^2/(2 s^2)) with kernel -exp(-kappa|x|)/(2 kappa)."""
    a = 1.0 / (2 * s * s)
    sa = math.sqrt(a)
    c = 0.5 * math.sqrt(math.pi / a)
    z1 = sa * (kappa / (2 * a) - x)
    z2 = sa * (x + kappa / (2 * a))
    e = kappa * kappa / (4 * a)

    def piece(z, sign):
        # erfcx(z) exp(-a x^2) = erfc(z) exp(e + sign kappa x); use whichever form is finite
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = erfcx(z[pos]) * np.exp(-a * x[pos] ** 2)
        out[~pos] = erfc(z[~pos]) * np.exp(e + sign * kappa * x[~pos])
        return c * out

    return -(piece(z1, -1.0) + piece(z2, 1.0)) / (2 * kappa)
