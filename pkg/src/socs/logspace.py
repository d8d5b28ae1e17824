"""Complex-logarithm arithmetic.

Values are stored as complex128 ``log|z| + i arg z`` with the argument in
(-pi, pi].  Zero is the sentinel ``-inf + 0j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PI = math.pi
ZERO = complex(-np.inf, 0.0)


@dataclass(frozen=True)
class LogComplex:
    log_mag: float
    arg: float

    @classmethod
    def from_log(cls, z: complex) -> "LogComplex":
        z = complex(wrap(np.asarray(z, dtype=np.complex128)))
        return cls(z.real, z.imag)

    @classmethod
    def from_value(cls, v: complex) -> "LogComplex":
        return cls.from_log(clog(v))

    @property
    def is_zero(self) -> bool:
        return self.log_mag == -math.inf

    def to_complex(self) -> complex:
        if self.is_zero:
            return 0j
        r = math.exp(self.log_mag)
        return complex(r * math.cos(self.arg), r * math.sin(self.arg))

    def as_log(self) -> complex:
        return complex(self.log_mag, self.arg)


@dataclass(frozen=True)
class LogSign:
    log_abs: float
    sign: float

    def to_real(self) -> float:
        return 0.0 if self.sign == 0 else self.sign * math.exp(self.log_abs)


def clog(v) -> np.ndarray:
    """Complex log with the zero sentinel and a normalized argument."""
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.log(np.asarray(v, dtype=np.complex128))
    return wrap(z)


def wrap(z: np.ndarray) -> np.ndarray:
    """Normalize arguments into (-pi, pi] and fix the zero sentinel."""
    z = np.asarray(z, dtype=np.complex128)
    re, im = z.real, z.imag
    bad = (im > PI) | (im <= -PI)
    if np.any(bad):
        im = np.where(bad, np.mod(im + PI, 2 * PI) - PI, im)
        im = np.where(im <= -PI, im + 2 * PI, im)
    zero = re == -np.inf
    if np.any(zero):
        im = np.where(zero, 0.0, im)
    return re + 1j * im


def weighted_lse(log_w: np.ndarray, values: np.ndarray) -> np.ndarray:
    """log(sum_k w_k exp(values_k)) along axis 0, shifted by the max real part."""
    t = values + log_w.reshape((-1,) + (1,) * (values.ndim - 1))
    re = t.real
    with np.errstate(invalid="ignore"):
        m = np.max(re, axis=0)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(invalid="ignore", over="ignore", under="ignore"):
        s = np.sum(np.exp(t - m), axis=0)
    return wrap(m + clog(s))


def lse2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise log(exp(a) + exp(b))."""
    m = np.maximum(a.real, b.real)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(a - m) + np.exp(b - m)
    return wrap(m + clog(s))


def logsumexp_complex(weights, values) -> LogComplex:
    """log(sum_k weights_k * exp(values_k)) for complex logs ``values``."""
    w = np.asarray(weights, dtype=np.complex128).reshape(-1)
    v = np.asarray([x.as_log() if isinstance(x, LogComplex) else x for x in values],
                   dtype=np.complex128).reshape(-1)
    if w.size == 0 or w.size != v.size:
        raise ValueError("need at least one term and one weight per value")
    keep = (v.real != -np.inf) & (w != 0)
    if not np.any(keep):
        return LogComplex(-math.inf, 0.0)
    t = clog(w[keep]) + v[keep]
    m = t.real.max()
    with np.errstate(under="ignore"):
        terms = np.exp(t - m)
    s = terms.sum()
    # a sum below the rounding floor of its terms is an exact cancellation
    if abs(s) <= 4 * terms.size * np.finfo(float).eps * np.abs(terms).sum():
        return LogComplex(-math.inf, 0.0)
    return LogComplex.from_log(m + complex(clog(s)))


def logsign_lse(w: np.ndarray, la: np.ndarray, sg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sign-aware log-sum-exp over axis 0 for real weights."""
    with np.errstate(invalid="ignore"):
        m = np.max(np.where(sg != 0, la, -np.inf), axis=0)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(w.reshape((-1,) + (1,) * (la.ndim - 1)) * sg * np.exp(la - m), axis=0)
    with np.errstate(divide="ignore"):
        return m + np.log(np.abs(s)), np.sign(s)
