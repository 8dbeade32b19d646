"""Complex amplitudes, the far-field double-slit model and the Born rule.

Each slit contributes a Fraunhofer amplitude

    psi_s(x) = N * sinc(pi a x / (lambda L)) * exp(+/- i pi d x / (lambda L))

with ``+`` for slit A and ``-`` for slit B, normalized so that the squared
modulus integrates to one over the finite scan window ``[-W, W]``.
"""

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import sici

from .exceptions import DomainError
from .validation import check_in_scan, check_probability

__all__ = [
    "ComplexAmp",
    "SlitLabel",
    "SlitGeometry",
    "signal_amplitude",
    "signal_amplitudes",
    "superpose",
    "born_probability",
    "beamsplitter_transfer",
    "beamsplitter_matrix",
    "envelope_moments",
]


@dataclass(frozen=True)
class ComplexAmp:
    """A finite complex probability amplitude."""

    re: float
    im: float = 0.0

    def __post_init__(self):
        re, im = float(self.re), float(self.im)
        if not (math.isfinite(re) and math.isfinite(im)):
            raise DomainError(f"non-finite amplitude ({self.re!r}, {self.im!r})")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, z):
        z = complex(z)
        return cls(z.real, z.imag)

    def __complex__(self):
        return complex(self.re, self.im)

    def __add__(self, other):
        return ComplexAmp.from_complex(complex(self) + complex(other))

    __radd__ = __add__

    def __mul__(self, other):
        return ComplexAmp.from_complex(complex(self) * complex(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ComplexAmp(-self.re, -self.im)

    def __abs__(self):
        return math.hypot(self.re, self.im)

    def conjugate(self):
        return ComplexAmp(self.re, -self.im)

    def isclose(self, other, atol=1e-12):
        return abs(complex(self) - complex(other)) <= atol


ZERO = ComplexAmp(0.0, 0.0)
ONE = ComplexAmp(1.0, 0.0)


class SlitLabel(enum.Enum):
    A = "A"
    B = "B"

    @property
    def sign(self):
        return 1.0 if self is SlitLabel.A else -1.0


@dataclass(frozen=True)
class SlitGeometry:
    """Double-slit geometry, all lengths in metres.

    The defaults put the 702.2 nm degenerate down-converted light through
    0.1 mm slits 0.3 mm apart onto a screen 1 m away; the +/-7 mm scan then
    holds six fringes inside the central diffraction lobe.
    """

    wavelength: float = 702.2e-9
    slit_separation: float = 0.3e-3
    slit_width: float = 0.1e-3
    screen_distance: float = 1.0
    scan_halfwidth: float = 7.0e-3

    def __post_init__(self):
        for name in (
            "wavelength",
            "slit_separation",
            "slit_width",
            "screen_distance",
            "scan_halfwidth",
        ):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be a positive length, got {value!r}")
            object.__setattr__(self, name, value)
        if self.slit_width >= self.slit_separation:
            raise DomainError("slit_width must be smaller than slit_separation")
        if self.scan_halfwidth <= self.fringe_period:
            raise DomainError(
                f"scan_halfwidth {self.scan_halfwidth!r} must exceed one fringe "
                f"period {self.fringe_period!r}"
            )

    @property
    def fringe_period(self):
        """Screen distance over which the slit-A/slit-B phase advances 2 pi."""
        return self.wavelength * self.screen_distance / self.slit_separation

    @property
    def fringe_wavenumber(self):
        """Slope of the relative phase, ``2 pi d / (lambda L)`` in rad/m."""
        return 2.0 * math.pi / self.fringe_period

    @property
    def envelope_scale(self):
        """``a / (lambda L)``; the envelope is ``np.sinc(envelope_scale * x)``."""
        return self.slit_width / (self.wavelength * self.screen_distance)

    def relative_phase(self, x):
        """arg psi_A(x) - arg psi_B(x)."""
        return self.fringe_wavenumber * np.asarray(x, dtype=float)

    def envelope(self, x):
        """Unnormalized single-slit intensity ``sinc^2``."""
        return np.sinc(self.envelope_scale * np.asarray(x, dtype=float)) ** 2


@lru_cache(maxsize=64)
def _normalization(geom):
    # int_{-W}^{W} sin^2(bx)/(bx)^2 dx = (2/b) (Si(2U) - sin^2(U)/U), U = bW
    b = math.pi * geom.envelope_scale
    u = b * geom.scan_halfwidth
    si, _ = sici(2.0 * u)
    integral = 2.0 / b * (si - math.sin(u) ** 2 / u)
    return 1.0 / math.sqrt(integral)


def signal_amplitudes(slit, x, geom):
    """Vectorized :func:`signal_amplitude`; returns a complex ndarray."""
    x = check_in_scan(x, geom.scan_halfwidth)
    slit = SlitLabel(slit)
    norm = _normalization(geom)
    phase = 0.5 * slit.sign * geom.fringe_wavenumber * x
    return norm * np.sinc(geom.envelope_scale * x) * np.exp(1j * phase)


def signal_amplitude(slit, x, geom):
    """Amplitude for the signal photon from ``slit`` to reach screen position ``x``."""
    x = float(x)
    return ComplexAmp.from_complex(complex(signal_amplitudes(slit, x, geom)))


def superpose(amps):
    amps = list(amps)
    if not amps:
        raise DomainError("cannot superpose an empty list of amplitudes")
    return ComplexAmp.from_complex(sum(complex(a) for a in amps))


def born_probability(amp):
    """|psi|^2 = psi * conj(psi), always real and non-negative."""
    return amp.re * amp.re + amp.im * amp.im


def beamsplitter_transfer(input_port, output_port, reflectivity):
    """Coefficient from ``input_port`` to ``output_port`` of a lossless splitter.

    Symmetric convention: staying on the same port index is transmission
    ``sqrt(1 - R)``, crossing over is reflection ``i sqrt(R)``.
    """
    if input_port not in (1, 2) or output_port not in (1, 2):
        raise DomainError("beam-splitter ports are 1 or 2")
    r = check_probability(reflectivity, "reflectivity")
    if input_port == output_port:
        return ComplexAmp(math.sqrt(1.0 - r), 0.0)
    return ComplexAmp(0.0, math.sqrt(r))


def beamsplitter_matrix(reflectivity):
    """2x2 unitary ``U[out - 1, in - 1]`` for the convention above."""
    return np.array(
        [
            [complex(beamsplitter_transfer(i, o, reflectivity)) for i in (1, 2)]
            for o in (1, 2)
        ]
    )


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def envelope_moments(edges, geom):
    """Per-bin integrals of the normalized single-slit intensity.

    Returns three arrays ``(I0, Ic, Is)`` holding, for each bin,
    ``int N^2 sinc^2 * {1, cos(kx), sin(kx)} dx`` with ``k`` the fringe
    wavenumber. ``I0`` sums to one over the full scan window.
    """
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    x = 0.5 * (hi + lo) + half * _GL_NODES[None, :]
    w = half * _GL_WEIGHTS[None, :]
    env = _normalization(geom) ** 2 * geom.envelope(x)
    kx = geom.fringe_wavenumber * x
    return (
        np.sum(w * env, axis=1),
        np.sum(w * env * np.cos(kx), axis=1),
        np.sum(w * env * np.sin(kx), axis=1),
    )
