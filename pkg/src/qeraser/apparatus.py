"""The idler-side optical network and the joint two-photon distribution.

Three arrangements are supported:

``plain``
    ordinary double slit, no idler photon at all;
``marked``
    every idler goes to a detector that names its slit;
``kim``
    the delayed-choice eraser: 50/50 splitters BSa and BSb either send the
    idler straight to a which-path detector (D4 for A, D3 for B) or via a
    mirror to the erasing splitter BSc that feeds D1 and D2.
"""

import enum
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .exceptions import DomainError
from .optics import (
    ZERO,
    ComplexAmp,
    SlitLabel,
    beamsplitter_matrix,
    envelope_moments,
    signal_amplitudes,
)
from .validation import check_bin_edges, check_positive, check_probability

__all__ = [
    "SPEED_OF_LIGHT",
    "ApparatusMode",
    "DetectorId",
    "IDLER_DETECTORS",
    "OpticalNetwork",
    "build_apparatus",
    "idler_transfer",
    "joint_probability_density",
    "signal_only_density",
    "joint_bin_probabilities",
    "idler_path_delay",
]

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact


class ApparatusMode(enum.Enum):
    PLAIN = "plain"
    MARKED = "marked"
    KIM = "kim"


class DetectorId(enum.Enum):
    D0 = 0
    D1 = 1
    D2 = 2
    D3 = 3
    D4 = 4

    @property
    def label(self):
        return self.name

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                pass
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise DomainError(f"unknown detector {value!r}") from None


IDLER_DETECTORS = (DetectorId.D1, DetectorId.D2, DetectorId.D3, DetectorId.D4)
SLITS = (SlitLabel.A, SlitLabel.B)


@dataclass(frozen=True, eq=False)
class OpticalNetwork:
    """Immutable transfer table plus path lengths.

    ``transfer[(slit, detector)]`` is the idler amplitude; ``extra_path`` is
    the idler path excess over the signal path, per idler detector.
    """

    mode: ApparatusMode
    transfer: "MappingProxyType[tuple[SlitLabel, DetectorId], ComplexAmp]"
    extra_path: "MappingProxyType[DetectorId, float]"
    signal_path: float
    _matrix: np.ndarray = field(repr=False, default=None)

    def transfer_matrix(self):
        """Complex array ``[slit, detector - 1]``; empty in plain mode."""
        return self._matrix.copy()

    @property
    def has_idler(self):
        return self.mode is not ApparatusMode.PLAIN


def _kim_matrix(which_path_reflectivity, eraser_reflectivity, mirror_phase):
    # Each slit's idler enters port 1 of its own splitter (BSa for A, BSb for
    # B). Port 1 out goes to the which-path detector; port 2 out hits a
    # mirror and then BSc, on input port 1 (from A) or 2 (from B).
    bs = beamsplitter_matrix(which_path_reflectivity)
    first = bs @ np.array([1.0, 0.0])
    mirror = np.exp(1j * mirror_phase)
    arms = np.diag([first[1] * mirror, first[1] * mirror])
    erased = beamsplitter_matrix(eraser_reflectivity) @ arms  # rows D1, D2
    m = np.zeros((2, 4), dtype=complex)
    m[:, 0] = erased[0]
    m[:, 1] = erased[1]
    m[1, 2] = first[0]  # B -> D3
    m[0, 3] = first[0]  # A -> D4
    return m


def build_apparatus(
    geom,
    mode,
    extra_path=2.5,
    *,
    which_path_reflectivity=0.5,
    eraser_reflectivity=0.5,
    mirror_phase=0.0,
):
    """Construct the optical network for ``mode``.

    The signal arm is taken to be the slit-to-screen distance of ``geom``.
    The reflectivity and mirror-phase keywords only matter in kim mode.
    """
    mode = ApparatusMode(mode)
    extra_path = check_positive(extra_path, "extra_path", strict=False)
    check_probability(which_path_reflectivity, "which_path_reflectivity")
    check_probability(eraser_reflectivity, "eraser_reflectivity")

    if mode is ApparatusMode.PLAIN:
        matrix = np.zeros((2, 0), dtype=complex)
        transfer, paths = {}, {}
    else:
        if mode is ApparatusMode.KIM:
            matrix = _kim_matrix(which_path_reflectivity, eraser_reflectivity, mirror_phase)
        else:
            matrix = np.zeros((2, 4), dtype=complex)
            matrix[0, 3] = 1.0
            matrix[1, 2] = 1.0
        transfer = {
            (slit, det): ComplexAmp.from_complex(matrix[i, j])
            for i, slit in enumerate(SLITS)
            for j, det in enumerate(IDLER_DETECTORS)
        }
        paths = {det: extra_path for det in IDLER_DETECTORS}
    matrix.setflags(write=False)
    return OpticalNetwork(
        mode=mode,
        transfer=MappingProxyType(transfer),
        extra_path=MappingProxyType(paths),
        signal_path=geom.screen_distance,
        _matrix=matrix,
    )


def _idler_detector(net, det):
    det = DetectorId.parse(det)
    if det is DetectorId.D0:
        raise DomainError("D0 detects signal photons, not idlers")
    if not net.has_idler:
        raise DomainError("plain mode has no idler photon")
    return det


def idler_transfer(net, slit, det):
    det = _idler_detector(net, det)
    return net.transfer.get((SlitLabel(slit), det), ZERO)


def joint_probability_density(net, x, det, geom):
    """Born density for (signal at ``x``, idler at ``det``), per metre.

    Works on scalars or arrays of positions.
    """
    det = _idler_detector(net, det)
    t_a = complex(net.transfer[(SlitLabel.A, det)])
    t_b = complex(net.transfer[(SlitLabel.B, det)])
    amp = (
        signal_amplitudes(SlitLabel.A, x, geom) * t_a
        + signal_amplitudes(SlitLabel.B, x, geom) * t_b
    ) / np.sqrt(2.0)
    density = np.abs(amp) ** 2
    return float(density) if np.ndim(density) == 0 else density


def signal_only_density(x, geom):
    """Unnormalized plain-mode density ``|psi_A + psi_B|^2 / 2``."""
    amp = signal_amplitudes(SlitLabel.A, x, geom) + signal_amplitudes(SlitLabel.B, x, geom)
    density = np.abs(amp) ** 2 / 2.0
    return float(density) if np.ndim(density) == 0 else density


def joint_bin_probabilities(net, edges, geom):
    """Probability mass of each (detector, bin) cell.

    Returns an array of shape ``(4, n_bins)`` for idler modes, or
    ``(1, n_bins)`` holding the normalized signal-only distribution in
    plain mode. Uses the analytic moment decomposition

        |t_A psi_A + t_B psi_B|^2 / 2
          = N^2 s^2 / 2 * (|t_A|^2 + |t_B|^2 + 2 Re(t_A conj(t_B) e^{ikx})).
    """
    edges = check_bin_edges(edges)
    if edges[0] < -geom.scan_halfwidth or edges[-1] > geom.scan_halfwidth:
        raise DomainError("bin edges extend beyond the scan range")
    i0, ic, is_ = envelope_moments(edges, geom)
    if not net.has_idler:
        p = i0 + ic
        return (p / p.sum())[None, :]
    m = net.transfer_matrix()
    t_a, t_b = m[0][:, None], m[1][:, None]
    cross = t_a * np.conj(t_b)
    p = 0.5 * (
        (np.abs(t_a) ** 2 + np.abs(t_b) ** 2) * i0
        + 2.0 * (cross.real * ic - cross.imag * is_)
    )
    return np.clip(p, 0.0, None)


def idler_path_delay(net, det):
    """Extra time of flight of the idler to ``det`` relative to the signal."""
    det = DetectorId.parse(det)
    if det is DetectorId.D0:
        raise DomainError("D0 is the signal detector; it has no idler delay")
    if det not in net.extra_path:
        raise DomainError(f"no idler path to {det.name} in {net.mode.value} mode")
    return net.extra_path[det] / SPEED_OF_LIGHT
