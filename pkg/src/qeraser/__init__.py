"""Delayed-choice quantum eraser simulator.

Entangled signal/idler pairs are propagated through a double slit and an
idler-side beam-splitter network, detections are sampled as timestamped
event streams, matched by a delay-compensated coincidence counter, and the
resulting position histograms are analyzed for fringe visibility.
"""

from .analysis import (
    FringeVisibilityEstimator,
    complementarity_check,
    distinguishability,
    fringe_visibility,
    no_signaling_check,
    retrocausality_audit,
)
from .apparatus import (
    ApparatusMode,
    DetectorId,
    OpticalNetwork,
    build_apparatus,
    idler_path_delay,
    idler_transfer,
    joint_probability_density,
)
from .coincidence import (
    CoincidenceMatcher,
    JointHistogram,
    accumulate_joint,
    marginal_histogram,
    match_pairs,
)
from .events import DetectionRecord, EventStream, RunConfig, run_experiment, sample_pair
from .optics import (
    ComplexAmp,
    SlitGeometry,
    SlitLabel,
    beamsplitter_transfer,
    born_probability,
    signal_amplitude,
    superpose,
)
from .pipeline import run_pipeline

__version__ = "0.1.0"
