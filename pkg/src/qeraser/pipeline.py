"""End-to-end orchestration: network, events, coincidences, analysis."""

import time
from dataclasses import dataclass

import numpy as np

from .analysis import (
    MIN_COUNTS,
    distinguishability,
    fringe_visibility,
    no_signaling_check,
    retrocausality_audit,
    stepper_edges,
)
from .apparatus import IDLER_DETECTORS, idler_path_delay
from .coincidence import accumulate_joint, marginal_histogram, match_pairs
from .events import RunConfig, run_experiment
from .exceptions import DomainError

__all__ = ["RunResult", "Analysis", "analysis_edges", "analyze", "run_pipeline", "build_report"]

DEFAULT_WINDOW = 1e-9
DEFAULT_BINS = 128
_BOOTSTRAP_KEY = 0xB0075


def analysis_edges(config, bins=DEFAULT_BINS):
    w = config.geometry.scan_halfwidth
    if config.scan_positions is not None:
        return stepper_edges(config.scan_positions, w)
    if int(bins) < 3:
        raise DomainError("need at least 3 histogram bins to fit fringes")
    return np.linspace(-w, w, int(bins) + 1)


def _bootstrap_seed(seed, slot):
    return np.random.SeedSequence(seed, spawn_key=(_BOOTSTRAP_KEY, slot))


@dataclass
class Analysis:
    visibility: dict
    distinguishability: dict
    marginal: object
    no_signaling: object


def analyze(joints, marginal, net, config):
    """Fit every populated subensemble and the marginal.

    Subensembles with fewer than the minimum fit count are left out of the
    visibility map. Bootstrap seeds derive from ``config.seed`` so that the
    analysis is a pure function of the histograms and the configuration.
    """
    geom = config.geometry
    positions = config.scan_positions
    vis, dist = {}, {}
    for slot, det in enumerate(IDLER_DETECTORS, start=1):
        hist = joints.get(det)
        if hist is None or hist.counts.sum() < MIN_COUNTS:
            continue
        vis[det] = fringe_visibility(
            hist, geom, positions, random_state=_bootstrap_seed(config.seed, slot)
        )
        dist[det] = distinguishability(net, det)
    ns = no_signaling_check(
        joints, marginal, geom, mode=config.mode, positions=positions,
        random_state=_bootstrap_seed(config.seed, 0),
    )
    return Analysis(vis, dist, ns.marginal, ns)


@dataclass
class RunResult:
    config: RunConfig
    network: object
    stream: object
    pairs: object
    orphans: dict
    edges: np.ndarray
    joints: dict
    marginal: object
    analysis: Analysis
    audit: object
    window: float
    compensation: float
    wall_clock_s: float

    def histograms(self):
        return [*self.joints.values(), self.marginal] if self.joints else [self.marginal]


def run_pipeline(config, window=DEFAULT_WINDOW, bins=DEFAULT_BINS, threads=None):
    start = time.perf_counter()
    net = config.network()
    stream = run_experiment(config, threads=threads)
    edges = analysis_edges(config, bins)
    marginal = marginal_histogram(stream.signals, edges)
    if net.has_idler:
        compensation = idler_path_delay(net, IDLER_DETECTORS[0])
        pairs, orphans = match_pairs(stream.signals, stream.idlers, compensation, window)
        joints = accumulate_joint(pairs, edges)
    else:
        compensation = 0.0
        pairs, orphans, joints = None, {}, {}
    result = analyze(joints, marginal, net, config)
    audit = None
    if pairs is not None and len(pairs):
        audit = retrocausality_audit(pairs, result.visibility, result.distinguishability)
    return RunResult(
        config=config, network=net, stream=stream, pairs=pairs, orphans=orphans,
        edges=edges, joints=joints, marginal=marginal, analysis=result, audit=audit,
        window=window, compensation=compensation,
        wall_clock_s=time.perf_counter() - start,
    )


def build_report(config, analysis, audit, n_matched, wall_clock_s=None):
    """Report mapping with the documented field names.

    ``verdict`` is ``not_applicable`` for plain runs, which have no idler.
    ``wall_clock_s`` is the only field that is not reproducible.
    """
    detectors = {}
    for det, rep in analysis.visibility.items():
        d = analysis.distinguishability[det]
        comp = audit.complementarity.get(det) if audit is not None else None
        detectors[det.name] = {
            "V": rep.visibility,
            "phase": rep.phase,
            "stderr": rep.stderr,
            "D": d,
            "complementarity_pass": comp,
        }
    report = {
        "mode": config.mode.value,
        "n_pairs": config.n_pairs,
        "seed": config.seed,
        "detectors": detectors,
        "marginal_V": analysis.marginal.visibility,
        "min_delay_s": audit.min_delay if audit is not None else None,
        "max_delay_s": audit.max_delay if audit is not None else None,
        "verdict": audit.verdict if audit is not None else "not_applicable",
        "n_matched": n_matched,
    }
    if wall_clock_s is not None:
        report["wall_clock_s"] = wall_clock_s
    return report
