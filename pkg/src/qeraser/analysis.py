"""Fringe visibility, which-path distinguishability and the timing audit."""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .apparatus import (
    IDLER_DETECTORS,
    DetectorId,
    joint_probability_density,
    signal_only_density,
)
from .coincidence import ALL, PairTable
from .exceptions import BinningError, DomainError, FitError
from .optics import SlitLabel, envelope_moments
from .validation import check_bin_edges

__all__ = [
    "VisibilityReport",
    "AuditReport",
    "NoSignalingReport",
    "FringeVisibilityEstimator",
    "fringe_visibility",
    "distinguishability",
    "complementarity_check",
    "no_signaling_check",
    "retrocausality_audit",
    "judge_audit",
    "chi_square_gof",
    "binned_density_oracle",
    "stepper_edges",
    "write_report",
    "read_report",
]

MIN_COUNTS = 1000


@dataclass(frozen=True)
class VisibilityReport:
    detector: object
    visibility: float
    phase: float
    stderr: float
    phase_stderr: float = float("nan")
    amplitude: float = float("nan")
    n_counts: int = 0


class FringeVisibilityEstimator(BaseEstimator):
    """Envelope-fixed sinusoidal fit of a position histogram.

    The model for the expected counts in a bin is

        A * int_bin env(x) * (1 + V cos(k x + phase)) dx

    with ``env`` the single-slit sinc^2 envelope and ``k`` the fringe
    wavenumber, both fixed by ``geometry``. Writing the modulation as
    ``b cos(kx) + c sin(kx)`` makes the least-squares problem linear, so
    the fit is exact and ``V = hypot(b, c) / A`` is non-negative by
    construction.

    Parameters
    ----------
    geometry : SlitGeometry
    n_bootstrap : int, default=200
        Multinomial resamples of the histogram used for ``stderr_``.
    random_state : int or None, default=0
    positions : array-like or None
        For stepper scans: the single scan position inside each bin. The
        design then samples the model at those points instead of
        integrating it over the bin.
    min_counts : int, default=1000

    Attributes
    ----------
    visibility_, phase_, amplitude_ : float
    stderr_, phase_stderr_ : float
    """

    def __init__(self, geometry=None, n_bootstrap=200, random_state=0,
                 positions=None, min_counts=MIN_COUNTS):
        self.geometry = geometry
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state
        self.positions = positions
        self.min_counts = min_counts

    def _design(self, edges):
        geom = self.geometry
        if self.positions is None:
            return np.column_stack(envelope_moments(edges, geom))
        x = np.asarray(self.positions, dtype=float)
        if x.size != edges.size - 1:
            raise BinningError("need one scan position per bin")
        env = geom.envelope(x)
        kx = geom.fringe_wavenumber * x
        return np.column_stack([env, env * np.cos(kx), env * np.sin(kx)])

    @staticmethod
    def _params(coef):
        a, b, c = coef
        return np.hypot(b, c) / a, np.arctan2(-c, b)

    def fit(self, X, y):
        """Fit bin edges ``X`` (length n + 1) to counts ``y`` (length n)."""
        if self.geometry is None:
            raise DomainError("FringeVisibilityEstimator needs a geometry")
        edges = check_bin_edges(X)
        counts = np.asarray(y, dtype=float)
        if counts.shape != (edges.size - 1,):
            raise BinningError("need exactly one count per bin")
        total = counts.sum()
        if total < self.min_counts:
            raise DomainError(
                f"histogram holds {int(total)} counts, at least {self.min_counts} needed"
            )
        design = self._design(edges)
        scale = np.abs(design).max(axis=0)
        scale[scale == 0] = 1.0
        coef, _, rank, sv = np.linalg.lstsq(design / scale, counts, rcond=None)
        coef = coef / scale
        diagnostics = {"rank": int(rank), "singular_values": sv.tolist(), "coef": coef.tolist()}
        if rank < 3:
            raise FitError("fringe design matrix is rank deficient", diagnostics)
        if not np.all(np.isfinite(coef)) or coef[0] <= 0:
            raise FitError("fit produced a non-positive envelope amplitude", diagnostics)

        self.coef_ = coef
        self.amplitude_ = float(coef[0])
        v, phi = self._params(coef)
        self.visibility_, self.phase_ = float(v), float(phi)

        pinv = np.linalg.pinv(design)
        rng = np.random.default_rng(self.random_state)
        resampled = rng.multinomial(int(round(total)), counts / total, size=self.n_bootstrap)
        boot = pinv @ resampled.T.astype(float)
        vb, pb = self._params(boot)
        self.stderr_ = float(np.std(vb, ddof=1)) if self.n_bootstrap > 1 else float("nan")
        dphi = np.angle(np.exp(1j * (pb - self.phase_)))
        self.phase_stderr_ = float(np.std(dphi, ddof=1)) if self.n_bootstrap > 1 else float("nan")
        self.n_counts_ = int(round(total))
        return self

    def predict(self, X):
        """Expected counts per bin for edges ``X`` under the fitted model."""
        check_is_fitted(self, "coef_")
        return self._design(check_bin_edges(X)) @ self.coef_


def fringe_visibility(hist, geom, positions=None, n_bootstrap=200, random_state=0):
    """Fit ``hist`` and return a :class:`VisibilityReport`."""
    est = FringeVisibilityEstimator(
        geom, n_bootstrap=n_bootstrap, random_state=random_state, positions=positions
    ).fit(hist.bin_edges, hist.counts)
    return VisibilityReport(
        detector=hist.detector,
        visibility=est.visibility_,
        phase=est.phase_,
        stderr=est.stderr_,
        phase_stderr=est.phase_stderr_,
        amplitude=est.amplitude_,
        n_counts=est.n_counts_,
    )


def distinguishability(net, det):
    """``| |t_A|^2 - |t_B|^2 | / (|t_A|^2 + |t_B|^2)`` for idler detector ``det``."""
    det = DetectorId.parse(det)
    if det is DetectorId.D0 or not net.has_idler:
        raise DomainError("distinguishability needs an idler detector")
    wa = abs(complex(net.transfer[(SlitLabel.A, det)])) ** 2
    wb = abs(complex(net.transfer[(SlitLabel.B, det)])) ** 2
    if wa + wb == 0:
        raise DomainError(f"no idler amplitude reaches {det.name}")
    return abs(wa - wb) / (wa + wb)


def complementarity_check(visibility, distinguishability, tolerance=0.0):
    """True iff ``V^2 + D^2 <= 1 + tolerance``."""
    upper = 1.0 + tolerance
    for name, v in (("visibility", visibility), ("distinguishability", distinguishability)):
        if not 0.0 <= v <= upper:
            raise DomainError(f"{name} {v!r} outside [0, {upper!r}]")
    return visibility**2 + distinguishability**2 <= upper


@dataclass(frozen=True)
class NoSignalingReport:
    partition_exact: bool
    max_partition_diff: int
    marginal: VisibilityReport
    threshold: float
    fringe_free: bool
    exempt: bool = False


def no_signaling_check(joints, marginal, geom, threshold=0.05, mode=None,
                       positions=None, random_state=0):
    """Check that the subensembles partition the marginal and that the
    marginal itself carries no fringes.

    Plain-mode runs have no idler to condition on; they are reported as
    ``exempt`` and their marginal is expected to show fringes.
    """
    hists = list(joints.values()) if isinstance(joints, dict) else list(joints)
    for h in hists:
        if not np.array_equal(h.bin_edges, marginal.bin_edges):
            raise BinningError("joint and marginal histograms use different bins")
    total = np.zeros_like(marginal.counts)
    for h in hists:
        total = total + h.counts
    diff = int(np.abs(total - marginal.counts).max()) if hists else 0
    exempt = getattr(mode, "value", mode) == "plain"
    vis = fringe_visibility(marginal, geom, positions, random_state=random_state)
    return NoSignalingReport(
        partition_exact=bool(hists) and diff == 0,
        max_partition_diff=diff,
        marginal=vis,
        threshold=threshold,
        fringe_free=vis.visibility <= threshold,
        exempt=exempt,
    )


@dataclass(frozen=True)
class AuditReport:
    min_delay: float
    max_delay: float
    visibility: dict
    distinguishability: dict
    complementarity: dict = field(default_factory=dict)
    classification: dict = field(default_factory=dict)
    verdict: str = "violated"


def retrocausality_audit(pairs, visreports, distinguishabilities,
                         wave_threshold=0.9, particle_threshold=0.1, n_sigma=5.0):
    """Check that every idler is detected after its signal photon and that
    each subensemble's fringe visibility matches the which-path content of
    its idler detector.

    A ``consistent`` verdict means the data look like delayed,
    information-conditioned sorting of already recorded signal positions.
    Detectors missing from either mapping (e.g. unreachable ones) are
    skipped.
    """
    if isinstance(pairs, PairTable):
        delays = pairs.delay
    else:
        delays = np.array([p.idler.timestamp - p.signal.timestamp for p in pairs])
    if delays.size == 0:
        raise DomainError("audit needs at least one matched pair")
    return judge_audit(float(delays.min()), float(delays.max()), visreports,
                       distinguishabilities, wave_threshold, particle_threshold, n_sigma)


def judge_audit(min_delay, max_delay, visreports, distinguishabilities,
                wave_threshold=0.9, particle_threshold=0.1, n_sigma=5.0):
    """Verdict from delay extremes and per-detector fits."""
    comp, classes = {}, {}
    for det in IDLER_DETECTORS:
        if det not in visreports or det not in distinguishabilities:
            continue
        rep, d = visreports[det], distinguishabilities[det]
        tol = n_sigma * rep.stderr
        v = min(rep.visibility, 1.0 + tol)
        comp[det] = complementarity_check(v, d, tol)
        if d <= particle_threshold:
            classes[det] = ("wave", rep.visibility >= wave_threshold)
        elif d >= 1.0 - particle_threshold:
            classes[det] = ("particle", rep.visibility <= particle_threshold)
        else:
            classes[det] = ("partial", True)
    ok = min_delay > 0 and all(comp.values()) and all(c[1] for c in classes.values())
    return AuditReport(
        min_delay=min_delay,
        max_delay=max_delay,
        visibility=dict(visreports),
        distinguishability=dict(distinguishabilities),
        complementarity=comp,
        classification=classes,
        verdict="consistent" if ok else "violated",
    )


def chi_square_gof(observed, probabilities, min_expected=5.0):
    """Pearson goodness of fit of ``observed`` counts to a binned shape.

    Adjacent bins are pooled left to right until each group expects at
    least ``min_expected`` counts. Returns ``(statistic, dof, p_value)``.
    """
    obs = np.asarray(observed, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if obs.shape != p.shape:
        raise BinningError("observed and expected differ in shape")
    n = obs.sum()
    if n <= 0 or p.sum() <= 0:
        raise DomainError("chi-square needs positive totals")
    exp = n * p / p.sum()
    groups_o, groups_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            groups_o.append(acc_o)
            groups_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if groups_e:
            groups_o[-1] += acc_o
            groups_e[-1] += acc_e
        else:
            groups_o.append(acc_o)
            groups_e.append(acc_e)
    go, ge = np.array(groups_o), np.array(groups_e)
    dof = go.size - 1
    if dof < 1:
        raise DomainError("too few populated bins for a chi-square test")
    stat = float(np.sum((go - ge) ** 2 / ge))
    return stat, dof, float(stats.chi2.sf(stat, dof))


def binned_density_oracle(net, geom, edges, positions=None):
    """Analytic cell probabilities by direct quadrature of the Born density.

    Returns ``{detector: probs}`` (``{"all": probs}`` in plain mode), each
    array holding the absolute probability of its cells. With stepper
    ``positions`` the density is evaluated at the points and normalized.
    """
    edges = check_bin_edges(edges)
    if net.has_idler:
        dens = {d: (lambda x, d=d: joint_probability_density(net, x, d, geom))
                for d in IDLER_DETECTORS}
    else:
        dens = {ALL: lambda x: signal_only_density(x, geom)}
    out = {}
    for key, f in dens.items():
        if positions is None:
            out[key] = np.array([
                integrate.quad(f, lo, hi, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
                for lo, hi in zip(edges[:-1], edges[1:])
            ])
        else:
            out[key] = np.asarray(f(np.asarray(positions, dtype=float)), dtype=float)
    norm = sum(v.sum() for v in out.values())
    return {k: v / norm for k, v in out.items()}


def stepper_edges(positions, halfwidth):
    """Bin edges holding exactly one stepper position per bin."""
    pos = np.asarray(positions, dtype=float)
    mids = 0.5 * (pos[:-1] + pos[1:])
    return np.concatenate([[-halfwidth], mids, [halfwidth]])


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def write_report(report, path):
    """Serialize a report mapping as indented JSON with a stable key order."""
    text = json.dumps(report, indent=2, allow_nan=False, default=_num) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def read_report(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
