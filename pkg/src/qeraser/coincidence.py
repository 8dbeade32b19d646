"""Delay-compensated coincidence matching and position histograms."""

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .apparatus import IDLER_DETECTORS, SPEED_OF_LIGHT, DetectorId
from .events import DetectionRecord, RecordTable, Role
from .exceptions import BinningError, DomainError
from .validation import check_bin_edges, check_positive, check_time_ordered

__all__ = [
    "ALL",
    "CoincidencePair",
    "PairTable",
    "JointHistogram",
    "match_pairs",
    "CoincidenceMatcher",
    "accumulate_joint",
    "marginal_histogram",
    "write_histograms_csv",
    "read_histograms_csv",
]

ALL = "all"


@dataclass(frozen=True)
class CoincidencePair:
    signal: DetectionRecord
    idler: DetectionRecord
    residual: float


class PairTable:
    """Matched pairs stored as index arrays into the two input tables."""

    def __init__(self, signals, idlers, signal_index, idler_index, compensation):
        self.signals = signals
        self.idlers = idlers
        self.signal_index = np.asarray(signal_index, dtype=np.int64)
        self.idler_index = np.asarray(idler_index, dtype=np.int64)
        self.compensation = float(compensation)

    def __len__(self):
        return self.signal_index.size

    @property
    def x(self):
        return self.signals.x[self.signal_index]

    @property
    def detector(self):
        return self.idlers.detector[self.idler_index]

    @property
    def delay(self):
        """Raw ``t_idler - t_signal`` per pair."""
        return self.idlers.t[self.idler_index] - self.signals.t[self.signal_index]

    @property
    def residual(self):
        return np.abs(self.delay - self.compensation)

    def __getitem__(self, k):
        k = range(len(self))[k]
        return CoincidencePair(
            self.signals[int(self.signal_index[k])],
            self.idlers[int(self.idler_index[k])],
            float(self.residual[k]),
        )

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def subset(self, mask):
        return PairTable(
            self.signals, self.idlers, self.signal_index[mask], self.idler_index[mask],
            self.compensation,
        )


def _as_table(records, role):
    if isinstance(records, RecordTable):
        if records.role is not role:
            raise DomainError(f"expected {role.value} records, got {records.role.value}")
        return records
    return RecordTable.from_records(records, role)


def match_pairs(signals, idlers, compensation, window):
    """Greedy earliest-first coincidence sweep.

    Each signal takes the earliest still-unmatched idler whose timestamp
    lies within ``window / 2`` of ``t_signal + compensation``. Only
    timestamps are read; truth tags are never consulted.

    Returns ``(pairs, orphans)`` where ``orphans`` maps each role to the
    number of its records left unmatched.
    """
    signals = _as_table(signals, Role.SIGNAL)
    idlers = _as_table(idlers, Role.IDLER)
    half = 0.5 * check_positive(window, "window")
    compensation = float(compensation)
    check_time_ordered(signals.t, "signal stream")
    check_time_ordered(idlers.t, "idler stream")

    ts = signals.t.tolist()
    ti = idlers.t.tolist()
    n_i = len(ti)
    s_idx, i_idx = [], []
    j = 0
    for k, t in enumerate(ts):
        target = t + compensation
        lo = target - half
        # idlers below lo can never match this or any later signal
        while j < n_i and ti[j] < lo:
            j += 1
        if j < n_i and ti[j] <= target + half:
            s_idx.append(k)
            i_idx.append(j)
            j += 1
    pairs = PairTable(signals, idlers, s_idx, i_idx, compensation)
    orphans = {Role.SIGNAL: len(ts) - len(s_idx), Role.IDLER: n_i - len(i_idx)}
    return pairs, orphans


class CoincidenceMatcher(BaseEstimator, TransformerMixin):
    """Estimator wrapper around :func:`match_pairs`.

    Parameters
    ----------
    compensation : float
        Expected idler delay in seconds.
    window : float, default=1e-9
        Full width of the coincidence window in seconds.

    Attributes
    ----------
    pairs_ : PairTable
    orphans_ : dict
    """

    def __init__(self, compensation=2.5 / SPEED_OF_LIGHT, window=1e-9):
        self.compensation = compensation
        self.window = window

    def fit(self, stream, y=None):
        self.pairs_, self.orphans_ = match_pairs(
            stream.signals, stream.idlers, self.compensation, self.window
        )
        return self

    def transform(self, stream):
        check_is_fitted(self, "pairs_")
        pairs, _ = match_pairs(stream.signals, stream.idlers, self.compensation, self.window)
        return pairs

    def fit_transform(self, stream, y=None):
        return self.fit(stream).pairs_


@dataclass(frozen=True, eq=False)
class JointHistogram:
    """Counts of signal position, for one idler detector or for ``all``.

    ``overflow`` counts positions outside the outer edges.
    """

    detector: object
    bin_edges: np.ndarray
    counts: np.ndarray
    overflow: int = 0

    def __post_init__(self):
        edges = check_bin_edges(self.bin_edges)
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (edges.size - 1,):
            raise BinningError("need exactly one count per bin")
        if np.any(counts < 0) or self.overflow < 0:
            raise DomainError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "overflow", int(self.overflow))

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def total(self):
        return int(self.counts.sum()) + self.overflow

    @property
    def label(self):
        return ALL if self.detector == ALL else DetectorId.parse(self.detector).name


def _histogram(x, edges, detector):
    edges = check_bin_edges(edges)
    x = np.asarray(x, dtype=float)
    inside = (x >= edges[0]) & (x <= edges[-1])
    counts, _ = np.histogram(x[inside], bins=edges)
    return JointHistogram(detector, edges, counts, int(x.size - inside.sum()))


def accumulate_joint(pairs, bin_edges):
    """Histogram matched signal positions separately for each idler detector."""
    if isinstance(pairs, PairTable):
        x, det = pairs.x, pairs.detector
    else:
        pairs = list(pairs)
        x = np.array([p.signal.x for p in pairs], dtype=float)
        det = np.array([p.idler.detector.value for p in pairs], dtype=np.int8)
    return {d: _histogram(x[det == d.value], bin_edges, d) for d in IDLER_DETECTORS}


def marginal_histogram(signals, bin_edges):
    """Histogram of every signal position, ignoring the idlers."""
    signals = _as_table(signals, Role.SIGNAL)
    return _histogram(signals.x, bin_edges, ALL)


_HIST_HEADER = ["detector", "bin_center_m", "count"]


def write_histograms_csv(histograms, path):
    """One row per bin, detectors in D1..D4 then ``all`` order.

    A trailing ``overflow`` row per detector keeps the totals exact.
    """
    order = {d.name: i for i, d in enumerate(IDLER_DETECTORS)}
    hists = sorted(histograms, key=lambda h: order.get(h.label, len(order)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(_HIST_HEADER)
        for h in hists:
            for c, n in zip(h.centers, h.counts):
                out.writerow([h.label, format(float(c), ".17g"), int(n)])
            out.writerow([h.label, "overflow", h.overflow])


def read_histograms_csv(path):
    """Return ``{label: (centers, counts, overflow)}`` from a histogram file.

    Centers are kept as the exact strings written, for bit-exact comparison.
    """
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _HIST_HEADER:
            raise BinningError(f"unexpected histogram header {header!r}")
        for row in reader:
            if len(row) != 3:
                raise BinningError(f"malformed histogram row {row!r}")
            label, center, count = row
            entry = rows.setdefault(label, {"centers": [], "counts": [], "overflow": 0})
            if center == "overflow":
                entry["overflow"] = int(count)
            else:
                entry["centers"].append(center)
                entry["counts"].append(int(count))
    return {
        k: (v["centers"], np.array(v["counts"], dtype=np.int64), v["overflow"])
        for k, v in rows.items()
    }
