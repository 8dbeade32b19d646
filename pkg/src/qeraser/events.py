"""Seeded Monte Carlo generation of timestamped detection records.

Pairs are emitted by a Poisson source. For every pair the signal position is
drawn from the binned marginal by inverse CDF, the idler detector from its
conditional distribution given that bin, and the position is then jittered
uniformly inside the bin. Generation runs over fixed-size chunks, each with
its own child seed, so the output does not depend on how many worker
threads process the chunks.
"""

import csv
import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .apparatus import (
    IDLER_DETECTORS,
    SPEED_OF_LIGHT,
    ApparatusMode,
    DetectorId,
    build_apparatus,
    idler_path_delay,
    joint_bin_probabilities,
    joint_probability_density,
    signal_only_density,
)
from .exceptions import DomainError, ResourceError
from .optics import SlitGeometry, SlitLabel
from .validation import check_positive, check_time_ordered

__all__ = [
    "Role",
    "DetectionRecord",
    "RecordTable",
    "EventStream",
    "RunConfig",
    "JointSampler",
    "sample_pair",
    "run_experiment",
    "write_events_csv",
    "read_events_csv",
    "worker_threads",
]

CHUNK_SIZE = 1 << 16
MIN_EMISSION_GAP = 1e-12  # s; keeps timestamps strictly increasing
_BYTES_PER_PAIR = 160
_NO_SLIT = -1


class Role(enum.Enum):
    SIGNAL = "signal"
    IDLER = "idler"


@dataclass(frozen=True)
class DetectionRecord:
    """One photon detection.

    ``truth_pair_id`` and ``truth_slit`` are ground truth for tests. The
    slit tag is drawn from the per-path Born weights ``|psi_s t_s|^2`` of
    the pair's outcome, so it is exact wherever only one path contributes.
    """

    role: Role
    detector: DetectorId
    timestamp: float
    x: float | None = None
    truth_pair_id: int = -1
    truth_slit: SlitLabel | None = None

    def __post_init__(self):
        if self.role is Role.SIGNAL:
            if self.detector is not DetectorId.D0 or self.x is None:
                raise DomainError("signal records come from D0 and carry x")
        else:
            if self.detector is DetectorId.D0 or self.x is not None:
                raise DomainError("idler records come from D1-D4 and carry no x")


class RecordTable:
    """Columnar, time-ordered sequence of records of a single role.

    Iterating or indexing yields :class:`DetectionRecord` objects; the
    simulator itself works on the numpy columns.
    """

    __slots__ = ("role", "t", "detector", "x", "pair_id", "slit")

    def __init__(self, role, t, detector, x=None, pair_id=None, slit=None):
        self.role = Role(role)
        self.t = np.asarray(t, dtype=float)
        n = self.t.size
        self.detector = np.broadcast_to(np.asarray(detector, dtype=np.int8), (n,)).copy()
        if x is None:
            x = np.full(n, np.nan)
        self.x = np.asarray(x, dtype=float)
        self.pair_id = (
            np.arange(n, dtype=np.int64) if pair_id is None else np.asarray(pair_id, dtype=np.int64)
        )
        self.slit = (
            np.full(n, _NO_SLIT, dtype=np.int8) if slit is None else np.asarray(slit, dtype=np.int8)
        )
        if not (self.x.size == self.pair_id.size == self.slit.size == n):
            raise DomainError("record columns differ in length")

    @classmethod
    def empty(cls, role):
        return cls(role, np.empty(0), np.empty(0, dtype=np.int8))

    @classmethod
    def from_records(cls, records, role=None):
        records = list(records)
        if role is None:
            if not records:
                raise DomainError("cannot infer the role of an empty record list")
            role = records[0].role
        role = Role(role)
        if any(r.role is not role for r in records):
            raise DomainError(f"mixed roles in a {role.value} table")
        return cls(
            role,
            [r.timestamp for r in records],
            [r.detector.value for r in records],
            [np.nan if r.x is None else r.x for r in records],
            [r.truth_pair_id for r in records],
            [_NO_SLIT if r.truth_slit is None else _slit_code(r.truth_slit) for r in records],
        )

    def __len__(self):
        return self.t.size

    def __getitem__(self, i):
        i = range(len(self))[i]
        slit = int(self.slit[i])
        return DetectionRecord(
            role=self.role,
            detector=DetectorId(int(self.detector[i])),
            timestamp=float(self.t[i]),
            x=float(self.x[i]) if self.role is Role.SIGNAL else None,
            truth_pair_id=int(self.pair_id[i]),
            truth_slit=None if slit == _NO_SLIT else SLIT_CODES[slit],
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __repr__(self):
        return f"RecordTable(role={self.role.value}, n={len(self)})"

    def equals(self, other):
        return (
            self.role is other.role
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.detector, other.detector)
            and np.array_equal(self.x, other.x, equal_nan=True)
            and np.array_equal(self.pair_id, other.pair_id)
            and np.array_equal(self.slit, other.slit)
        )


SLIT_CODES = (SlitLabel.A, SlitLabel.B)


def _slit_code(slit):
    return SLIT_CODES.index(SlitLabel(slit))


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a simulated run.

    ``scan_positions`` switches D0 from continuous scanning to a stepper
    grid: positions are then restricted to the listed values.
    """

    seed: int = 0
    n_pairs: int = 1_000_000
    emission_rate: float = 1e5
    geometry: SlitGeometry = field(default_factory=SlitGeometry)
    mode: ApparatusMode = ApparatusMode.KIM
    extra_path: float = 2.5
    scan_positions: tuple | None = None
    sampling_bins: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "mode", ApparatusMode(self.mode))
        seed = int(self.seed)
        if not 0 <= seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "seed", seed)
        if int(self.n_pairs) < 1:
            raise DomainError(f"n_pairs must be >= 1, got {self.n_pairs!r}")
        object.__setattr__(self, "n_pairs", int(self.n_pairs))
        check_positive(self.emission_rate, "emission_rate")
        check_positive(self.extra_path, "extra_path", strict=False)
        if int(self.sampling_bins) < 1:
            raise DomainError("sampling_bins must be >= 1")
        if self.scan_positions is not None:
            positions = tuple(float(p) for p in self.scan_positions)
            if not positions:
                raise DomainError("stepper scan needs at least one position")
            if any(abs(p) > self.geometry.scan_halfwidth for p in positions):
                raise DomainError("scan position outside the scan range")
            if any(b <= a for a, b in zip(positions, positions[1:])):
                raise DomainError("scan positions must be strictly increasing")
            object.__setattr__(self, "scan_positions", positions)

    def network(self):
        return build_apparatus(self.geometry, self.mode, self.extra_path)


@dataclass(frozen=True, eq=False)
class EventStream:
    signals: RecordTable
    idlers: RecordTable
    config: RunConfig | None = None

    def equals(self, other):
        return self.signals.equals(other.signals) and self.idlers.equals(other.idlers)


class JointSampler:
    """Precomputed inverse-CDF tables for one network and scan.

    Parameters
    ----------
    net : OpticalNetwork
    geom : SlitGeometry
    bins : int
        Number of equal-width sampling cells across the scan (continuous
        scan only).
    positions : sequence of float, optional
        Stepper grid. Cells collapse to points and no jitter is applied.
    """

    def __init__(self, net, geom, bins=1024, positions=None):
        self.net = net
        self.geom = geom
        w = geom.scan_halfwidth
        if positions is None:
            edges = np.linspace(-w, w, int(bins) + 1)
            self.lo, self.hi = edges[:-1], edges[1:]
            cell_det = joint_bin_probabilities(net, edges, geom)
        else:
            pos = np.asarray(positions, dtype=float)
            self.lo = self.hi = pos
            if net.has_idler:
                cell_det = np.array(
                    [joint_probability_density(net, pos, d, geom) for d in IDLER_DETECTORS]
                ).reshape(len(IDLER_DETECTORS), pos.size)
            else:
                cell_det = np.atleast_1d(signal_only_density(pos, geom))[None, :]
            cell_det = cell_det / cell_det.sum()
        self.cell_det = cell_det  # (n_det, n_cells)
        cell = cell_det.sum(axis=0)
        self.cell_cdf = _cdf(cell)
        if net.has_idler:
            with np.errstate(invalid="ignore", divide="ignore"):
                cond = cell_det / cell[None, :]
            cond = np.nan_to_num(cond)
            self.det_cdf = np.cumsum(cond, axis=0).T  # (n_cells, n_det)
            self.det_cdf[:, -1] = 1.0
            m = net.transfer_matrix()
            wa, wb = np.abs(m[0]) ** 2, np.abs(m[1]) ** 2
            with np.errstate(invalid="ignore", divide="ignore"):
                self.p_slit_a = np.nan_to_num(wa / (wa + wb))
            self.delays = np.array([idler_path_delay(net, d) for d in IDLER_DETECTORS])
        else:
            self.det_cdf = None

    def draw(self, u_cell, u_det, u_jit, u_slit):
        """Map uniform variates to (x, detector code, slit code) arrays."""
        cell = np.searchsorted(self.cell_cdf, u_cell, side="right")
        cell = np.minimum(cell, self.cell_cdf.size - 1)
        x = self.lo[cell] + u_jit * (self.hi[cell] - self.lo[cell])
        if self.det_cdf is None:
            return x, None, None
        rows = self.det_cdf[cell]
        det_idx = np.minimum((rows <= u_det[:, None]).sum(axis=1), rows.shape[1] - 1)
        slit = np.where(u_slit < self.p_slit_a[det_idx], 0, 1).astype(np.int8)
        return x, (det_idx + 1).astype(np.int8), slit


def _cdf(p):
    c = np.cumsum(p)
    c /= c[-1]
    c[-1] = 1.0
    return c


def sample_pair(rng, net, geom, emit_time, sampler=None):
    """Draw one entangled pair emitted at ``emit_time``.

    Returns ``(signal, idler)``; ``idler`` is ``None`` in plain mode.
    """
    if sampler is None:
        sampler = JointSampler(net, geom)
    u = rng.random(4)
    x, det, slit = sampler.draw(u[0:1], u[1:2], u[2:3], u[3:4])
    t_signal = float(emit_time) + net.signal_path / SPEED_OF_LIGHT
    signal = DetectionRecord(
        Role.SIGNAL, DetectorId.D0, t_signal, x=float(x[0]),
        truth_slit=None if det is None else SLIT_CODES[int(slit[0])],
    )
    if det is None:
        return signal, None
    idler = DetectionRecord(
        Role.IDLER,
        DetectorId(int(det[0])),
        t_signal + float(sampler.delays[det[0] - 1]),
        truth_slit=signal.truth_slit,
    )
    return signal, idler


def worker_threads():
    """Worker count from ``QERASER_THREADS`` (0 or unset means all cores)."""
    raw = os.environ.get("QERASER_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"QERASER_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise DomainError("QERASER_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _check_memory(n_pairs):
    need = n_pairs * _BYTES_PER_PAIR
    try:
        avail = os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return
    if need > avail:
        raise ResourceError(
            f"{n_pairs} pairs need about {need / 2**30:.1f} GiB, "
            f"only {avail / 2**30:.1f} GiB available"
        )


def _stream(seed, index, quantity):
    # one child stream per (chunk, quantity): a chunk's draws do not depend on its length
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index, quantity))))


def _chunk(seed, index, size, rate, sampler):
    gaps = np.maximum(_stream(seed, index, 0).exponential(1.0 / rate, size), MIN_EMISSION_GAP)
    u = [_stream(seed, index, q).random(size) for q in (1, 2, 3, 4)]
    return (gaps,) + sampler.draw(*u)


def run_experiment(config, threads=None, sampler=None):
    """Simulate ``config.n_pairs`` pairs and return both detection streams."""
    _check_memory(config.n_pairs)
    geom = config.geometry
    net = sampler.net if sampler is not None else config.network()
    if sampler is None:
        sampler = JointSampler(net, geom, config.sampling_bins, config.scan_positions)
    threads = worker_threads() if threads is None else max(1, int(threads))

    n = config.n_pairs
    starts = range(0, n, CHUNK_SIZE)
    jobs = [(config.seed, i, min(CHUNK_SIZE, n - s), config.emission_rate, sampler)
            for i, s in enumerate(starts)]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: _chunk(*job), jobs))
    else:
        parts = [_chunk(*job) for job in jobs]

    gaps = np.concatenate([p[0] for p in parts])
    x = np.concatenate([p[1] for p in parts])
    t_signal = np.cumsum(gaps) + net.signal_path / SPEED_OF_LIGHT
    check_time_ordered(t_signal, "signal stream", strict=True)
    pair_id = np.arange(n, dtype=np.int64)

    if not net.has_idler:
        signals = RecordTable(Role.SIGNAL, t_signal, DetectorId.D0.value, x, pair_id)
        return EventStream(signals, RecordTable.empty(Role.IDLER), config)

    det = np.concatenate([p[2] for p in parts])
    slit = np.concatenate([p[3] for p in parts])
    signals = RecordTable(Role.SIGNAL, t_signal, DetectorId.D0.value, x, pair_id, slit)
    t_idler = t_signal + sampler.delays[det - 1]
    order = np.argsort(t_idler, kind="stable")
    if np.all(order == pair_id):
        order = slice(None)
    idlers = RecordTable(
        Role.IDLER, t_idler[order], det[order], None, pair_id[order], slit[order]
    )
    check_time_ordered(idlers.t, "idler stream", strict=True)
    return EventStream(signals, idlers, config)


_CSV_HEADER = ["pair_id", "role", "detector", "x_m", "t_s"]


def _fmt(v):
    return format(float(v), ".17g")


def write_events_csv(stream, path):
    """Write both streams merged in time order (signal first on ties)."""
    s, i = stream.signals, stream.idlers
    t = np.concatenate([s.t, i.t])
    role = np.concatenate([np.zeros(len(s), np.int8), np.ones(len(i), np.int8)])
    order = np.lexsort((role, t))
    det = np.concatenate([s.detector, i.detector])
    pid = np.concatenate([s.pair_id, i.pair_id])
    x = np.concatenate([s.x, i.x])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(_CSV_HEADER)
        for k in order:
            if role[k] == 0:
                out.writerow([pid[k], "signal", "D0", _fmt(x[k]), _fmt(t[k])])
            else:
                out.writerow([pid[k], "idler", f"D{det[k]}", "", _fmt(t[k])])


def read_events_csv(path):
    """Inverse of :func:`write_events_csv` (truth slit tags are not stored)."""
    cols = {Role.SIGNAL: ([], [], [], []), Role.IDLER: ([], [], [], [])}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise DomainError(f"unexpected events header {header!r}")
        for row in reader:
            role = Role(row[1])
            t, d, x, p = cols[role]
            p.append(int(row[0]))
            d.append(DetectorId.parse(row[2]).value)
            x.append(float(row[3]) if row[3] else np.nan)
            t.append(float(row[4]))
    tables = [RecordTable(role, t, np.array(d, dtype=np.int8), x, p)
              for role, (t, d, x, p) in cols.items()]
    return EventStream(*tables)
