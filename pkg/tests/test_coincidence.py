import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from qeraser.apparatus import IDLER_DETECTORS, DetectorId
from qeraser.coincidence import (
    ALL,
    CoincidenceMatcher,
    JointHistogram,
    accumulate_joint,
    marginal_histogram,
    match_pairs,
    read_histograms_csv,
    write_histograms_csv,
)
from qeraser.events import DetectionRecord, RecordTable, Role, RunConfig, run_experiment
from qeraser.exceptions import BinningError, OrderingError

DELAY = 2.5 / 299_792_458.0
WINDOW = 1e-9


def _tables(t_sig, t_idl, det=1, x=None, idler_ids=None):
    t_sig = np.asarray(t_sig, dtype=float)
    sig = RecordTable(Role.SIGNAL, t_sig, 0, np.zeros(t_sig.size) if x is None else x)
    idl = RecordTable(Role.IDLER, t_idl, det, None, idler_ids)
    return sig, idl


def test_empty_streams():
    pairs, orphans = match_pairs(RecordTable.empty(Role.SIGNAL), RecordTable.empty(Role.IDLER),
                                 DELAY, WINDOW)
    assert len(pairs) == 0
    assert orphans == {Role.SIGNAL: 0, Role.IDLER: 0}


def test_record_lists_accepted():
    s = [DetectionRecord(Role.SIGNAL, DetectorId.D0, 1e-6, x=0.0, truth_pair_id=0)]
    i = [DetectionRecord(Role.IDLER, DetectorId.D1, 1e-6 + DELAY, truth_pair_id=0)]
    pairs, orphans = match_pairs(s, i, DELAY, WINDOW)
    assert len(pairs) == 1
    assert pairs[0].signal == s[0]
    assert pairs[0].idler == i[0]
    assert pairs[0].residual <= WINDOW / 2


def test_unordered_input_rejected():
    sig, idl = _tables([2e-6, 1e-6], [1e-6 + DELAY, 2e-6 + DELAY])
    with pytest.raises(OrderingError):
        match_pairs(sig, idl, DELAY, WINDOW)
    sig, idl = _tables([1e-6, 2e-6], [2e-6 + DELAY, 1e-6 + DELAY])
    with pytest.raises(OrderingError):
        match_pairs(sig, idl, DELAY, WINDOW)


def test_wrong_compensation_matches_nothing():
    # low rate: no accidental idler lands in any shifted window
    s = run_experiment(RunConfig(seed=8, n_pairs=20_000, emission_rate=1e3))
    pairs, orphans = match_pairs(s.signals, s.idlers, DELAY - 5e-9, WINDOW)
    assert len(pairs) == 0
    assert orphans[Role.SIGNAL] == orphans[Role.IDLER] == 20_000


def test_default_run_matches_truth(kim_run):
    pairs = kim_run.pairs
    n = kim_run.config.n_pairs
    truth_s = kim_run.stream.signals.pair_id[pairs.signal_index]
    truth_i = kim_run.stream.idlers.pair_id[pairs.idler_index]
    assert np.sum(truth_s == truth_i) >= 0.999 * n
    assert np.all(pairs.residual <= WINDOW / 2)


def test_matcher_ignores_truth_tags():
    s = run_experiment(RunConfig(seed=3, n_pairs=5000))
    scrambled = RecordTable(Role.IDLER, s.idlers.t, s.idlers.detector, None,
                            np.random.default_rng(0).permutation(len(s.idlers)))
    a, _ = match_pairs(s.signals, s.idlers, DELAY, WINDOW)
    b, _ = match_pairs(s.signals, scrambled, DELAY, WINDOW)
    assert np.array_equal(a.signal_index, b.signal_index)
    assert np.array_equal(a.idler_index, b.idler_index)


gap_lists = st.lists(st.floats(0.0, 30e-9), min_size=1, max_size=40)


@st.composite
def noisy_streams(draw):
    gaps = draw(gap_lists)
    t_sig = np.cumsum(np.array(gaps) + 1e-12)
    jitter = draw(st.lists(st.floats(-1e-9, 1e-9), min_size=len(gaps), max_size=len(gaps)))
    keep = draw(st.lists(st.booleans(), min_size=len(gaps), max_size=len(gaps)))
    extra = draw(st.lists(st.floats(0, t_sig[-1] + 20e-9), max_size=10))
    t_idl = np.concatenate([(t_sig + DELAY + np.array(jitter))[np.array(keep, dtype=bool)],
                            np.array(extra)])
    return t_sig, np.sort(t_idl)


@settings(max_examples=200, deadline=None)
@given(noisy_streams(), st.floats(0.05e-9, 3e-9), st.floats(0.05, 1.0))
def test_window_monotonicity(streams, window, shrink):
    sig, idl = _tables(*streams)
    big, _ = match_pairs(sig, idl, DELAY, window)
    small, _ = match_pairs(sig, idl, DELAY, window * shrink)
    assert len(small) <= len(big)


@settings(max_examples=200, deadline=None)
@given(noisy_streams(), st.floats(0.05e-9, 3e-9))
def test_conservation_and_single_use(streams, window):
    sig, idl = _tables(*streams)
    pairs, orphans = match_pairs(sig, idl, DELAY, window)
    assert len(pairs) + orphans[Role.SIGNAL] == len(sig)
    assert len(pairs) + orphans[Role.IDLER] == len(idl)
    assert len(set(pairs.idler_index.tolist())) == len(pairs)
    assert len(set(pairs.signal_index.tolist())) == len(pairs)
    assert np.all(pairs.residual <= window / 2 * (1 + 1e-9))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1e-6), min_size=1, max_size=50), st.floats(0.1e-9, 2e-9))
def test_well_separated_streams_match_truth(extra_gaps, window):
    # every inter-emission gap exceeds window + delay
    gaps = np.array(extra_gaps) + window + DELAY + 1e-12
    t_sig = np.cumsum(gaps)
    rng = np.random.default_rng(len(extra_gaps))
    t_idl = t_sig + DELAY + rng.uniform(-0.49, 0.49, t_sig.size) * window
    ids = np.arange(t_sig.size)
    sig = RecordTable(Role.SIGNAL, t_sig, 0, np.zeros(t_sig.size), ids)
    idl = RecordTable(Role.IDLER, t_idl, 1, None, ids)
    pairs, orphans = match_pairs(sig, idl, DELAY, window)
    assert np.array_equal(sig.pair_id[pairs.signal_index], idl.pair_id[pairs.idler_index])
    assert len(pairs) == t_sig.size
    assert orphans == {Role.SIGNAL: 0, Role.IDLER: 0}


def test_matcher_estimator_api(kim_run):
    m = CoincidenceMatcher(compensation=DELAY, window=WINDOW)
    assert m.get_params() == {"compensation": DELAY, "window": WINDOW}
    c = clone(m).set_params(window=0.5e-9)
    assert c.window == 0.5e-9
    s = run_experiment(RunConfig(seed=1, n_pairs=1000))
    pairs = m.fit_transform(s)
    assert len(pairs) == 1000
    assert m.orphans_[Role.SIGNAL] == 0
    assert len(m.transform(s)) == 1000


def test_one_pair_histogram():
    sig, idl = _tables([1e-6], [1e-6 + DELAY], det=1, x=np.array([0.0]))
    pairs, _ = match_pairs(sig, idl, DELAY, WINDOW)
    edges = np.linspace(-7e-3, 7e-3, 11)
    joints = accumulate_joint(pairs, edges)
    assert joints[DetectorId.D1].total == 1
    assert all(joints[d].total == 0 for d in IDLER_DETECTORS[1:])


def test_overflow_bucket():
    sig, idl = _tables([1e-6, 2e-6], [1e-6 + DELAY, 2e-6 + DELAY], x=np.array([0.0, 5e-3]))
    pairs, _ = match_pairs(sig, idl, DELAY, WINDOW)
    joints = accumulate_joint(pairs, np.linspace(-1e-3, 1e-3, 5))
    assert joints[DetectorId.D1].overflow == 1
    assert joints[DetectorId.D1].total == 2
    marg = marginal_histogram(sig, np.linspace(-1e-3, 1e-3, 5))
    assert marg.overflow == 1 and marg.counts.sum() == 1


def test_bin_conservation(kim_run):
    # the default run matched perfectly, so the subensembles partition the marginal
    assert kim_run.orphans == {Role.SIGNAL: 0, Role.IDLER: 0}
    total = sum(h.counts for h in kim_run.joints.values())
    assert np.array_equal(total, kim_run.marginal.counts)
    assert sum(h.total for h in kim_run.joints.values()) == len(kim_run.pairs)


def test_anti_fringes_in_counts(kim_run, geom):
    d1 = kim_run.joints[DetectorId.D1].counts.astype(float)
    d2 = kim_run.joints[DetectorId.D2].counts.astype(float)
    x = kim_run.joints[DetectorId.D1].centers
    # maxima of D1 sit where D2 has minima: near phi = pi/2 + 2 pi n
    inner = np.abs(x) < 3.5e-3
    peak = np.argmax(np.where(inner, d1, -1))
    assert d2[peak] < 0.02 * d1[peak]
    phase = np.angle(np.exp(1j * geom.fringe_wavenumber * x[peak]))
    bin_phase = geom.fringe_wavenumber * (x[1] - x[0])
    assert phase == pytest.approx(np.pi / 2, abs=bin_phase)


def test_histogram_validation():
    with pytest.raises(BinningError):
        JointHistogram(ALL, [0.0, 1.0, 0.5], [1, 1])
    with pytest.raises(BinningError):
        JointHistogram(ALL, [0.0, 1.0], [1, 1])


def test_histogram_csv_roundtrip(tmp_path, kim_run):
    path = tmp_path / "h.csv"
    write_histograms_csv(kim_run.histograms(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "detector,bin_center_m,count"
    labels = [line.split(",")[0] for line in lines[1:]]
    assert labels == sorted(labels, key=["D1", "D2", "D3", "D4", "all"].index)
    back = read_histograms_csv(path)
    for h in kim_run.histograms():
        centers, counts, overflow = back[h.label]
        assert np.array_equal(counts, h.counts)
        assert np.array_equal(np.array(centers, dtype=float), h.centers)
        assert overflow == h.overflow
