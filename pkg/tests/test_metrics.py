import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectra.metrics import (
    confidence,
    evaluate,
    format_table,
    reference_metrics,
    relaxed_coverage,
    relaxed_representation,
    sample_coverage,
    sample_representation,
    support,
    volume,
)
from spectra.model import (
    GridSpec,
    InterestingRegionTable,
    MinerConfig,
    OutputAlphabet,
    ReferenceData,
    RegionEntry,
    Specification,
    SpecificationSet,
)
from spectra.synthesis import interesting_table, mine

from conftest import make_obs
from oracles import brute_metrics

UNIT = GridSpec((0.0, 0.0), (1.0, 1.0), 2)


def ref(x, y, name="A"):
    return ReferenceData(name, np.asarray(x, dtype=float), np.asarray(y))


def test_volume_examples():
    s = Specification(((0.0, 0.5), (0.0, 0.5)), {0})
    assert volume([s], UNIT) == 0.25
    assert volume([s, s], UNIT) == 0.5
    assert volume([Specification(UNIT.cell_box((1, 0)), {0})], UNIT) == 0.25
    assert volume([Specification(((0.0, 0.5), None), {0})], UNIT) == 0.5


def _line_table(n, k=3):
    return InterestingRegionTable({(i,): RegionEntry((2,), (frozenset({0}),)) for i in range(n)}, 1, k)


def test_relaxed_examples():
    g = GridSpec((0.0,), (1.0,), 10)
    t = _line_table(10)
    everything = Specification(((0.0, 1.0),), {0})
    assert relaxed_representation(everything, t, g) == 1.0
    assert relaxed_representation(Specification(g.cell_box((4,)), {0}), t, g) == 0.1
    assert relaxed_coverage([], t, g) == 0.0
    half = Specification(g.index_box((0,), (4,)), {0})
    assert relaxed_coverage([half, half], t, g) == 0.5
    a = Specification(g.index_box((0,), (2,)), {0})
    b = Specification(g.index_box((5,), (8,)), {0})
    assert relaxed_coverage([a, b], t, g) == 0.7
    empty = InterestingRegionTable({}, 1, 3)
    assert relaxed_representation(a, empty, g) is None and relaxed_coverage([a], empty, g) is None


def test_relaxed_representation_three_of_250():
    g = GridSpec((0.0,), (1.0,), 250)
    t = _line_table(250)
    spec = Specification(g.index_box((10,), (12,)), {0})
    assert relaxed_representation(spec, t, g) == 0.012


def test_partial_cell_is_not_captured():
    g = GridSpec((0.0,), (1.0,), 10)
    spec = Specification(((0.0, 0.25),), {0})
    assert relaxed_representation(spec, _line_table(10), g) == 0.2


def test_support_confidence_examples():
    x = (np.arange(10) / 10).reshape(-1, 1)
    spec = Specification(((0.0, 0.3),), {0})
    r = ref(x, [0] * 10)
    assert support([spec], r) == pytest.approx(0.4)
    assert confidence([spec], r) == 1.0
    assert support([Specification((None,), {0})], r) == 1.0
    # one point matched by two specs, allowed by only one of them
    two = [Specification(((0.0, 0.5),), {0}), Specification(((0.0, 0.5),), {1})]
    m = reference_metrics(two, ref([[0.2]], [0]))
    assert (m.covered, m.satisfying) == (1, 0)
    assert support([spec], ref(np.zeros((0, 1)), [])) is None
    assert confidence([spec], ref([[0.9]], [0])) is None


def test_closed_interval_boundaries():
    spec = Specification(((0.25, 0.5),), {0})
    assert support([spec], ref([[0.25], [0.5]], [0, 0])) == 1.0


@st.composite
def instances(draw):
    d = draw(st.integers(1, 4))
    n = draw(st.integers(0, 1000))
    k = draw(st.integers(2, 5))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    x = np.round(rng.random((n, d)), 2)
    y = rng.integers(0, k, n)
    specs = []
    for _ in range(draw(st.integers(0, 20))):
        pre = []
        for _ in range(d):
            if rng.random() < 0.2:
                pre.append(None)
            else:
                a, b = sorted(np.round(rng.random(2), 2))
                pre.append((a, b))
        post = set(rng.choice(k, size=rng.integers(1, k), replace=False).tolist())
        specs.append(Specification(tuple(pre), post))
    return specs, x, y


@given(instances())
def test_streaming_matches_double_loop(inst):
    specs, x, y = inst
    m = reference_metrics(specs, ref(x, y))
    assert (m.covered, m.satisfying) == brute_metrics(specs, x, y)


@given(instances(), st.randoms(use_true_random=False))
def test_metrics_permutation_invariant(inst, rnd):
    specs, x, y = inst
    perm = list(range(len(x)))
    rnd.shuffle(perm)
    shuffled = list(specs)
    rnd.shuffle(shuffled)
    a = reference_metrics(specs, ref(x, y))
    b = reference_metrics(shuffled, ref(x[perm], y[perm]))
    assert (a.covered, a.satisfying) == (b.covered, b.satisfying)


@given(instances())
def test_adding_a_spec_is_monotone(inst):
    specs, x, y = inst
    if not specs:
        return
    r = ref(x, y)
    before = reference_metrics(specs[:-1], r)
    after = reference_metrics(specs, r)
    assert after.covered >= before.covered
    # the new spec can only disqualify previously satisfying observations
    assert after.satisfying - before.satisfying <= after.covered - before.covered


@given(instances())
def test_values_in_unit_interval(inst):
    specs, x, y = inst
    m = reference_metrics(specs, ref(x, y))
    for v in (m.support, m.confidence):
        assert v is None or 0.0 <= v <= 1.0


def test_sample_metrics():
    spec = Specification(((0.0, 0.5),), {0})
    sample = np.array([[0.1], [0.6], [0.5], [0.9]])
    assert sample_representation(spec, sample) == 0.5
    assert sample_coverage([spec, Specification(((0.8, 1.0),), {0})], sample) == 0.75
    assert sample_representation(spec, np.zeros((0, 1))) is None


def _mined():
    rng = np.random.default_rng(4)
    x = rng.random((3000, 2))
    low = x[:, 0] < 0.5
    obs = make_obs({"A": (x, np.where(low, 0, rng.integers(0, 4, 3000))), "B": (x, np.where(low, 1, rng.integers(0, 4, 3000)))})
    config = MinerConfig(parts=8, tau_max=2, tau_rep=0.05)
    return obs, config, mine(obs, config)


def test_mined_specs_hold_on_member_cells():
    obs, config, s = _mined()
    assert len(s)
    grid = s.grid
    for spec in s.specs:
        for r in obs.references:
            idx, inside = grid.locate(r.features)
            members = set(spec.members)
            sel = np.array([inside[i] and tuple(idx[i]) in members for i in range(len(r))])
            assert np.isin(r.outputs[sel], list(spec.postcondition)).all()


def test_evaluate_report():
    obs, config, s = _mined()
    grid, table = interesting_table(obs, config)
    rep = evaluate(s, obs, table)
    assert all(m.support > 0 for m in rep.references)
    assert rep.coverage == s.stats.coverage
    assert len(rep.representation) == len(s)
    assert rep.coverage >= max(rep.representation)
    text = format_table([rep, evaluate(s, obs, None, "test")])
    assert "train" in text and "test" in text


def test_evaluate_rejects_mismatched_features():
    obs, config, s = _mined()
    other = make_obs({"A": (np.zeros((1, 2)), [0])}, names=["p", "q"])
    with pytest.raises(ValueError, match="feature mismatch"):
        evaluate(s, other)
    with pytest.raises(ValueError):
        evaluate(s, make_obs({"A": (np.zeros((1, 3)), [0])}))


def test_undefined_metrics_render_as_dash():
    s = SpecificationSet((), MinerConfig(), UNIT, OutputAlphabet(("a", "b")))
    obs = make_obs({"A": (np.zeros((0, 2)), [])}, labels=("a", "b"))
    text = format_table([evaluate(s, obs)])
    assert "—" in text
