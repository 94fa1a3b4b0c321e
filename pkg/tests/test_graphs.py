"""Power-counting and pair-kernel quadrature tests.

Closed-form oracles: for a two-state chain every centered observable decays
with the single rate lam, so the pair integral over [0,L]^2 reduces to
incomplete-gamma moments of u^{2H-2} e^{-lam u}; a one-state chain isolates
the bare kernel, integrable in closed form.
"""
import math

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc

from fracavg.chain import (
    ChainModel,
    chain_model,
    joint_cumulant,
    joint_moment,
    two_state_chain,
)
from fracavg.graphs import (
    bound_exponent,
    build_cumulant_graph,
    component_labels,
    enumerate_pairings_partitions,
    i2p_partition_sum,
    i2p_quadrature,
    is_integrable,
    is_regular,
    iter_pairings,
    iter_singleton_free_partitions,
    joint_cumulant_batch,
    joint_moment_batch,
    labelled_graph,
    main_term_check,
    parse_graph_text,
    spanning_forest_beta,
    tight_partitions,
)

# five-pair worked example: pairing of 0..9 and a four-block partition whose
# quotient splits into two components
PAIRING_5 = ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))
PARTITION_5 = ((0, 2), (1, 3, 4), (5, 6, 7), (8, 9))


def kernel_moment(power: float, rate: float, lo: float, hi: float) -> float:
    # int_lo^hi u^(power-1) e^(-rate u) du
    return float(
        rate**-power * gamma_fn(power) * (gammainc(power, rate * hi) - gammainc(power, rate * lo))
    )


def three_state_model() -> ChainModel:
    return chain_model([[-2.0, 1.5, 0.5], [1.0, -1.5, 0.5], [0.4, 0.6, -1.0]])


def one_state_model() -> ChainModel:
    return ChainModel(generator=np.zeros((1, 1)), mu=np.ones(1), gap=math.inf)


# ---------------------------------------------------------------------------
# short-distance counting


def test_single_long_memory_edge_regular_iff_memory_is_mild():
    for hurst, expect in ((0.75, True), (0.4, False)):
        g = labelled_graph(2, [(0, 1)], [2.0 * hurst - 2.0], [0.0])
        ok, witness = is_regular(g)
        assert ok is expect
        if not ok:
            assert witness == (0, 1)


def test_edgeless_graph_is_regular():
    g = labelled_graph(3, [], [], [])
    ok, witness = is_regular(g)
    assert ok and witness is None


def test_regularity_boundary_counts_as_violation():
    g = labelled_graph(2, [(0, 1)], [-1.0], [0.0])
    ok, witness = is_regular(g)
    assert not ok and witness == (0, 1)


def test_regularity_witness_is_the_worst_subset():
    # the (0,1) pair is the only failing subset: adding vertex 2 gains +1
    g = labelled_graph(3, [(0, 1), (1, 2)], [-1.5, -0.2], [0.0, 0.0])
    ok, witness = is_regular(g)
    assert not ok and witness == (0, 1)


# ---------------------------------------------------------------------------
# tight partitions and large-scale counting


def test_tight_partitions_connected_pair():
    g = labelled_graph(2, [(0, 1)], [0.0], [-2.0])
    assert list(tight_partitions(g)) == [((0,), (1,))]


def test_tight_partitions_need_a_bridging_block():
    g = labelled_graph(2, [], [], [])
    assert list(tight_partitions(g)) == []


def test_integrable_single_edge():
    ok, witness = is_integrable(labelled_graph(2, [(0, 1)], [0.0], [-1.5]))
    assert ok and witness is None
    ok, witness = is_integrable(labelled_graph(2, [(0, 1)], [0.0], [-0.5]))
    assert not ok and witness == ((0,), (1,))


def test_integrability_boundary_counts_as_violation():
    ok, witness = is_integrable(labelled_graph(2, [(0, 1)], [0.0], [-1.0]))
    assert not ok and witness == ((0,), (1,))


def _random_graph(rng, strong_decay: bool):
    n = int(rng.integers(2, 7))
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < 0.45:
                edges.append((u, v))
    if strong_decay:
        ap = [-1.0 - float(rng.uniform(0.05, 1.5)) for _ in edges]
    else:
        ap = [-float(rng.uniform(0.0, 2.5)) for _ in edges]
    am = [-float(rng.uniform(0.0, 1.0)) for _ in edges]
    return labelled_graph(n, edges, am, ap)


def test_strong_decay_implies_integrable():
    rng = np.random.default_rng(41)
    for _ in range(60):
        g = _random_graph(rng, strong_decay=True)
        ok, witness = is_integrable(g)
        assert ok, (g, witness)


def test_edge_deletion_monotonicity():
    # dropping edges without changing connectivity can only spoil
    # integrability, never create it
    rng = np.random.default_rng(42)
    checked = 0
    while checked < 60:
        g = _random_graph(rng, strong_decay=False)
        if not g.edges:
            continue
        keep = rng.random(len(g.edges)) < 0.6
        sub = labelled_graph(
            g.n_vertices,
            [e for e, k in zip(g.edges, keep) if k],
            [a for a, k in zip(g.alpha_minus, keep) if k],
            [a for a, k in zip(g.alpha_plus, keep) if k],
        )
        if not np.array_equal(component_labels(sub), component_labels(g)):
            continue
        checked += 1
        if is_integrable(sub)[0]:
            assert is_integrable(g)[0]


def test_bound_exponent_reports_decay_budget():
    g = labelled_graph(2, [(0, 1)], [0.0], [-0.5])
    report = bound_exponent(g, [0.75])
    assert report.feasible and report.witness is None
    assert report.exponent == pytest.approx(1.75)
    report = bound_exponent(g, [0.25])
    assert not report.feasible and report.witness == ((0,), (1,))
    with pytest.raises(ValueError):
        bound_exponent(g, [0.1, 0.2])
    with pytest.raises(ValueError):
        bound_exponent(g, [-0.1])


# ---------------------------------------------------------------------------
# cumulant graphs


def test_cumulant_graph_smallest_case():
    cg = build_cumulant_graph(((0, 1),), ((0, 1),), hurst=0.75)
    assert cg.graph.n_vertices == 2
    assert cg.graph.edges == ((0, 1), (0, 1))
    assert cg.graph.alpha_minus == (-0.5, 0.0)
    assert cg.graph.alpha_plus == (-0.5, -2.0)
    assert is_regular(cg.graph)[0]


def test_cumulant_graph_validation():
    with pytest.raises(ValueError, match="H > 1/2"):
        build_cumulant_graph(((0, 1),), ((0, 1),), hurst=0.4)
    with pytest.raises(ValueError, match="disjoint pairs"):
        build_cumulant_graph(((0, 1),), ((0, 0),), hurst=0.75)
    with pytest.raises(ValueError, match="singleton block"):
        build_cumulant_graph(((0,), (1, 2, 3)), ((0, 1), (2, 3)), hurst=0.75)


def test_five_pair_example_splits_into_two_components():
    cg = build_cumulant_graph(PARTITION_5, PAIRING_5, hurst=0.75)
    labels = component_labels(cg.graph)
    assert len(set(labels.tolist())) == 2
    assert set(np.flatnonzero(labels == labels[8]).tolist()) == {8, 9}
    assert is_regular(cg.graph)[0]


def test_five_pair_example_forest_and_exponents():
    cg = build_cumulant_graph(PARTITION_5, PAIRING_5, hurst=0.75)
    kappa = 0.3
    fb = spanning_forest_beta(cg, kappa)
    assert fb.forest == ((0, 1), (4, 5))
    assert fb.n_components == 2
    assert fb.exponent == pytest.approx(4.0 - 2.0 * kappa)
    assert fb.worst_case == pytest.approx(5.0 - 3.0 * kappa)
    assert fb.exponent <= fb.worst_case
    assert fb.certificate.feasible, fb.certificate.witness
    assert fb.certificate.exponent == pytest.approx(2.0 + 2.0 * (1.0 - kappa))


def test_forest_size_invariant_over_all_two_pair_terms():
    for part, pairing in enumerate_pairings_partitions(2):
        cg = build_cumulant_graph(part, pairing, hurst=0.8)
        fb = spanning_forest_beta(cg, kappa=0.2)
        m = fb.n_components
        assert len(fb.forest) == len(part) - m
        assert len(fb.forest) <= cg.n_pairs - m
        assert fb.certificate.feasible, (part, pairing, fb.certificate.witness)
        assert fb.exponent <= fb.worst_case + 1e-12


def test_forest_empty_when_partition_equals_pairing():
    cg = build_cumulant_graph(((0, 1), (2, 3)), ((0, 1), (2, 3)), hurst=0.75)
    fb = spanning_forest_beta(cg, kappa=0.3)
    assert fb.forest == ()
    assert fb.n_components == 2
    assert fb.exponent == pytest.approx(2.0)


def test_spanning_forest_rejects_bad_kappa():
    cg = build_cumulant_graph(((0, 1),), ((0, 1),), hurst=0.75)
    for kappa in (0.0, 0.5, 0.7):
        with pytest.raises(ValueError, match="kappa"):
            spanning_forest_beta(cg, kappa)


# ---------------------------------------------------------------------------
# enumeration


def test_enumeration_counts():
    assert list(iter_pairings(2)) == [((0, 1),)]
    assert len(list(iter_pairings(4))) == 3
    assert len(list(iter_pairings(6))) == 15
    parts4 = list(iter_singleton_free_partitions(4))
    assert len(parts4) == 4
    assert (((0, 1, 2, 3),)) in parts4
    assert len(list(enumerate_pairings_partitions(2))) == 12
    with pytest.raises(ValueError):
        list(iter_pairings(3))
    with pytest.raises(ValueError):
        list(enumerate_pairings_partitions(5))


# ---------------------------------------------------------------------------
# batched moments and cumulants


def test_joint_moment_batch_matches_scalar_route():
    model = three_state_model()
    rng = np.random.default_rng(7)
    fs = rng.normal(size=(3, 3))
    times = rng.uniform(0.0, 4.0, size=(25, 3))
    batch = joint_moment_batch(model, fs, times)
    for row, value in zip(times, batch):
        order = np.argsort(row)
        direct = joint_moment(model, [fs[i] for i in order], [row[i] for i in order])
        assert value == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_joint_cumulant_batch_matches_scalar_route():
    model = three_state_model()
    rng = np.random.default_rng(8)
    fs = rng.normal(size=(3, 3))
    times = rng.uniform(0.0, 3.0, size=(10, 3))
    batch = joint_cumulant_batch(model, fs, times)
    for row, value in zip(times, batch):
        order = np.argsort(row)
        direct = joint_cumulant(model, [fs[i] for i in order], [row[i] for i in order])
        assert value == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_joint_moment_batch_validates_shapes():
    model = three_state_model()
    with pytest.raises(ValueError):
        joint_moment_batch(model, np.ones((2, 3)), np.ones((4, 3)))


# ---------------------------------------------------------------------------
# pair-kernel quadrature


def test_bare_kernel_integral_one_state():
    # no chain dynamics: the integral of |t-s|^{2H-2} over [0,L]^2 is
    # L^{2H} / (H (2H-1)) times the product of the constant observables
    model = one_state_model()
    for hurst in (0.6, 0.75, 0.9):
        span = 3.0
        got = i2p_quadrature(model, [[2.0], [3.0]], [(0.0, span), (0.0, span)], hurst)
        want = 6.0 * span ** (2.0 * hurst) / (hurst * (2.0 * hurst - 1.0))
        assert got == pytest.approx(want, rel=1e-9)


def test_pair_integral_matches_incomplete_gamma_oracle():
    model = two_state_chain(1.0, 3.0)
    lam = model.gap
    f = model.center([1.0, 0.0])
    g = model.center([0.0, 2.0])
    c = model.inner(f, g)
    span = 4.0
    for hurst in (0.6, 0.75, 0.9):
        got = i2p_quadrature(model, [f, g], [(0.0, span), (0.0, span)], hurst)
        want = 2.0 * c * (
            span * kernel_moment(2.0 * hurst - 1.0, lam, 0.0, span)
            - kernel_moment(2.0 * hurst, lam, 0.0, span)
        )
        assert got == pytest.approx(want, rel=1e-7)


def test_pair_integral_shifted_intervals_oracle():
    # overlap profile of [0,2] x [1,3] in the lag variable: 2 * 1_{[0,1]}
    # from the symmetric part plus the (3-u) ramp on [1,3]
    model = two_state_chain(1.0, 3.0)
    lam = model.gap
    f = model.center([1.0, 0.0])
    c = model.inner(f, f)
    hurst = 0.7
    got = i2p_quadrature(model, [f, f], [(0.0, 2.0), (1.0, 3.0)], hurst)
    want = c * (
        2.0 * kernel_moment(2.0 * hurst - 1.0, lam, 0.0, 1.0)
        + 3.0 * kernel_moment(2.0 * hurst - 1.0, lam, 1.0, 3.0)
          - kernel_moment(2.0 * hurst, lam, 1.0, 3.0)
    )
    assert got == pytest.approx(want, rel=1e-7)


def test_quadrature_rejects_short_memory():
    model = two_state_chain(1.0, 3.0)
    f = model.center([1.0, 0.0])
    with pytest.raises(ValueError, match="1/2"):
        i2p_quadrature(model, [f, f], [(0.0, 1.0), (0.0, 1.0)], hurst=0.4)


def test_partition_sum_matches_quadrature_one_pair():
    model = two_state_chain(1.0, 3.0)
    f = model.center([1.0, 0.0])
    g = model.center([0.0, 2.0])
    args = (model, [f, g], [(0.0, 2.0), (0.5, 2.5)], 0.75)
    assert i2p_partition_sum(*args) == pytest.approx(i2p_quadrature(*args), rel=1e-10)


def test_partition_sum_matches_quadrature_two_pairs():
    model = two_state_chain(1.0, 3.0)
    f = model.center([1.0, 0.0])
    g = model.center([0.0, 2.0])
    fs = [f, g, g, f]
    intervals = [(0.0, 1.5), (0.5, 2.0), (0.0, 1.0), (0.2, 1.7)]
    kwargs = dict(n_outer=3, n_inner=3, depth=2)
    a = i2p_quadrature(model, fs, intervals, 0.75, **kwargs)
    b = i2p_partition_sum(model, fs, intervals, 0.75, **kwargs)
    assert b == pytest.approx(a, rel=1e-9)
    assert abs(a) > 0.0


def test_quadrature_validates_arguments():
    model = two_state_chain(1.0, 3.0)
    f = model.center([1.0, 0.0])
    with pytest.raises(ValueError, match="even"):
        i2p_quadrature(model, [f], [(0.0, 1.0)], 0.75)
    with pytest.raises(ValueError, match="positive length"):
        i2p_quadrature(model, [f, f], [(0.0, 1.0), (1.0, 1.0)], 0.75)


# ---------------------------------------------------------------------------
# main-term comparison


def test_main_term_ratio_approaches_one():
    model = two_state_chain(1.0, 3.0)
    f = model.center([1.0, 0.0])
    hurst = 0.75
    ratios = []
    for span in (3.0, 8.0, 20.0):
        rep = main_term_check(model, [f, f], [(0.0, span), (0.0, span)], hurst)
        assert rep.overlaps == (span,)
        ratios.append(rep.value / rep.main_term)
    assert ratios[0] < ratios[1] < ratios[2] < 1.0
    assert abs(ratios[2] - 1.0) < 0.02


def test_main_term_constant_discriminates_gamma_candidates():
    model = two_state_chain(1.0, 3.0)
    f = model.center([1.0, 0.0])
    hurst = 0.75
    rep = main_term_check(model, [f, f], [(0.0, 20.0), (0.0, 20.0)], hurst)
    assert rep.gamma_positive == pytest.approx(gamma_fn(2.0 * hurst - 1.0))
    assert rep.gamma_reflected == pytest.approx(gamma_fn(1.0 - 2.0 * hurst))
    assert abs(rep.empirical_constant - rep.gamma_positive) < 0.05 * abs(rep.gamma_positive)
    assert abs(rep.empirical_constant - rep.gamma_reflected) > 0.5 * abs(rep.gamma_reflected)


def test_main_term_disjoint_intervals():
    model = two_state_chain(1.0, 3.0)
    f = model.center([1.0, 0.0])
    rep = main_term_check(model, [f, f], [(0.0, 1.0), (3.0, 4.0)], 0.75)
    assert rep.overlaps == (0.0,)
    assert rep.main_term == 0.0
    assert rep.empirical_constant is None
    assert abs(rep.value) < 0.05


def test_main_term_validation():
    model = two_state_chain(1.0, 3.0)
    f = model.center([1.0, 0.0])
    with pytest.raises(ValueError, match="centered"):
        main_term_check(model, [[1.0, 0.0], f], [(0.0, 1.0), (0.0, 1.0)], 0.75)
    with pytest.raises(ValueError, match="H > 1/2"):
        main_term_check(model, [f, f], [(0.0, 1.0), (0.0, 1.0)], 0.45)
    with pytest.raises(ValueError, match="2 or 4"):
        main_term_check(model, [f, f, f], [(0.0, 1.0)] * 3, 0.75)


# ---------------------------------------------------------------------------
# graph description files


def test_parse_graph_text_round_trip():
    text = """
    # a two-edge chain
    3
    0 1 -0.5 -1.5
    1 2 0.0 -2.0
    """
    g = parse_graph_text(text)
    assert g.n_vertices == 3
    assert g.edges == ((0, 1), (1, 2))
    assert g.alpha_minus == (-0.5, 0.0)
    assert g.alpha_plus == (-1.5, -2.0)


def test_parse_graph_text_errors():
    with pytest.raises(ValueError, match="empty"):
        parse_graph_text("# nothing\n")
    with pytest.raises(ValueError, match="bad edge line"):
        parse_graph_text("2\n0 1 -0.5\n")
    with pytest.raises(ValueError, match="self-loop"):
        parse_graph_text("2\n1 1 -0.5 -0.5\n")
    with pytest.raises(ValueError, match="nonpositive"):
        parse_graph_text("2\n0 1 0.5 -0.5\n")
