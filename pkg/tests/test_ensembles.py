import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lstmens import (
    BaseLearner,
    LossKind,
    ce_gap,
    ensemble_infer,
    fuse_scores,
    infer_stream,
    init_network,
    load_ensemble,
    mixed_ensemble,
    save_ensemble,
    select_top_m,
)
from lstmens.bagging import save_learners, load_learners
from lstmens.mathkit import softmax
from lstmens.rng import Rng


def make_learners(spec):
    """spec: list of (epoch, val_f1[, loss]) tuples -> BaseLearners."""
    out = []
    for item in spec:
        epoch, val_f1 = item[0], item[1]
        loss = item[2] if len(item) > 2 else LossKind.CE
        net = init_network(3, 4, 2, num_layers=1, rng=Rng(epoch))
        out.append(BaseLearner(net, epoch, loss, val_f1))
    return out


# ---------------------------------------------------------------------------
# selection


def test_select_all():
    learners = make_learners([(1, 0.5), (2, 0.7), (3, 0.6)])
    ens = select_top_m(learners, 3)
    assert [m.epoch for m in ens.members] == [2, 3, 1]


def test_select_single_best():
    learners = make_learners([(1, 0.5), (2, 0.9), (3, 0.6)])
    assert select_top_m(learners, 1).members[0].epoch == 2


def test_select_tie_prefers_lower_epoch():
    learners = make_learners([(3, 0.8), (1, 0.8), (2, 0.8)])
    assert [m.epoch for m in select_top_m(learners, 2).members] == [1, 2]


def test_select_m_out_of_range():
    learners = make_learners([(1, 0.5)])
    with pytest.raises(ValueError):
        select_top_m(learners, 0)
    with pytest.raises(ValueError):
        select_top_m(learners, 2)


def test_mixed_ensemble_sizes():
    ce = make_learners([(e, 0.5 + 0.01 * e) for e in range(1, 6)])
    f1 = make_learners([(e, 0.4 + 0.01 * e, LossKind.F1) for e in range(1, 6)])
    ens = mixed_ensemble(ce, f1, 2)
    assert ens.size == 4
    assert [m.loss for m in ens.members] == [LossKind.CE] * 2 + [LossKind.F1] * 2
    with pytest.raises(ValueError):
        mixed_ensemble(ce, f1, 0)
    with pytest.raises(ValueError):
        mixed_ensemble(ce, f1, 6)


# ---------------------------------------------------------------------------
# fusion


def test_fuse_identical_vectors_is_identity():
    v = np.array([0.2, 0.5, 0.3])
    assert np.array_equal(fuse_scores([v, v, v]), v)


def test_fuse_two_corners():
    assert np.array_equal(fuse_scores([np.array([1.0, 0.0]), np.array([0.0, 1.0])]),
                          np.array([0.5, 0.5]))


def test_fuse_rejects_mismatched_lengths():
    with pytest.raises(ValueError, match="lengths differ"):
        fuse_scores([np.array([0.5, 0.5]), np.array([0.3, 0.3, 0.4])])


@given(st.integers(min_value=1, max_value=8), st.integers(min_value=2, max_value=6),
       st.integers(min_value=0, max_value=10**9))
@settings(max_examples=60)
def test_fuse_simplex_and_permutation_invariance(m, k, seed):
    rng = Rng(seed)
    probs = softmax(rng.normal_block(m * k).reshape(m, k) * 3.0)
    fused = fuse_scores(probs)
    assert abs(fused.sum() - 1.0) < 1e-12
    assert np.all(fused > 0.0)
    perm = probs[::-1]
    assert np.allclose(fuse_scores(perm), fused, atol=1e-15)


# ---------------------------------------------------------------------------
# ensemble inference


def test_ensemble_m1_equals_member_bitwise():
    learners = make_learners([(1, 0.5)])
    rng = Rng(3)
    xs = rng.normal_block(3 * 20).reshape(20, 3)
    ens = select_top_m(learners, 1)
    fused, labels = ensemble_infer(ens, xs)
    member = infer_stream(learners[0].net, xs)
    assert np.array_equal(fused, member)
    assert np.array_equal(labels, member.argmax(axis=1))


def test_ensemble_identical_members_equal_single():
    base = make_learners([(1, 0.5)])[0]
    triple = [base, base, base]
    from lstmens.ensembles import Ensemble

    rng = Rng(4)
    xs = rng.normal_block(3 * 15).reshape(15, 3)
    fused_triple, _ = ensemble_infer(Ensemble(triple), xs)
    fused_single, _ = ensemble_infer(Ensemble([base]), xs)
    assert np.array_equal(fused_triple, fused_single)


# ---------------------------------------------------------------------------
# loss gap


def test_ce_gap_identical_members_zero_exactly():
    rng = Rng(5)
    p = rng.uniform_block(50).reshape(1, 50) * 0.9 + 0.05
    stacked = np.vstack([p, p, p])
    gap = ce_gap(stacked)
    assert gap.delta == 0.0
    assert gap.l_avg == gap.l_fusion


def test_ce_gap_hand_case():
    gap = ce_gap(np.array([[0.9], [0.1]]))
    l_avg = -(math.log(0.9) + math.log(0.1)) / 2.0
    l_fusion = -math.log(0.5)
    assert abs(gap.l_avg - l_avg) < 1e-15
    assert abs(gap.l_fusion - l_fusion) < 1e-15
    assert abs(gap.delta - (l_avg - l_fusion)) < 1e-15
    assert gap.delta > 0.5


def test_ce_gap_rejects_out_of_range():
    with pytest.raises(ValueError):
        ce_gap(np.array([[0.0, 0.5]]))
    with pytest.raises(ValueError):
        ce_gap(np.array([[1.5, 0.5]]))


@given(st.integers(min_value=1, max_value=16), st.integers(min_value=1, max_value=64),
       st.integers(min_value=0, max_value=10**9))
@settings(max_examples=150)
def test_ce_gap_nonnegative(m, n, seed):
    rng = Rng(seed)
    p = rng.uniform_block(m * n).reshape(m, n)
    p = np.clip(p, 1e-12, 1.0)
    assert ce_gap(p).delta >= -1e-12


# ---------------------------------------------------------------------------
# manifests


def test_ensemble_manifest_round_trip(tmp_path):
    learners = []
    for epoch in range(1, 5):
        net = init_network(3, 4, 2, num_layers=1, rng=Rng(epoch))
        learners.append(BaseLearner(net, epoch, LossKind.CE, 0.5 + 0.05 * epoch))
    manifest = save_learners(learners, tmp_path / "run")
    loaded = load_learners(manifest)
    ens = select_top_m(loaded, 2)
    save_ensemble(ens, tmp_path / "ens.csv")
    back = load_ensemble(tmp_path / "ens.csv")
    assert back.size == 2
    assert back.provenance == ens.provenance
    assert [m.epoch for m in back.members] == [m.epoch for m in ens.members]
    for ma, mb in zip(ens.members, back.members):
        for (_, ta), (_, tb) in zip(ma.net.param_items(), mb.net.param_items()):
            assert np.array_equal(ta, tb)
