"""Model selection, score-level fusion, and the fusion loss-gap verifier.

An ensemble is an ordered set of per-epoch snapshots. Selection keeps the M
snapshots with the best validation F1; fusion averages the members'
per-sample class probability vectors with uniform weights. Averaging is done
in anchored form (see mathkit.anchored_mean) so fusing M identical members
reproduces the member's probabilities bit for bit.

ce_gap quantifies why fusion helps: for any per-sample target probabilities,
the members' average cross entropy minus the fused model's cross entropy is
the expected log of an arithmetic-to-geometric mean ratio, which the AM-GM
inequality keeps nonnegative. The gap is zero exactly when all members agree
on every sample.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bagging import BaseLearner
from .mathkit import anchored_mean
from .modelio import load_model
from .network import infer_stream
from .training import LossKind


@dataclass
class Ensemble:
    members: list[BaseLearner]
    provenance: str = ""

    def __post_init__(self):
        if len(self.members) < 1:
            raise ValueError("an ensemble needs at least one member")
        dims = {(m.net.input_dim, m.net.num_classes) for m in self.members}
        if len(dims) != 1:
            raise ValueError(f"members disagree on (D, K): {sorted(dims)}")

    @property
    def size(self) -> int:
        return len(self.members)


def select_top_m(learners: list[BaseLearner], m: int) -> Ensemble:
    """Keep the m snapshots with the highest validation F1.

    Ties resolve to the earlier epoch, so selection is deterministic.
    """
    if not 1 <= m <= len(learners):
        raise ValueError(f"m={m} outside [1, {len(learners)}]")
    ranked = sorted(learners, key=lambda lr: (-lr.val_f1, lr.epoch))
    return Ensemble(ranked[:m], provenance=f"top-{m} by validation F1")


def mixed_ensemble(ce_learners: list[BaseLearner], f1_learners: list[BaseLearner],
                   m_each: int) -> Ensemble:
    """Union of the top m_each snapshots from two runs with different losses.

    All 2*m_each members are fused with equal weight.
    """
    if m_each < 1:
        raise ValueError("m_each must be >= 1")
    if len(ce_learners) < m_each or len(f1_learners) < m_each:
        raise ValueError(
            f"need at least {m_each} learners per list, got "
            f"{len(ce_learners)} and {len(f1_learners)}"
        )
    members = (
        select_top_m(ce_learners, m_each).members
        + select_top_m(f1_learners, m_each).members
    )
    return Ensemble(members, provenance=f"top-{m_each} from each of two loss runs")


def fuse_scores(member_probs) -> np.ndarray:
    """Entrywise arithmetic mean of the members' probability vectors.

    Accepts a list of (K,) vectors or an (M, K) array; permutation-invariant
    in members, idempotent on identical members, and simplex-preserving.
    """
    lengths = {int(np.shape(p)[-1]) for p in member_probs}
    if len(lengths) != 1:
        raise ValueError(f"member probability lengths differ: {sorted(lengths)}")
    stacked = np.asarray(member_probs, dtype=np.float64).reshape(-1, lengths.pop())
    return anchored_mean(stacked, axis=0)


def ensemble_infer(ensemble: Ensemble, xs) -> tuple[np.ndarray, np.ndarray]:
    """Sample-wise ensemble prediction over a stream.

    Every member runs its own stateful inference over the full stream; the
    per-sample probability vectors are fused by arithmetic mean (fixed
    member order) and labelled by argmax with lowest-index tie-breaking.
    Returns (fused probabilities (T, K), labels (T,)).
    """
    member_probs = np.stack([infer_stream(m.net, xs) for m in ensemble.members])
    fused = anchored_mean(member_probs, axis=0)
    labels = fused.argmax(axis=1).astype(np.int64)
    return fused, labels


class CeGap(NamedTuple):
    l_avg: float
    l_fusion: float
    delta: float


def ce_gap(target_probs) -> CeGap:
    """Average-member vs fused cross entropy on per-sample target probabilities.

    target_probs: (M, N) array, entry [m, t] being member m's probability for
    the true class of sample t; all entries must be in (0, 1]. Returns
    (l_avg, l_fusion, delta) with delta = l_avg - l_fusion >= 0 by the AM-GM
    inequality, and delta == 0.0 exactly for identical members.
    """
    p = np.asarray(target_probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
        raise ValueError(f"expected an (M, N) array, got shape {np.shape(target_probs)}")
    if not np.all(np.isfinite(p)) or p.min() <= 0.0 or p.max() > 1.0:
        raise ValueError("target probabilities must lie in (0, 1]")
    avg_log = anchored_mean(np.log(p), axis=0)  # (N,)
    log_avg = np.log(anchored_mean(p, axis=0))  # (N,)
    l_avg = float(-avg_log.mean())
    l_fusion = float(-log_avg.mean())
    return CeGap(l_avg, l_fusion, l_avg - l_fusion)


# ---------------------------------------------------------------------------
# manifest persistence

ENSEMBLE_FIELDS = ["path", "epoch", "loss", "val_f1"]


def save_ensemble(ensemble: Ensemble, manifest_path) -> None:
    """Write an ensemble manifest referencing the members' model files.

    Every member must know its on-disk model file (source_path); paths are
    stored relative to the manifest so the directory can move as a unit.
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# provenance={ensemble.provenance}\n")
        writer = csv.writer(fh)
        writer.writerow(ENSEMBLE_FIELDS)
        for m in ensemble.members:
            if not m.source_path:
                raise ValueError(
                    f"member epoch {m.epoch} has no model file to reference"
                )
            rel = os.path.relpath(os.path.abspath(m.source_path), base)
            writer.writerow([rel, m.epoch, m.loss.value, repr(m.val_f1)])


def load_ensemble(manifest_path) -> Ensemble:
    base = os.path.dirname(os.path.abspath(manifest_path))
    provenance = ""
    with open(manifest_path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    rows = []
    for line in lines:
        if line.startswith("#"):
            if line.startswith("# provenance="):
                provenance = line.split("=", 1)[1]
            continue
        rows.append(line)
    members = []
    for row in csv.DictReader(rows):
        path = os.path.join(base, row["path"])
        net, _ = load_model(path)
        members.append(
            BaseLearner(net, int(row["epoch"]), LossKind(row["loss"]),
                        float(row["val_f1"]), source_path=path)
        )
    if not members:
        raise ValueError(f"{manifest_path}: no members listed")
    return Ensemble(members, provenance)
