"""Contrastive regularizers over graph embeddings.

Two losses share the temperature-scaled cosine-softmax shape: the
individualized loss pulls together visits of the same subject against all
other visits in the batch, and the multimodal loss pulls a visit's embedding
toward its own cognitive vector against the subject's other visits. Both
return exact gradients with respect to the embeddings.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BatchIndex",
    "ContrastiveConfig",
    "individualized_loss",
    "multimodal_loss",
    "total_loss",
]


@dataclass(frozen=True)
class BatchIndex:
    """Visit-to-subject bookkeeping for one batch."""

    subject_ids: tuple[str, ...]
    visit_ids: tuple[int, ...]
    groups: dict[str, tuple[int, ...]] = field(compare=False)

    @classmethod
    def from_visits(cls, subject_ids, visit_ids) -> "BatchIndex":
        subject_ids = tuple(str(s) for s in subject_ids)
        visit_ids = tuple(int(v) for v in visit_ids)
        if len(subject_ids) != len(visit_ids):
            raise ValueError("subject and visit lists must have equal length")
        seen = set()
        groups: dict[str, list[int]] = {}
        for pos, (subj, visit) in enumerate(zip(subject_ids, visit_ids)):
            if (subj, visit) in seen:
                raise ValueError(f"duplicate visit: subject {subj!r} visit {visit}")
            seen.add((subj, visit))
            groups.setdefault(subj, []).append(pos)
        return cls(
            subject_ids=subject_ids,
            visit_ids=visit_ids,
            groups={s: tuple(p) for s, p in groups.items()},
        )

    @property
    def n_visits(self) -> int:
        return len(self.subject_ids)

    @property
    def n_subjects(self) -> int:
        return len(self.groups)

    def multi_visit_subjects(self) -> list[str]:
        return [s for s, pos in self.groups.items() if len(pos) > 1]


@dataclass(frozen=True)
class ContrastiveConfig:
    """Temperature and loss weights; defaults are the operating values.

    include_positive_in_denominator restores the standard InfoNCE denominator
    for the multimodal loss; off by default, where the positive pair competes
    only against the subject's other visits.
    """

    temperature: float = 0.9
    lambda1: float = 1.5
    lambda2: float = 0.5
    include_positive_in_denominator: bool = False

    def __post_init__(self) -> None:
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise ValueError("loss weights must be nonnegative")


def _unit_rows(x: np.ndarray, index: BatchIndex, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt((x * x).sum(axis=1))
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"zero-norm {what} for subject {index.subject_ids[i]!r} "
            f"visit {index.visit_ids[i]}; cosine similarity undefined"
        )
    return x / norms[:, None], norms


def _norm_backward(d_unit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d/dx of x/|x| applied to an upstream gradient on the unit vector
    return (d_unit - (d_unit * unit).sum(axis=1, keepdims=True) * unit) / norms[:, None]


def individualized_loss(
    embeddings: np.ndarray, index: BatchIndex, cfg: ContrastiveConfig
) -> tuple[float, np.ndarray]:
    """Same-subject visits are positives; every other visit is a negative.

    loss = -(1/N) sum_i sum_{j~i} log[ exp(sim_ij/tau) / sum_{k!=i} exp(sim_ik/tau) ]
    with cosine similarity. Returns (loss, gradient wrt embeddings).
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n = embeddings.shape[0]
    if n != index.n_visits:
        raise ValueError("embedding count does not match the batch index")
    if n < 2:
        raise ValueError("need at least two visits")
    unit, norms = _unit_rows(embeddings, index, "embedding")
    subjects = np.array(index.subject_ids)
    positive = (subjects[:, None] == subjects[None, :]) & ~np.eye(n, dtype=bool)
    if not positive.any():
        warnings.warn("no same-subject pair in batch; individualized loss is 0")
        return 0.0, np.zeros_like(embeddings)
    tau = cfg.temperature
    logits = (unit @ unit.T) / tau
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    expd = np.exp(logits - row_max)
    z = expd.sum(axis=1, keepdims=True)
    log_den = np.log(z) + row_max
    counts = positive.sum(axis=1)
    loss = -(np.where(positive, logits, 0.0).sum() - float(counts @ log_den[:, 0])) / n
    # dL/d logits = (c_i * softmax_ik - 1[positive]) / N, zero on the diagonal
    p = expd / z
    g_logits = (counts[:, None] * p - positive) / n
    np.fill_diagonal(g_logits, 0.0)
    g_sim = g_logits / tau
    d_unit = (g_sim + g_sim.T) @ unit
    return float(loss), _norm_backward(d_unit, unit, norms)


def multimodal_loss(
    embeddings: np.ndarray,
    cognition: np.ndarray,
    index: BatchIndex,
    cfg: ContrastiveConfig,
) -> tuple[float, np.ndarray]:
    """Within each multi-visit subject, align a visit's embedding with its own
    cognitive vector against the subject's other visits' cognitive vectors.

    The per-subject sums are averaged over all distinct subjects in the
    batch; single-visit subjects contribute nothing. Returns (loss, gradient
    wrt embeddings) — cognitive vectors carry no parameters.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    cognition = np.asarray(cognition, dtype=np.float64)
    if embeddings.shape[0] != index.n_visits or cognition.shape[0] != index.n_visits:
        raise ValueError("embedding/cognition count does not match the batch index")
    if embeddings.shape[1] != cognition.shape[1]:
        raise ValueError(
            f"embedding dim {embeddings.shape[1]} does not match "
            f"cognitive dim {cognition.shape[1]}"
        )
    grad = np.zeros_like(embeddings)
    multi = index.multi_visit_subjects()
    if not multi:
        warnings.warn("every subject has a single visit; multimodal loss is 0")
        return 0.0, grad
    n_subjects = index.n_subjects
    tau = cfg.temperature
    loss = 0.0
    for subject in multi:
        pos = np.array(index.groups[subject])
        sub_index = BatchIndex.from_visits(
            [index.subject_ids[i] for i in pos], [index.visit_ids[i] for i in pos]
        )
        unit_h, norms_h = _unit_rows(embeddings[pos], sub_index, "embedding")
        unit_c, _ = _unit_rows(cognition[pos], sub_index, "cognitive vector")
        m = len(pos)
        logits = (unit_h @ unit_c.T) / tau
        denom_logits = logits.copy()
        if not cfg.include_positive_in_denominator:
            np.fill_diagonal(denom_logits, -np.inf)
        row_max = denom_logits.max(axis=1, keepdims=True)
        expd = np.exp(denom_logits - row_max)
        z = expd.sum(axis=1, keepdims=True)
        log_den = np.log(z) + row_max
        loss -= float(np.trace(logits) - log_den.sum())
        p = expd / z
        g_logits = (p - np.eye(m)) / tau
        d_unit_h = g_logits @ unit_c
        grad[pos] += _norm_backward(d_unit_h, unit_h, norms_h)
    loss /= n_subjects
    grad /= n_subjects
    return loss, grad


def total_loss(corr: float, ind: float, mul: float, cfg: ContrastiveConfig) -> float:
    """Weighted sum of the three components."""
    value = corr + cfg.lambda1 * ind + cfg.lambda2 * mul
    if not np.isfinite(value):
        raise ValueError(
            f"non-finite total loss from components corr={corr}, ind={ind}, mul={mul}"
        )
    return float(value)
