"""The four distillation objectives and the rank-delta weights.

Conventions, fixed across all losses: per-anchor means (never sums), batch
value is the mean over anchors, teacher quantities are constants (no
gradient), and degenerate anchors are skipped and counted rather than
aborting the step.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, DegenerateInputError, TrainingSignalError
from ..numerics import Tensor, cosine, logsumexp, pearson, stack

CI_VARIANTS = ("published", "draft", "standard")


@dataclass
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.3
    gamma: float = 0.1
    tau: float = 1.0

    def validate(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise DataError("loss weights must be non-negative")
        if self.tau <= 0:
            raise DataError("temperature must be positive")


@dataclass
class PairScore:
    """Student logit plus cached teacher judgment for one (anchor, cand)."""

    cand_id: int
    z: Tensor
    s_t: float
    zeta_t: float
    feature_s: Tensor = None
    feature_t: np.ndarray = None


@dataclass
class AnchorScores:
    positives: list
    hards: list
    in_batch: list
    task: str = "sym"


@dataclass
class LossReport:
    l_ci: float
    l_ri_ph: float
    l_ri_hi: float
    l_fi: float
    l_total: float
    counters: dict = field(default_factory=dict)


def loss_ci(anchors, tau, variant="published"):
    """Contrastive imitation.

    published: -mean_j log[ exp(s_t_ij z_ij / tau) /
                            sum_k exp((1 - s_t_ik) z_ik / tau) ]
    draft:     denominator weights every negative by the positive's own
               teacher score instead.
    standard:  plain contrastive loss (all teacher weights 1).
    """
    if variant not in CI_VARIANTS:
        raise DataError(f"unknown CI variant {variant!r}")
    per_anchor = []
    for anchor in anchors:
        negatives = list(anchor.hards) + list(anchor.in_batch)
        if not anchor.positives:
            raise DataError("CI loss needs >= 1 positive per anchor")
        if not negatives:
            raise DataError("CI loss needs >= 1 negative per anchor")
        terms = []
        if variant == "published":
            denom = logsumexp(stack(
                [n.z.scale((1.0 - n.s_t) / tau) for n in negatives]))
            for p in anchor.positives:
                terms.append(denom - p.z.scale(p.s_t / tau))
        elif variant == "standard":
            denom = logsumexp(stack([n.z.scale(1.0 / tau) for n in negatives]))
            for p in anchor.positives:
                terms.append(denom - p.z.scale(1.0 / tau))
        else:  # draft: denominator depends on the positive's teacher score
            for p in anchor.positives:
                denom = logsumexp(stack(
                    [n.z.scale(p.s_t / tau) for n in negatives]))
                terms.append(denom - p.z.scale(p.s_t / tau))
        per_anchor.append(stack(terms).mean())
    return stack(per_anchor).mean()


def loss_ri_ph(anchors):
    """Rank imitation over positives + hard negatives: mean over anchors of
    1 - pearson(teacher log-odds, student logits).  In-batch negatives are
    excluded by construction.  Returns (loss or None, skipped count)."""
    per_anchor = []
    skipped = 0
    for anchor in anchors:
        cands = list(anchor.positives) + list(anchor.hards)
        if len(cands) < 2:
            skipped += 1
            continue
        teacher = np.array([c.zeta_t for c in cands])
        student_z = np.array([float(c.z.data) for c in cands])
        if teacher.std() <= 1e-12 or student_z.std() <= 1e-12:
            skipped += 1
            continue
        per_anchor.append(
            1.0 - pearson(Tensor(teacher), stack([c.z for c in cands])))
    if not per_anchor:
        return None, skipped
    return stack(per_anchor).mean(), skipped


def lambda_weights(gains_hard, gains_ib, z_hard, z_ib, ids_hard, ids_ib):
    """Clamped NDCG swap deltas for every (hard, in-batch) negative pair.

    All candidates are ranked by student score descending (ties by id
    ascending, 1-based positions); gains are teacher probabilities; IDCG
    normalizes.  lambda_jk = max((g_j - g_k) |1/log2(1+p_j) - 1/log2(1+p_k)|
    / IDCG, 0), hence zero whenever g_j <= g_k.  Returns (matrix, idcg_zero).
    """
    gains = np.concatenate([gains_hard, gains_ib]).astype(np.float64)
    scores = np.concatenate([z_hard, z_ib]).astype(np.float64)
    ids = np.concatenate([ids_hard, ids_ib])
    n_hard = len(gains_hard)
    n_ib = len(gains_ib)
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    pos = np.empty(len(ids), dtype=np.float64)
    for rank, i in enumerate(order, start=1):
        pos[i] = rank
    ranks = np.arange(1, len(ids) + 1)
    idcg = float(np.sort(gains)[::-1] @ (1.0 / np.log2(1.0 + ranks)))
    if idcg == 0.0:
        return np.zeros((n_hard, n_ib)), True
    disc = 1.0 / np.log2(1.0 + pos)
    gain_diff = gains[:n_hard, None] - gains[None, n_hard:]
    disc_diff = np.abs(disc[:n_hard, None] - disc[None, n_hard:])
    lam = np.maximum(gain_diff * disc_diff / idcg, 0.0)
    return lam, False


def loss_ri_hi(anchors):
    """Weighted pairwise rank loss between hard and in-batch negatives.

    Per anchor: -(1/(|H||I|)) sum_jk lambda_jk log(sigma(z_j - z_k)); the
    weights are stop-gradient constants from the current student ranking.
    Anchors with no in-batch negatives contribute zero and are counted.
    Returns (loss, no-in-batch count, idcg-zero count)."""
    per_anchor = []
    warn_empty = 0
    warn_idcg = 0
    for anchor in anchors:
        if not anchor.hards or not anchor.in_batch:
            warn_empty += 1
            per_anchor.append(Tensor(0.0))
            continue
        lam, idcg_zero = lambda_weights(
            [h.s_t for h in anchor.hards], [n.s_t for n in anchor.in_batch],
            [float(h.z.data) for h in anchor.hards],
            [float(n.z.data) for n in anchor.in_batch],
            [h.cand_id for h in anchor.hards],
            [n.cand_id for n in anchor.in_batch])
        warn_idcg += idcg_zero
        terms = []
        for j, h in enumerate(anchor.hards):
            for k, n in enumerate(anchor.in_batch):
                w = lam[j, k]
                if w == 0.0:
                    continue  # exact zero weight: the term and its gradient vanish
                terms.append(((h.z - n.z).log_sigmoid()).scale(-w))
        if terms:
            scale = 1.0 / (len(anchor.hards) * len(anchor.in_batch))
            per_anchor.append(stack(terms).sum().scale(scale))
        else:
            per_anchor.append(Tensor(0.0))
    return stack(per_anchor).mean(), warn_empty, warn_idcg


def loss_fi(anchors):
    """Feature imitation: match pairwise cosine structure of the pair
    features over positives + hard negatives (strict upper triangle).
    Returns (loss, skipped anchor count)."""
    per_anchor = []
    skipped = 0
    for anchor in anchors:
        cands = [c for c in list(anchor.positives) + list(anchor.hards)
                 if c.feature_s is not None and c.feature_t is not None]
        if len(cands) < 2:
            skipped += 1
            continue
        teacher_r = []
        student_r = []
        degenerate = False
        for j in range(len(cands)):
            for k in range(j + 1, len(cands)):
                ft_j = cands[j].feature_t.astype(np.float64)
                ft_k = cands[k].feature_t.astype(np.float64)
                nj, nk = np.linalg.norm(ft_j), np.linalg.norm(ft_k)
                if nj <= 1e-12 or nk <= 1e-12:
                    degenerate = True
                    break
                try:
                    student_r.append(cosine(cands[j].feature_s,
                                            cands[k].feature_s))
                except DegenerateInputError:
                    degenerate = True
                    break
                teacher_r.append(float(ft_j @ ft_k / (nj * nk)))
            if degenerate:
                break
        if degenerate or not teacher_r:
            skipped += 1
            continue
        diff = Tensor(np.array(teacher_r)) - stack(student_r)
        per_anchor.append((diff * diff).mean())
    if not per_anchor:
        return Tensor(0.0), skipped
    return stack(per_anchor).mean(), skipped


def loss_total(anchors, weights: LossWeights, ci_variant="published",
               ablation=()):
    """Weighted sum of the four objectives on one batch.

    Ablation flags zero a term's weight but its value is still computed and
    reported.  Returns (total loss tensor, LossReport)."""
    weights.validate()
    ablation = set(ablation)
    variant = "standard" if "no-ci-weights" in ablation else ci_variant
    alpha = 0.0 if "no-ri-ph" in ablation else weights.alpha
    beta = 0.0 if "no-ri-hi" in ablation else weights.beta
    gamma = 0.0 if ("no-fi" in ablation or "iem=cos" in ablation) else weights.gamma

    ci = loss_ci(anchors, weights.tau, variant)
    ph, skipped_ph = loss_ri_ph(anchors)
    if ph is None:
        if alpha > 0.0:
            raise TrainingSignalError(
                "every anchor was degenerate for rank imitation")
        ph = Tensor(0.0)
    hi, warn_empty, warn_idcg = loss_ri_hi(anchors)
    fi, skipped_fi = loss_fi(anchors)

    total = ci + ph.scale(alpha) + hi.scale(beta) + fi.scale(gamma)
    report = LossReport(
        l_ci=float(ci.data), l_ri_ph=float(ph.data), l_ri_hi=float(hi.data),
        l_fi=float(fi.data), l_total=float(total.data),
        counters={"skipped_ph": skipped_ph, "skipped_fi": skipped_fi,
                  "no_in_batch": warn_empty, "idcg_zero": warn_idcg,
                  "alpha": alpha, "beta": beta, "gamma": gamma})
    return total, report
