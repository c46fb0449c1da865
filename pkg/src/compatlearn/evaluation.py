"""Fill-in-the-blank and compatibility-prediction evaluation.

FITB picks, among four same-category candidates, the one whose embedding has
the highest cosine similarity to the unweighted mean of the context-item
embeddings (the candidate slot is excluded from the mean).  Compatibility
scores an outfit as minus the mean pairwise Euclidean distance, and the
ranking of real outfits against generated negatives is summarized as the
Mann-Whitney ROC-AUC with tie handling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import Catalog
from .errors import MetricError, ParameterError, ShapeError
from .synthcorpus import make_negative_outfits

logger = logging.getLogger(__name__)

N_CANDIDATES = 4
MAX_QUESTIONS_PER_OUTFIT = 2


@dataclass(frozen=True)
class FitbQuestion:
    context_item_ids: tuple[str, ...]
    candidates: tuple[str, str, str, str]
    answer_index: int

    def __post_init__(self):
        if len(self.candidates) != N_CANDIDATES:
            raise ParameterError(f"need exactly {N_CANDIDATES} candidates")
        if len(set(self.candidates)) != N_CANDIDATES:
            raise ParameterError("candidates must be distinct")
        if not self.context_item_ids:
            raise ParameterError("context must be non-empty")
        if not 0 <= self.answer_index < N_CANDIDATES:
            raise ParameterError("answer_index out of range")


@dataclass(frozen=True)
class CompatExample:
    item_ids: tuple[str, ...]
    label: int

    def __post_init__(self):
        if len(self.item_ids) < 2:
            raise ParameterError("a compatibility example needs >= 2 items")
        if self.label not in (0, 1):
            raise ParameterError("label must be 0 or 1")


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        logger.warning("zero-norm embedding in cosine similarity; treating as -1")
        return -1.0
    return float(a @ b / (na * nb))


def fitb_answer(question: FitbQuestion, embeddings: dict[str, np.ndarray]) -> int:
    """Index of the candidate most cosine-similar to the mean context embedding.

    Ties break toward the lowest index; zero-norm vectors score -1.
    """
    context = np.mean(
        np.asarray([embeddings[i] for i in question.context_item_ids], dtype=np.float64),
        axis=0,
    )
    sims = [_cosine(np.asarray(embeddings[c], dtype=np.float64), context)
            for c in question.candidates]
    return int(np.argmax(sims))


def fitb_accuracy(questions, embeddings) -> float:
    if not questions:
        raise ParameterError("need at least one question")
    hits = sum(1 for q in questions if fitb_answer(q, embeddings) == q.answer_index)
    return hits / len(questions)


def compat_score(item_ids, embeddings) -> float:
    """Minus the mean pairwise Euclidean distance; higher means more compatible."""
    ids = list(item_ids)
    if len(ids) < 2:
        raise ParameterError(f"need >= 2 items to score compatibility, got {len(ids)}")
    vecs = np.asarray([embeddings[i] for i in ids], dtype=np.float64)
    total = 0.0
    count = 0
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            total += float(np.linalg.norm(vecs[i] - vecs[j]))
            count += 1
    return -total / count


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 * P(tie).

    Computed via tie-averaged ranks, which equals the pair-counting form
    exactly (up to float rounding).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ShapeError("scores and labels must be equal-length 1-d sequences")
    if not np.all(np.isin(y, (0, 1))):
        raise ParameterError("labels must be 0 or 1")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: need at least one positive and one negative")

    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def generate_fitb_questions(
    outfits,
    catalog: Catalog,
    ground_truth: dict[str, int] | None,
    rng: np.random.Generator,
    max_per_outfit: int = MAX_QUESTIONS_PER_OUTFIT,
):
    """One question per held-out outfit slot, capped per outfit.

    Distractors share the held-out item's category, come from outside the
    outfit, and (when ground truth is available) from a different theme than
    the context, so they are known-incompatible.  Slots with fewer than three
    eligible distractors are skipped with a log entry.  Candidate order is
    shuffled by ``rng``.
    """
    by_cat: dict[str, list[str]] = {}
    for iid in sorted(catalog.items):
        by_cat.setdefault(catalog.items[iid].category, []).append(iid)

    questions: list[FitbQuestion] = []
    skipped = 0
    for outfit in outfits:
        ids = list(outfit.item_ids)
        if len(ids) < 2:
            continue
        slots = list(range(len(ids)))
        if len(slots) > max_per_outfit:
            chosen = rng.choice(len(slots), size=max_per_outfit, replace=False)
            slots = [slots[i] for i in sorted(chosen)]
        for slot in slots:
            answer = ids[slot]
            context = tuple(i for i in ids if i != answer)
            pool = [i for i in by_cat.get(catalog.items[answer].category, [])
                    if i not in outfit.item_ids]
            if ground_truth is not None:
                context_themes = {ground_truth[c] for c in context}
                pool = [i for i in pool if ground_truth[i] not in context_themes]
            if len(pool) < N_CANDIDATES - 1:
                skipped += 1
                logger.info(
                    "outfit %s slot %d skipped: only %d eligible distractors",
                    outfit.id, slot, len(pool),
                )
                continue
            picks = rng.choice(len(pool), size=N_CANDIDATES - 1, replace=False)
            candidates = [answer] + [pool[i] for i in picks]
            order = rng.permutation(N_CANDIDATES)
            shuffled = tuple(candidates[i] for i in order)
            questions.append(
                FitbQuestion(
                    context_item_ids=context,
                    candidates=shuffled,
                    answer_index=int(np.where(order == 0)[0][0]),
                )
            )
    if skipped and not questions:
        logger.warning("no FITB questions could be generated (%d slots skipped)", skipped)
    return questions


def generate_compat_examples(
    outfits,
    catalog: Catalog,
    ground_truth: dict[str, int] | None,
    rng: np.random.Generator,
):
    """Positives are the given outfits; negatives are count-matched 1:1.

    With ground truth, negatives come from
    :func:`compatlearn.synthcorpus.make_negative_outfits` (category layout
    preserved, >= 2 themes mixed).  Without it, negatives preserve the
    category layout with uniformly resampled items, rejecting any set that
    duplicates a real outfit.
    """
    outfits = list(outfits)
    if len(outfits) < 2:
        raise ParameterError(f"need >= 2 outfits, got {len(outfits)}")
    examples = [CompatExample(item_ids=tuple(o.item_ids), label=1) for o in outfits]

    if ground_truth is not None:
        negatives = make_negative_outfits(
            catalog, ground_truth, len(outfits), rng, template_outfits=outfits
        )
        examples.extend(
            CompatExample(item_ids=tuple(o.item_ids), label=lab) for o, lab in negatives
        )
        return examples

    by_cat: dict[str, list[str]] = {}
    for iid in sorted(catalog.items):
        by_cat.setdefault(catalog.items[iid].category, []).append(iid)
    positive_sets = {frozenset(o.item_ids) for o in catalog.outfits}
    seen: set[frozenset[str]] = set()
    made = 0
    attempts = 0
    while made < len(outfits) and attempts < 60 * len(outfits) + 100:
        attempts += 1
        template = outfits[rng.integers(len(outfits))]
        cats = [catalog.items[i].category for i in template.item_ids]
        chosen = [by_cat[c][rng.integers(len(by_cat[c]))] for c in cats]
        key = frozenset(chosen)
        if len(key) < len(chosen) or key in positive_sets or key in seen:
            continue
        seen.add(key)
        examples.append(CompatExample(item_ids=tuple(chosen), label=0))
        made += 1
    if made < len(outfits):
        logger.warning("only %d of %d negative examples could be generated", made, len(outfits))
    return examples


def evaluate_embeddings(questions, examples, embeddings) -> dict:
    """Compute both metrics from a fixed id -> vector mapping."""
    metrics = {
        "fitb_accuracy": fitb_accuracy(questions, embeddings) if questions else float("nan"),
        "compat_auc": float("nan"),
        "n_questions": len(questions),
        "n_compat": len(examples),
    }
    if examples:
        scores = [compat_score(ex.item_ids, embeddings) for ex in examples]
        labels = [ex.label for ex in examples]
        metrics["compat_auc"] = roc_auc(scores, labels)
    return metrics


def collect_item_ids(questions, examples) -> list[str]:
    """Every item id an evaluation pass needs an embedding for (sorted)."""
    ids: set[str] = set()
    for q in questions:
        ids.update(q.context_item_ids)
        ids.update(q.candidates)
    for ex in examples:
        ids.update(ex.item_ids)
    return sorted(ids)


def compute_item_embeddings(catalog: Catalog, item_ids, embed_fn, chunk: int = 256):
    """Embed catalog items with ``embed_fn((n, h, w, 3) floats) -> (n, D)``."""
    item_ids = list(item_ids)
    out: dict[str, np.ndarray] = {}
    for s in range(0, len(item_ids), chunk):
        batch_ids = item_ids[s : s + chunk]
        batch = np.stack([catalog.get_image(i) for i in batch_ids])
        vecs = embed_fn(batch)
        for iid, v in zip(batch_ids, vecs):
            out[iid] = np.asarray(v, dtype=np.float64)
    return out
