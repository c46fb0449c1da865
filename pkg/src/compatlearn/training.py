"""The optimization loop: three losses, Adam, validation-based selection.

Each iteration samples a labeled triplet batch and an unlabeled item batch,
embeds the labeled triplets (L_labeled), embeds the unlabeled batch together
with its shape- and appearance-transformed views (L_consistency), mines
pseudo-triplets among the unlabeled embeddings (L_pseudo), and takes one
Adam step on the weighted sum.  After every epoch the model is scored on the
validation outfits and the checkpoint with the best compatibility AUC wins.

The reference path is single-threaded and fully deterministic given the
config seed; two runs with the same config produce bitwise-identical logs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import evaluation, mining
from .dataset import (
    Catalog,
    SplitSpec,
    sample_labeled_batch,
    sample_unlabeled_batch,
)
from .encoder import EncoderConfig, EncoderState, embed, init_encoder, loss_gradient
from .errors import ConfigError, NumericError, ParameterError, ShapeError
from .losses import LossConfig, combined_objective, triplet_margin_loss_grad
from .transforms import (
    AppearanceTransformParams,
    ShapeTransformParams,
    transform_batch,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the training loop.

    Defaults are the reference values: labeled batch 256, unlabeled batch
    1024, margin 0.4, lambda_ss 0.1, lambda_pseudo 1.0, Adam at 5e-5, 10
    epochs.  An epoch is ceil(|labeled outfits| / labeled_batch) iterations.
    """

    labeled_batch: int = 256
    unlabeled_batch: int = 1024
    loss: LossConfig = field(default_factory=LossConfig)
    learning_rate: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 10
    seed: int = 0
    backprop_chunk: int = 128
    shape_params: ShapeTransformParams = field(default_factory=ShapeTransformParams)
    appearance_params: AppearanceTransformParams = field(
        default_factory=AppearanceTransformParams
    )

    def __post_init__(self):
        for name in ("labeled_batch", "unlabeled_batch", "epochs", "backprop_chunk"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError("beta1/beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be > 0")

    def iterations_per_epoch(self, n_labeled_outfits: int) -> int:
        return math.ceil(n_labeled_outfits / self.labeled_batch)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(
    params: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    if params.shape != grad.shape:
        raise ShapeError(f"params {params.shape} and grad {grad.shape} differ")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient passed to adam_step")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad**2
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + epsilon)
    return new_params, AdamState(m=m, v=v, t=t)


@dataclass(frozen=True)
class IterationRecord:
    epoch: int
    iteration: int
    loss_labeled: float
    loss_consistency: float
    loss_pseudo: float
    loss_total: float
    pseudo_dropped: int


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    val_compat_auc: float
    val_fitb_accuracy: float


@dataclass
class TrainLog:
    iterations: list[IterationRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    aborted: str | None = None

    def write_ndjson(self, fh, config_hash: str | None = None):
        """Newline-delimited JSON: one meta line, then one line per record."""
        meta = {"type": "meta", "best_epoch": self.best_epoch, "aborted": self.aborted}
        if config_hash is not None:
            meta["config_hash"] = config_hash
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for rec in self.iterations:
            fh.write(json.dumps({"type": "iteration", **rec.__dict__}, sort_keys=True) + "\n")
        for rec in self.epochs:
            fh.write(json.dumps({"type": "epoch", **rec.__dict__}, sort_keys=True) + "\n")


@dataclass(frozen=True)
class TrainResult:
    best_state: EncoderState
    last_state: EncoderState
    log: TrainLog


def _stack_pixels(items) -> np.ndarray:
    return np.stack([item.pixels() for item in items])


def _validation_assets(catalog, split, ground_truth, eval_seed):
    val_outfits = [o for o in catalog.outfits if o.id in split.validation_outfit_ids]
    if not val_outfits:
        return None
    rng = np.random.default_rng(np.random.SeedSequence((eval_seed, 0x5A11DA7E)))
    questions = evaluation.generate_fitb_questions(val_outfits, catalog, ground_truth, rng)
    examples = (
        evaluation.generate_compat_examples(val_outfits, catalog, ground_truth, rng)
        if len(val_outfits) >= 2
        else []
    )
    if not questions and not examples:
        return None
    ids = evaluation.collect_item_ids(questions, examples)
    return questions, examples, ids


def train(
    catalog: Catalog,
    split: SplitSpec,
    encoder_cfg: EncoderConfig,
    cfg: TrainConfig,
    ground_truth: dict[str, int] | None = None,
    eval_seed: int = 1,
) -> TrainResult:
    """Run the full loop and return the best-validation-AUC checkpoint.

    A non-finite loss or gradient aborts training, keeping the last good
    parameters; the abort reason is recorded on the log.
    """
    need_unlabeled = cfg.loss.lambda_ss > 0 or cfg.loss.lambda_pseudo > 0
    need_views = cfg.loss.lambda_ss > 0
    labeled_outfits = sorted(split.labeled_outfit_ids)
    if not labeled_outfits:
        raise ConfigError("split has no labeled outfits")
    if need_unlabeled and not split.unlabeled_item_ids:
        raise ConfigError(
            "lambda_ss/lambda_pseudo are nonzero but the unlabeled pool is empty"
        )
    if cfg.loss.lambda_pseudo > 0 and len(split.unlabeled_item_ids) < 3:
        raise ConfigError("pseudo-triplet mining needs an unlabeled pool of >= 3 items")
    if len(labeled_outfits) < cfg.labeled_batch:
        logger.warning(
            "labeled outfit pool (%d) is smaller than the labeled batch (%d); "
            "triplets will repeat outfits",
            len(labeled_outfits),
            cfg.labeled_batch,
        )

    seed_root = np.random.SeedSequence(cfg.seed)
    s_labeled, s_unlabeled, s_transform = seed_root.spawn(3)
    rng_labeled = np.random.default_rng(s_labeled)
    rng_unlabeled = np.random.default_rng(s_unlabeled)
    rng_transform = np.random.default_rng(s_transform)

    val_assets = _validation_assets(catalog, split, ground_truth, eval_seed)
    if val_assets is None:
        logger.warning("no validation outfits; the last epoch will be selected as best")

    state = init_encoder(encoder_cfg)
    adam = AdamState.zeros(state.params.size)
    log = TrainLog()
    best_params = state.params.copy()
    best_auc = -np.inf
    best_epoch = -1

    iters = cfg.iterations_per_epoch(len(labeled_outfits))
    for epoch in range(cfg.epochs):
        for it in range(iters):
            batch = sample_labeled_batch(catalog, split, cfg.labeled_batch, rng_labeled)
            imgs_a = _stack_pixels([t.anchor for t in batch.triplets])
            imgs_p = _stack_pixels([t.positive for t in batch.triplets])
            imgs_n = _stack_pixels([t.negative for t in batch.triplets])
            blocks = [imgs_a, imgs_p, imgs_n]
            if need_unlabeled:
                unlabeled = sample_unlabeled_batch(
                    catalog, split, cfg.unlabeled_batch, rng_unlabeled
                )
                imgs_u = _stack_pixels(unlabeled.items)
                blocks.append(imgs_u)
                if need_views:
                    blocks.append(
                        transform_batch(imgs_u, cfg.shape_params, rng_transform, "shape")
                    )
                    blocks.append(
                        transform_batch(
                            imgs_u, cfg.appearance_params, rng_transform, "appearance"
                        )
                    )
            images = np.concatenate(blocks, axis=0)
            n_lab = len(batch.triplets)
            n_unl = len(blocks[3]) if need_unlabeled else 0

            stats = {}

            def loss_fn(emb):
                demb = np.zeros_like(emb)
                phi_a, phi_p, phi_n = (
                    emb[:n_lab],
                    emb[n_lab : 2 * n_lab],
                    emb[2 * n_lab : 3 * n_lab],
                )
                l_lab, ga, gp, gn = triplet_margin_loss_grad(
                    phi_a, phi_p, phi_n, cfg.loss.margin
                )
                demb[:n_lab] = ga
                demb[n_lab : 2 * n_lab] = gp
                demb[2 * n_lab : 3 * n_lab] = gn

                l_ss = 0.0
                l_pseudo = 0.0
                dropped = 0
                if need_unlabeled:
                    base = 3 * n_lab
                    phi_u = emb[base : base + n_unl]
                    if need_views:
                        phi_s = emb[base + n_unl : base + 2 * n_unl]
                        phi_t = emb[base + 2 * n_unl : base + 3 * n_unl]
                        l_ss, gu, gs, gt = triplet_margin_loss_grad(
                            phi_u, phi_s, phi_t, cfg.loss.margin
                        )
                        demb[base : base + n_unl] += cfg.loss.lambda_ss * gu
                        demb[base + n_unl : base + 2 * n_unl] = cfg.loss.lambda_ss * gs
                        demb[base + 2 * n_unl : base + 3 * n_unl] = cfg.loss.lambda_ss * gt
                    if cfg.loss.lambda_pseudo > 0:
                        triplets, dropped = mining.assemble_pseudo_triplets(
                            phi_a, phi_p, phi_n, phi_u
                        )
                        if triplets:
                            ia = np.array([t.idx_a for t in triplets])
                            ip = np.array([t.idx_p for t in triplets])
                            in_ = np.array([t.idx_n for t in triplets])
                            l_pseudo, ga_, gp_, gn_ = triplet_margin_loss_grad(
                                phi_u[ia], phi_u[ip], phi_u[in_], cfg.loss.margin
                            )
                            scale = cfg.loss.lambda_pseudo
                            np.add.at(demb, base + ia, scale * ga_)
                            np.add.at(demb, base + ip, scale * gp_)
                            np.add.at(demb, base + in_, scale * gn_)

                total = combined_objective(l_lab, l_ss, l_pseudo, cfg.loss)
                stats.update(
                    loss_labeled=l_lab,
                    loss_consistency=l_ss,
                    loss_pseudo=l_pseudo,
                    loss_total=total,
                    pseudo_dropped=dropped,
                )
                return total, demb

            try:
                loss, grad = loss_gradient(
                    state, images, loss_fn, chunk=cfg.backprop_chunk
                )
                new_params, adam = adam_step(
                    state.params,
                    grad,
                    adam,
                    cfg.learning_rate,
                    cfg.beta1,
                    cfg.beta2,
                    cfg.epsilon,
                )
            except NumericError as exc:
                log.aborted = f"epoch {epoch} iteration {it}: {exc}"
                logger.error("training aborted: %s", log.aborted)
                break
            state = replace(state, params=new_params)
            log.iterations.append(
                IterationRecord(epoch=epoch, iteration=it, **stats)
            )
        if log.aborted:
            break

        if val_assets is not None:
            questions, examples, ids = val_assets
            vectors = evaluation.compute_item_embeddings(
                catalog, ids, lambda batch: embed(state, batch)
            )
            metrics = evaluation.evaluate_embeddings(questions, examples, vectors)
            log.epochs.append(
                EpochRecord(
                    epoch=epoch,
                    val_compat_auc=metrics["compat_auc"],
                    val_fitb_accuracy=metrics["fitb_accuracy"],
                )
            )
            auc = metrics["compat_auc"]
            if np.isfinite(auc) and auc > best_auc:
                best_auc = auc
                best_epoch = epoch
                best_params = state.params.copy()

    if best_epoch < 0:
        best_epoch = cfg.epochs - 1
        best_params = state.params.copy()
    log.best_epoch = best_epoch
    return TrainResult(
        best_state=EncoderState(config=encoder_cfg, params=best_params),
        last_state=state,
        log=log,
    )
