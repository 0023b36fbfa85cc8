"""Two-stage pre-training: appearance warm-up, then quadruple instance discrimination.

Epoch ``e`` uses the warm-up task while ``e < p * E`` (compared exactly, with
``p`` read as a decimal fraction), and the quadruple task afterwards.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .encoder import OptimConfig, backward, embed, init_params, step
from .errors import ConfigError, InputError, NumericError, UsageError
from .losses import LossConfig, appearance_loss, instance_loss, moquad_loss
from .quadruple import QuadConfig, build_appearance_batch, build_batch

log = logging.getLogger(__name__)

STAGE_APPEARANCE = "appearance"
STAGE_MOQUAD = "moquad"


@dataclass(frozen=True)
class ScheduleConfig:
    total_epochs: int = 60
    warmup_ratio: float = 0.2
    batch_size: int = 16
    steps_per_epoch: int | None = None  # None: as many full batches as the training set holds
    loss: LossConfig = field(default_factory=LossConfig)
    quad: QuadConfig = field(default_factory=QuadConfig)
    diag_split: str = "train"

    def validate(self):
        if self.total_epochs < 1:
            raise ConfigError("total_epochs must be >= 1")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ConfigError(f"warmup_ratio must be in [0, 1), got {self.warmup_ratio}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.diag_split not in ("train", "test"):
            raise ConfigError(f"diag_split must be 'train' or 'test', got {self.diag_split!r}")
        self.loss.validate()
        self.quad.rad.validate()
        return self


@dataclass
class RankDiagnostics:
    mean_rank_ad_pos: float
    mean_rank_intra_negs: float | None
    epoch: int | None = None


def stage_for_epoch(epoch, total_epochs, warmup_ratio):
    if not 0 <= epoch < total_epochs:
        raise IndexError(f"epoch {epoch} outside [0, {total_epochs})")
    boundary = Fraction(repr(float(warmup_ratio))) * total_epochs
    return STAGE_APPEARANCE if epoch < boundary else STAGE_MOQUAD


def num_warmup_epochs(total_epochs, warmup_ratio):
    return sum(stage_for_epoch(e, total_epochs, warmup_ratio) == STAGE_APPEARANCE
               for e in range(total_epochs))


def compute_rank_diagnostics(report, num_slots):
    """Mean rank of the positive and of the intra negatives among all candidates per anchor.

    Rank 1 is the most similar candidate; equal similarities are ordered by
    flat candidate index (video-major, slot-minor).
    """
    sims = np.asarray(report.similarities)
    B = sims.shape[0]
    if sims.ndim != 2 or sims.shape[1] != B * num_slots:
        raise UsageError(f"similarities of shape {sims.shape} do not match {num_slots} slots")
    pos_ranks, intra_ranks = [], []
    for i in range(B):
        cand = np.delete(np.arange(B * num_slots), i * num_slots)
        order = cand[np.argsort(-sims[i, cand], kind="stable")]
        rank = np.empty(B * num_slots, dtype=int)
        rank[order] = np.arange(1, order.size + 1)
        pos_ranks.append(rank[i * num_slots + 1])
        intra_ranks.extend(rank[i * num_slots + 2:(i + 1) * num_slots])
    return RankDiagnostics(
        mean_rank_ad_pos=float(np.mean(pos_ranks)),
        mean_rank_intra_negs=float(np.mean(intra_ranks)) if intra_ranks else None,
    )


def quadruple_step_loss(z, schedule):
    """Loss for a ``(B, M, d)`` embedding batch from the quadruple stage (any ablation width)."""
    cfg = schedule.loss
    if z.shape[1] == 4:
        return moquad_loss(z, cfg)
    if cfg.mining_enabled:
        return instance_loss(z, cfg.tau, alpha=cfg.alpha, beta=cfg.beta, mine=True)
    return instance_loss(z, cfg.tau)


def _forward_batch(params, enc_cfg, videos, donors, schedule, stage, rng):
    if stage == STAGE_APPEARANCE:
        clips = build_appearance_batch(videos, schedule.quad, rng)
        slots = 2
    else:
        batch = build_batch(videos, donors, schedule.quad, rng)
        clips = batch.clips()
        slots = batch.num_slots
    z, cache = embed(params, clips, enc_cfg)
    zb = z.reshape(len(videos), slots, -1)
    if stage == STAGE_APPEARANCE:
        report = appearance_loss(zb, schedule.loss.tau)
    else:
        report = quadruple_step_loss(zb, schedule)
    return report, cache, slots


def steps_per_epoch(schedule, num_train):
    full = num_train // schedule.batch_size
    if full < 1:
        raise InputError(f"batch size {schedule.batch_size} exceeds {num_train} training videos")
    return full if schedule.steps_per_epoch is None else min(schedule.steps_per_epoch, full)


def run_pretraining(train_videos, enc_cfg, schedule, optim, seed, test_videos=None,
                    log_path=None, dump_dir=None):
    """Train from scratch; returns ``(params, metrics)`` with one metrics dict per epoch.

    ``optim.total_steps`` is overwritten with the actual schedule length.
    Runs are deterministic for a fixed seed.
    """
    schedule.validate()
    if not train_videos:
        raise InputError("no training videos")
    spe = steps_per_epoch(schedule, len(train_videos))
    total = schedule.total_epochs * spe
    optim = OptimConfig(base_lr=optim.base_lr, momentum=optim.momentum, total_steps=total,
                        weight_decay=optim.weight_decay).validate()
    params = init_params(enc_cfg)
    rng = np.random.default_rng([seed, 11])
    diag_videos = None
    if schedule.diag_split == "test":
        if not test_videos or len(test_videos) < schedule.batch_size:
            raise InputError("diag_split='test' needs at least one batch of test videos")
        diag_videos = list(test_videos[:schedule.batch_size])

    metrics = []
    t = 0
    out = open(log_path, "w") if log_path else None
    try:
        for epoch in range(schedule.total_epochs):
            stage = stage_for_epoch(epoch, schedule.total_epochs, schedule.warmup_ratio)
            order = rng.permutation(len(train_videos))
            losses, pos_ranks, intra_ranks = [], [], []
            lr = None
            for s in range(spe):
                videos = [train_videos[k] for k in order[s * schedule.batch_size:
                                                         (s + 1) * schedule.batch_size]]
                try:
                    report, cache, slots = _forward_batch(params, enc_cfg, videos, train_videos,
                                                          schedule, stage, rng)
                except NumericError:
                    _dump(dump_dir, epoch, s, stage, params)
                    raise
                gw, gb = backward(params, cache, report.grads.reshape(-1, report.grads.shape[-1]))
                lr = step(params, (gw, gb), optim, t)
                t += 1
                losses.append(report.loss / len(videos))
                if stage == STAGE_MOQUAD and diag_videos is None:
                    diag = compute_rank_diagnostics(report, slots)
                    pos_ranks.append(diag.mean_rank_ad_pos)
                    if diag.mean_rank_intra_negs is not None:
                        intra_ranks.append(diag.mean_rank_intra_negs)
            if stage == STAGE_MOQUAD and diag_videos is not None:
                drng = np.random.default_rng([seed, 13, epoch])
                report, _, slots = _forward_batch(params, enc_cfg, diag_videos, train_videos,
                                                  schedule, stage, drng)
                diag = compute_rank_diagnostics(report, slots)
                pos_ranks.append(diag.mean_rank_ad_pos)
                if diag.mean_rank_intra_negs is not None:
                    intra_ranks.append(diag.mean_rank_intra_negs)
            row = {
                "epoch": epoch,
                "stage": stage,
                "mean_loss": float(np.mean(losses)),
                "mean_rank_ad_pos": float(np.mean(pos_ranks)) if pos_ranks else None,
                "mean_rank_intra_negs": float(np.mean(intra_ranks)) if intra_ranks else None,
                "lr": lr,
            }
            metrics.append(row)
            log.info("epoch %d [%s] loss %.4f", epoch, stage, row["mean_loss"])
            if out:
                out.write(json.dumps(row) + "\n")
                out.flush()
    finally:
        if out:
            out.close()
    return params, metrics


def _dump(dump_dir, epoch, step_in_epoch, stage, params):
    if dump_dir is None:
        return
    info = {
        "epoch": epoch,
        "step": step_in_epoch,
        "stage": stage,
        "param_finite": [bool(np.all(np.isfinite(a))) for a in params.arrays()],
        "param_max_abs": [float(np.max(np.abs(a))) for a in params.arrays()],
    }
    Path(dump_dir).mkdir(parents=True, exist_ok=True)
    Path(dump_dir, "nonfinite_dump.json").write_text(json.dumps(info, indent=2))


def fixed_batch_loss(params, enc_cfg, train_videos, schedule, seed, num_batches=4):
    """Mean per-anchor quadruple-stage loss on batches fixed by ``seed`` (no update)."""
    rng = np.random.default_rng([seed, 17])
    total = []
    for _ in range(num_batches):
        idx = rng.choice(len(train_videos), size=schedule.batch_size, replace=False)
        videos = [train_videos[k] for k in idx]
        report, _, _ = _forward_batch(params, enc_cfg, videos, train_videos, schedule,
                                      STAGE_MOQUAD, rng)
        total.append(report.loss / len(videos))
    return float(np.mean(total))


def metrics_to_jsonl(metrics):
    return "".join(json.dumps(row) + "\n" for row in metrics)


def read_metrics(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]

