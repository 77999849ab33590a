"""Six-fold cross-validation: fold planning, training loop, reports.

Clips are split at clip level (never frames) so near-duplicate frames
cannot leak across folds; every random stream derives from the root
seed plus fold index, so rerunning a seed reproduces every report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from aufuse.audio import LogMelSpectrogram
from aufuse.classifier import au_loss, predict
from aufuse.config import RunConfig
from aufuse.data import ClipCache, ClipRecord
from aufuse.metrics import f1_per_au, macro_f1
from aufuse.model import AuDetector, build_model
from aufuse.optim import Adam
from aufuse.tensor import no_grad
from aufuse.views import matched_local_views

SPLIT_NOTE = "clip-level split"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class FoldPlan:
    folds: list  # k disjoint lists of clip ids
    seed: int


@dataclass
class FoldReport:
    fold_index: int
    per_au_f1: np.ndarray
    macro_f1: float
    epochs_run: int
    wall_time_s: float
    failed: bool = False
    note: str = SPLIT_NOTE


def split_folds(clip_ids: list[str], k: int = 6, seed: int = 42) -> FoldPlan:
    """Seeded shuffle, round-robin assignment; sizes differ by at most one."""
    if len(clip_ids) < k:
        raise ValueError(f"need at least {k} clips to build {k} folds, got {len(clip_ids)}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    order = list(clip_ids)
    rng.shuffle(order)
    return FoldPlan(folds=[order[i::k] for i in range(k)], seed=seed)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def predict_clip(model: AuDetector, clip) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode global-view predictions; returns (decisions, aligned truth)."""
    with no_grad():
        logits = model.forward(clip.logmel, clip.frames, clip.record.fps, training=False)
    decisions = predict(logits).decisions
    return decisions, clip.labels[: decisions.shape[0]]


def evaluate(model: AuDetector, clip_ids, cache: ClipCache):
    """Per-AU F1 pooled over all frames of the given clips."""
    preds, truths = [], []
    for clip_id in clip_ids:
        dec, truth = predict_clip(model, cache.get(clip_id))
        preds.append(dec)
        truths.append(truth)
    per_au = f1_per_au(np.concatenate(preds), np.concatenate(truths))
    return per_au, macro_f1(per_au)


def train_fold(
    records: list[ClipRecord],
    plan: FoldPlan,
    fold_index: int,
    cfg: RunConfig,
    cache: ClipCache | None = None,
    out_dir=None,
    log=None,
):
    """Train on five folds, validate on the held-out one.

    Keeps the best-validation-macro-F1 parameter snapshot and reports
    that epoch's per-AU scores.
    """
    if not 0 <= fold_index < len(plan.folds):
        raise ValueError(f"fold index {fold_index} out of range 0..{len(plan.folds) - 1}")
    started = time.perf_counter()
    cache = cache or ClipCache(records, resolution=cfg.image_size)
    val_ids = list(plan.folds[fold_index])
    val_set = set(val_ids)
    train_ids = [r.id for r in records if r.id not in val_set]
    leaked = [cid for cid in train_ids if cid in val_set]
    if leaked:
        raise AssertionError(f"fold partition violated, leaked ids: {leaked}")

    model = build_model(cfg, seed_key=("model", fold_index))
    optimizer = Adam(model.parameters(), lr=cfg.learning_rate)

    best_state = model.state_arrays()
    best_per_au, best_macro = evaluate(model, val_ids, cache)
    best_epoch = 0
    epochs_run = 0
    for epoch in range(1, cfg.epochs + 1):
        epochs_run = epoch
        order_rng = _stream(cfg.seed, fold_index, epoch, 1)
        choice_rng = _stream(cfg.seed, fold_index, epoch, 2)
        epoch_ids = list(train_ids)
        order_rng.shuffle(epoch_ids)
        losses = []
        for step, clip_id in enumerate(epoch_ids):
            clip = cache.get(clip_id)
            use_local = choice_rng.random() < cfg.local_view_prob
            seg = int(round(clip.record.fps))
            if use_local and clip.logmel.shape[0] >= 100 and clip.frames.shape[0] >= seg:
                view_seed = np.random.SeedSequence([cfg.seed, fold_index, epoch, step, 3])
                audio_view, video_view, v0 = matched_local_views(
                    LogMelSpectrogram(values=clip.logmel),
                    clip.frames,
                    clip.record.fps,
                    view_seed,
                )
                logmel_in, frames_in = audio_view.matrix, video_view.frames
                labels = clip.labels[v0 : v0 + frames_in.shape[0]]
            else:
                logmel_in, frames_in, labels = clip.logmel, clip.frames, clip.labels
            dropout_rng = _stream(cfg.seed, fold_index, epoch, step, 4)
            logits = model.forward(
                logmel_in, frames_in, clip.record.fps, training=True, rng=dropout_rng
            )
            loss = au_loss(logits, labels[: logits.shape[0]])
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(
                    f"fold {fold_index}: non-finite loss {loss.item()} at epoch {epoch}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        per_au, macro = evaluate(model, val_ids, cache)
        if log:
            log(
                f"fold {fold_index} epoch {epoch:2d}: "
                f"train loss {np.mean(losses):.4f}  val macro F1 {macro:.4f}"
            )
        if macro > best_macro:
            best_macro, best_per_au, best_epoch = macro, per_au, epoch
            best_state = model.state_arrays()
        elif epoch - best_epoch >= cfg.patience:
            break

    model.load_state_arrays(best_state)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        model.save(Path(out_dir) / f"fold_{fold_index}.ckpt")
    report = FoldReport(
        fold_index=fold_index,
        per_au_f1=best_per_au,
        macro_f1=best_macro,
        epochs_run=epochs_run,
        wall_time_s=time.perf_counter() - started,
    )
    return model, report


def cross_validate(records: list[ClipRecord], cfg: RunConfig, out_dir=None, log=None):
    """Run all six folds; a diverged fold is marked failed, the rest continue."""
    plan = split_folds([r.id for r in records], k=6, seed=cfg.seed)
    cache = ClipCache(records, resolution=cfg.image_size)
    reports = []
    for fold_index in range(6):
        try:
            _, report = train_fold(
                records, plan, fold_index, cfg, cache=cache, out_dir=out_dir, log=log
            )
        except TrainingDiverged as exc:
            if log:
                log(str(exc))
            report = FoldReport(
                fold_index=fold_index,
                per_au_f1=np.zeros(12),
                macro_f1=float("nan"),
                epochs_run=0,
                wall_time_s=0.0,
                failed=True,
            )
        reports.append(report)
        if out_dir is not None:
            path = Path(out_dir) / f"fold_{fold_index}_report.txt"
            path.write_text(render_fold_report(report, cfg), encoding="utf-8")
    summary = render_summary(reports, cfg)
    if out_dir is not None:
        (Path(out_dir) / "summary.txt").write_text(summary, encoding="utf-8")
    return reports, summary


# -- report rendering (wall time intentionally excluded: reports from two
#    identically seeded runs must compare equal) ----------------------------


def render_fold_report(report: FoldReport, cfg: RunConfig) -> str:
    lines = [f"fold-{report.fold_index} report ({report.note}, seed {cfg.seed})"]
    if report.failed:
        lines.append("status: FAILED (training diverged)")
        return "\n".join(lines) + "\n"
    lines.append(f"epochs run: {report.epochs_run}")
    lines.append("per-AU F1:")
    for j, score in enumerate(report.per_au_f1, start=1):
        lines.append(f"  au{j:<3d} {score:.4f}")
    lines.append(f"macro F1: {report.macro_f1:.4f}")
    return "\n".join(lines) + "\n"


def render_summary(reports: list[FoldReport], cfg: RunConfig) -> str:
    ok = [r for r in reports if not r.failed]
    best = max(ok, key=lambda r: r.macro_f1) if ok else None
    lines = [
        f"six-fold cross-validation ({SPLIT_NOTE}, seed {cfg.seed})",
        "",
        f"{'fold':<8}F1 (%)",
    ]
    for r in reports:
        if r.failed:
            lines.append(f"fold-{r.fold_index:<3d} failed")
        else:
            marker = "  *best*" if best is not None and r.fold_index == best.fold_index else ""
            lines.append(f"fold-{r.fold_index:<3d} {100 * r.macro_f1:6.2f}{marker}")
    if best is not None:
        lines.append("")
        lines.append(f"best fold: fold-{best.fold_index} ({100 * best.macro_f1:.2f}%)")
    return "\n".join(lines) + "\n"
