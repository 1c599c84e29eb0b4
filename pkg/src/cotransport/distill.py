"""Intent estimation and teacher-student distillation.

The student actor never sees the true wrench; it acts on the estimator's
output. The estimator is trained supervised on the same on-policy batches
(targets: the base-frame wrench actually applied), and no policy gradient
flows into it - the actor treats the estimate as a fixed input.
"""
from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import nets, rl
from .config import RunConfig


def estimate_intent(estimator: nets.Mlp, o_trans: np.ndarray) -> np.ndarray:
    """Estimated (Fx, Fy, torque) in the base frame, physical units."""
    return rl.estimate_wrench(estimator, o_trans)


def estimator_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over samples of the squared error summed over the 3 channels."""
    diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float((diff ** 2).sum(axis=-1).mean())


def kl_regularizer(student_mean, student_log_std, teacher_mean, teacher_log_std,
                   direction: str = "student_teacher") -> float:
    """Mean divergence between the two action distributions."""
    if direction == "student_teacher":
        kl = nets.gaussian_kl(student_mean, student_log_std,
                              teacher_mean, teacher_log_std)
    elif direction == "teacher_student":
        kl = nets.gaussian_kl(teacher_mean, teacher_log_std,
                              student_mean, student_log_std)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return float(np.mean(kl))


def kl_weight_at(cfg: RunConfig, iteration: int) -> float:
    """Linear anneal from kl_weight_start to kl_weight_end over training."""
    total = max(cfg.ppo.iterations - 1, 1)
    frac = (iteration - 1) / total
    return cfg.distill.kl_weight_start + frac * (
        cfg.distill.kl_weight_end - cfg.distill.kl_weight_start)


def train_student(cfg: RunConfig, out_dir: str | Path,
                  teacher_dir: str | Path | None = None,
                  progress: bool = False) -> Path:
    """KL-distilled student with the intent estimator in the loop."""
    return rl.train_policy(cfg, "student", out_dir, teacher_dir=teacher_dir,
                           progress=progress)


def train_pure_rl(cfg: RunConfig, out_dir: str | Path,
                  progress: bool = False) -> Path:
    """Degenerate student: no KL term, estimator off (zero intent input)."""
    cfg = replace(cfg, distill=replace(cfg.distill, kl_weight_start=0.0,
                                       kl_weight_end=0.0,
                                       estimator_enabled=False,
                                       teacher_checkpoint=""))
    return rl.train_policy(cfg, "student", out_dir, progress=progress)


def _teacher_for_history(base_cfg: RunConfig, out_root: Path,
                         teacher_dir: str | Path, H: int,
                         progress: bool = False) -> Path:
    """A teacher checkpoint whose proprioception window matches H.

    The provided teacher is reused when its window already matches;
    otherwise one is trained (and cached) per history length, since the
    KL term needs identical actor input widths.
    """
    meta = rl.load_bundle(teacher_dir).meta
    if meta.get("history_len") == H:
        return Path(teacher_dir)
    cached = out_root / f"teacher_h{H}" / "final"
    if not (cached / "bundle.json").exists():
        cfg = replace(base_cfg, world=replace(base_cfg.world, history_len=H))
        rl.train_policy(cfg, "teacher", out_root / f"teacher_h{H}",
                        progress=progress)
    return cached


def history_ablation(base_cfg: RunConfig, out_root: str | Path,
                     teacher_dir: str | Path,
                     history_lens=(1, 4, 8), seeds=(0, 1, 2),
                     eval_episodes: int = 32, eval_mass: float = 2.0,
                     progress: bool = False) -> list[dict]:
    """Train a student per (H, seed) and tabulate evaluation metrics.

    Writes <out_root>/ablation.csv with one row per run and returns the rows.
    Existing run directories are reused, so an interrupted sweep resumes.
    """
    from . import metrics as mt
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    for H in history_lens:
        t_dir = _teacher_for_history(base_cfg, out_root, teacher_dir, H,
                                     progress=progress)
        for seed in seeds:
            cfg = replace(base_cfg, seed=seed,
                          world=replace(base_cfg.world, history_len=H))
            run_dir = out_root / f"h{H}_seed{seed}"
            final = run_dir / "final"
            if not (final / "bundle.json").exists():
                final = train_student(cfg, run_dir, teacher_dir=t_dir,
                                      progress=progress)
            ev = mt.evaluate_bundle(final, episodes=eval_episodes,
                                    fixed_mass=eval_mass, seed=123)
            rows.append({"history_len": H, "seed": seed,
                         **{k: ev[k] for k in sorted(ev)}})
    path = out_root / "ablation.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return rows
