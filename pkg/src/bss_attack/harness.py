"""Benchmark harness: unified number-scale sweeps, ablations and reporting.

Every cell of a sweep attacks the same clean samples with one method at one
number scale ``N``. Sample ``i`` of a cell draws all of its randomness from
the substream ``(seed, method, N, i)``, so results do not depend on the
thread count or on which other cells are run.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from .attack import AttackConfig, AttackState, evaluate_success, make_method, run_attack
from .bss import BssConfig, transform_set
from .config import ExperimentConfig
from .data import Dataset, load_dataset
from .errors import ArgumentError, ConfigError
from .imageio import write_png, write_raw
from .model import Classifier, TinyConvNet, load_checkpoint
from .rng import seed_sequence
from .segmentation import SegmentationConfig

log = logging.getLogger(__name__)

ABLATION_METHODS = ("none", "bss-1d-rp", "bss-1d", "bss-rp", "bss")
CSV_HEADER = ("method", "N", "model", "success_rate_pct", "evals", "wall_ms")


def scale_parameters(d_b: int, d_p: int, base_res: int, target_res: int, M: int = 2) -> tuple[int, int]:
    """Rescale border and spacing distances from ``base_res`` to ``target_res`` pixels."""
    if target_res < 8:
        raise ConfigError(f"target resolution must be >= 8, got {target_res}")
    if base_res <= 0:
        raise ConfigError(f"base resolution must be positive, got {base_res}")
    ratio = target_res / base_res
    db = max(1, int(np.floor(d_b * ratio + 0.5)))
    dp = max(1, int(np.floor(d_p * ratio + 0.5)))
    SegmentationConfig(M, db, dp).check_feasible(target_res)
    return db, dp


def bss_config_for(cfg: ExperimentConfig, resolution: int) -> BssConfig:
    p = cfg.bss
    db, dp = scale_parameters(p.d_b, p.d_p, p.base_resolution, resolution, p.M)
    return BssConfig(seg=SegmentationConfig(p.M, db, dp), r=p.r, target_length_mode=p.target_length_mode)


@dataclass
class Workspace:
    """Models, samples and scaled settings shared by all cells of a run."""

    cfg: ExperimentConfig
    surrogate_name: str
    models: dict[str, Classifier]
    images: np.ndarray
    labels: np.ndarray
    indices: np.ndarray
    bss: BssConfig
    warnings: list[str] = field(default_factory=list)

    @property
    def surrogate(self) -> Classifier:
        return self.models[self.surrogate_name]

    @property
    def target_names(self) -> list[str]:
        return [name for name in self.models if name != self.surrogate_name]


def _load_model(path: Path) -> TinyConvNet:
    if not Path(path).exists():
        raise ConfigError(f"checkpoint {path} not found; run the 'train' command first")
    return load_checkpoint(path)


def prepare(cfg: ExperimentConfig, dataset: Dataset | None = None,
            models: dict[str, Classifier] | None = None, surrogate: str | None = None) -> Workspace:
    """Load models and data, pick samples and validate the scaled BSS parameters.

    All configuration errors surface here, before any attack starts.
    """
    if models is None:
        models = {Path(cfg.surrogate).stem: _load_model(cfg.surrogate)}
        for path in cfg.targets:
            name = Path(path).stem
            if name in models:
                raise ConfigError(f"duplicate model name {name!r}")
            models[name] = _load_model(path)
        surrogate = Path(cfg.surrogate).stem
    elif surrogate is None or surrogate not in models:
        raise ArgumentError("surrogate must name one of the supplied models")
    data = dataset if dataset is not None else load_dataset(cfg.dataset)
    shape = tuple(models[surrogate].input_shape)
    if tuple(data.images.shape[1:]) != shape:
        raise ConfigError(f"dataset images {data.images.shape[1:]} do not match model input {shape}")
    bss = bss_config_for(cfg, min(shape[1:]))
    warnings = []
    if cfg.require_correct:
        pred = models[surrogate].predict(data.images)
        pool = np.flatnonzero(pred == data.labels)
    else:
        pool = np.arange(len(data))
    indices = pool[:cfg.samples]
    if len(indices) < cfg.samples:
        warnings.append(f"only {len(indices)} of {cfg.samples} requested samples available")
    for m in models.values():
        m.evaluations = 0
    return Workspace(cfg, surrogate, dict(models), data.images[indices], data.labels[indices],
                     indices, bss, warnings)


@dataclass
class CellResult:
    """One (method, N) cell: success rates per model plus cost and budget records."""

    method: str
    n: int
    rates: dict[str, float]
    evals: int
    expected_evals: int
    wall_ms: float
    max_linf: list[float]
    violations: int
    adversarial: np.ndarray | None = field(default=None, repr=False)

    def black_box_mean(self, targets) -> float:
        return float(np.mean([self.rates[t] for t in targets]))


@dataclass
class ResultTable:
    surrogate: str
    targets: list[str]
    cells: list[CellResult] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def rows(self):
        for cell in self.cells:
            for name in [self.surrogate, *self.targets]:
                yield cell, name

    def to_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for cell, name in self.rows():
            label = f"{name}*" if name == self.surrogate else name
            writer.writerow([cell.method, cell.n, label, f"{cell.rates[name]:.2f}", cell.evals,
                             f"{cell.wall_ms:.0f}" if timing else ""])
        return buf.getvalue()

    def cell(self, method: str, n: int | None = None) -> CellResult:
        for c in self.cells:
            if c.method == method and (n is None or c.n == n):
                return c
        raise KeyError((method, n))

    def budget_violations(self) -> int:
        return sum(c.violations for c in self.cells)

    def format(self) -> str:
        names = [self.surrogate, *self.targets]
        head = f"{'method':<10} {'N':>3} " + " ".join(f"{(n + '*') if n == self.surrogate else n:>10}" for n in names)
        lines = [head, "-" * len(head)]
        for c in self.cells:
            lines.append(f"{c.method:<10} {c.n:>3} " + " ".join(f"{c.rates[n]:>10.1f}" for n in names))
        return "\n".join(lines)


def run_cell(ws: Workspace, method_name: str, n: int, attack: AttackConfig | None = None) -> CellResult:
    """Attack every selected sample with one method at number scale ``n``."""
    cfg = ws.cfg
    attack = attack or cfg.attack
    method = make_method(method_name, n, ws.bss)
    surrogate = ws.surrogate
    eps = np.asarray(attack.epsilon, dtype=surrogate.dtype)

    def one(i: int):
        linf = []
        seq = seed_sequence(cfg.seed, method.name, method.n, int(ws.indices[i]))

        def record(state: AttackState):
            linf.append(float(np.abs(state.delta).max()))

        adv = run_attack(surrogate, ws.images[i], int(ws.labels[i]), method, attack, rng=seq, on_step=record)
        return adv, linf

    before = surrogate.evaluations
    start = time.perf_counter()
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, range(len(ws.images))))
    else:
        results = [one(i) for i in range(len(ws.images))]
    wall_ms = 1000.0 * (time.perf_counter() - start)
    evals = surrogate.evaluations - before
    advs = np.stack([r[0] for r in results]) if results else np.empty((0, *surrogate.input_shape), surrogate.dtype)
    per_step = np.array([r[1] for r in results], dtype=np.float64).reshape(len(results), attack.T)
    max_linf = per_step.max(axis=0).tolist() if len(results) else [0.0] * attack.T
    violations = int(np.sum(per_step > float(eps)))
    raw = evaluate_success(ws.models, advs, ws.labels)
    return CellResult(method.name, method.n, raw, evals, len(results) * attack.T * method.n,
                      wall_ms, max_linf, violations, advs)


def run_cells(ws: Workspace, plan: list[tuple[str, int]]) -> ResultTable:
    table = ResultTable(ws.surrogate_name, ws.target_names, warnings=list(ws.warnings))
    for method, n in plan:
        cell = run_cell(ws, method, n)
        log.info("%s N=%d: %s (%.0f ms)", method, n, cell.rates, cell.wall_ms)
        if cell.evals != cell.expected_evals:
            table.warnings.append(f"{method} N={n}: {cell.evals} evaluations, expected {cell.expected_evals}")
        table.cells.append(cell)
    return table


def sweep_plan(methods, number_scales) -> tuple[list[tuple[str, int]], list[str]]:
    """Cells for a unified number-scale sweep; ``none`` is run once at ``N = 1``."""
    plan, warnings = [], []
    if "none" in methods:
        plan.append(("none", 1))
        if any(n != 1 for n in number_scales):
            warnings.append("method none uses no transforms and is reported at N=1 only")
    for n in number_scales:
        plan.extend((m, n) for m in methods if m != "none")
    return plan, warnings


def run_sweep(ws: Workspace) -> ResultTable:
    plan, warnings = sweep_plan(ws.cfg.methods, ws.cfg.number_scales)
    ws.warnings.extend(warnings)
    return run_cells(ws, plan)


def run_ablation(ws: Workspace, n: int | None = None) -> ResultTable:
    n = ws.cfg.ablation_n if n is None else n
    return run_cells(ws, [(m, 1 if m == "none" else n) for m in ABLATION_METHODS])


def environment() -> dict:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "machine": platform.machine(),
    }


def write_results(table: ResultTable, ws: Workspace, out, timing: bool = False) -> tuple[Path, Path]:
    """Write ``results.csv`` (deterministic) and ``results.json`` (full record)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    csv_path.write_text(table.to_csv(timing))
    record = {
        "config": ws.cfg.echo(),
        "scaled_bss": {"d_b": ws.bss.seg.d_b, "d_p": ws.bss.seg.d_p, "M": ws.bss.seg.M, "r": ws.bss.r},
        "environment": environment(),
        "samples": {"count": int(len(ws.indices)), "dataset_indices": ws.indices.tolist()},
        "surrogate": table.surrogate,
        "targets": table.targets,
        "warnings": table.warnings,
        "budget": {"epsilon": ws.cfg.attack.epsilon, "violations": table.budget_violations()},
        "cells": [
            {"method": c.method, "N": c.n, "success_rate_pct": c.rates, "evals": c.evals,
             "expected_evals": c.expected_evals, "wall_ms": round(c.wall_ms, 1),
             "black_box_mean_pct": c.black_box_mean(table.targets) if table.targets else None,
             "max_linf_per_step": c.max_linf, "budget_violations": c.violations}
            for c in table.cells
        ],
    }
    json_path = out / "results.json"
    json_path.write_text(json.dumps(record, indent=2))
    return csv_path, json_path


def saliency_map(model: Classifier, image: np.ndarray, label: int) -> np.ndarray:
    """Input-gradient magnitude, max over channels, scaled so the peak is 1."""
    _, grad = model.loss_and_input_grad(image, label)
    sal = np.abs(grad).max(axis=0)
    peak = sal.max()
    return (sal / peak if peak > 0 else sal).astype(np.float32)


def saliency_dump(model: Classifier, image: np.ndarray, label: int, path) -> np.ndarray:
    sal = saliency_map(model, image, label)
    write_png(sal[None], path)
    return sal


def transform_preview(image: np.ndarray, bss: BssConfig, n: int, rng, out) -> list[Path]:
    """Write the clean image and ``n`` BSS transforms of it as PNGs."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [write_png(image, out / "original.png")]
    for k, img in enumerate(transform_set(image, replace(bss, N=n), rng)):
        paths.append(write_png(img, out / f"bss_{k:02d}.png"))
    return paths


def save_adversarials(advs: np.ndarray, clean: np.ndarray, out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (adv, x) in enumerate(zip(advs, clean)):
        write_png(adv, out / f"adv_{i:04d}.png")
        write_raw(adv - x, out / f"delta_{i:04d}.f32")


def train_models(cfg: ExperimentConfig, out, progress=None) -> dict:
    """Train every model in ``cfg.train`` and write checkpoints plus ``accuracy.json``."""
    from .model import ArchConfig, save_checkpoint, train

    t = cfg.train
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_dataset(t.dataset)
    if not 0 < t.train_count < len(data):
        raise ConfigError(f"train_count must leave a held-out split; dataset has {len(data)} images")
    tr, te = data.split(t.train_count)
    _, c, h, w = data.images.shape
    record = {"dataset": t.dataset, "train_count": t.train_count, "heldout_count": len(te), "models": {}}
    for spec in t.models:
        arch = ArchConfig(in_channels=c, height=h, width=w, c1=spec.c1, c2=spec.c2, num_classes=data.num_classes)
        model = TinyConvNet(arch, seed=spec.seed)
        start = time.perf_counter()
        rep = train(model, tr.images, tr.labels, t.epochs, t.lr, seed_sequence(spec.seed, "train"),
                    batch_size=t.batch_size, heldout=(te.images, te.labels), augment=t.augment,
                    schedule=t.schedule)
        path = save_checkpoint(model, out / f"{spec.name}.bin")
        record["models"][spec.name] = {
            "checkpoint": path.name, "seed": spec.seed, "c1": spec.c1, "c2": spec.c2,
            "train_accuracy": rep.train_accuracy, "heldout_accuracy": rep.heldout_accuracy,
            "final_loss": rep.losses[-1] if rep.losses else None, "checksum": model.checksum(),
            "seconds": round(time.perf_counter() - start, 1),
        }
        if progress:
            progress(spec.name, record["models"][spec.name])
    (out / "accuracy.json").write_text(json.dumps(record, indent=2))
    return record
