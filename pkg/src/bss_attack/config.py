"""Experiment configuration read from INI-style ``key = value`` files."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .attack import AttackConfig, GradMode
from .bss import TargetLengthMode
from .errors import ConfigError


def parse_number(text: str) -> float:
    """Accept plain numbers and fractions such as ``16/255``."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None


def parse_list(text: str) -> list[str]:
    return [part.strip() for part in text.replace("\n", ",").split(",") if part.strip()]


@dataclass(frozen=True)
class ModelSpec:
    """One network to train: name, init/training seed and the two conv widths."""

    name: str
    seed: int
    c1: int
    c2: int

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        parts = text.split(":")
        if len(parts) != 4:
            raise ConfigError(f"model spec must be name:seed:c1:c2, got {text!r}")
        try:
            return cls(parts[0], int(parts[1]), int(parts[2]), int(parts[3]))
        except ValueError:
            raise ConfigError(f"non-integer field in model spec {text!r}") from None


@dataclass(frozen=True)
class TrainConfig:
    dataset: str = "synthetic:1:9000"
    train_count: int = 8000
    epochs: int = 15
    lr: float = 0.05
    batch_size: int = 64
    augment: bool = True
    schedule: str = "cosine"
    models: tuple[ModelSpec, ...] = (
        ModelSpec("surrogate", 1, 8, 16),
        ModelSpec("target_a", 2, 8, 16),
        ModelSpec("target_b", 3, 12, 24),
    )


@dataclass(frozen=True)
class BssParams:
    M: int = 2
    d_b: int = 35
    d_p: int = 40
    r: float = 1.0
    base_resolution: int = 224
    target_length_mode: TargetLengthMode = TargetLengthMode.TOTAL_SHARE


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 42
    out: Path = Path("results")
    threads: int = 1
    dataset: str = "synthetic:1000:400"
    samples: int = 200
    require_correct: bool = True
    surrogate: Path = Path("checkpoints/surrogate.bin")
    targets: tuple[Path, ...] = (Path("checkpoints/target_a.bin"), Path("checkpoints/target_b.bin"))
    attack: AttackConfig = field(default_factory=AttackConfig)
    bss: BssParams = field(default_factory=BssParams)
    methods: tuple[str, ...] = ("none", "bss")
    number_scales: tuple[int, ...] = (10,)
    ablation_n: int = 10
    train: TrainConfig = field(default_factory=TrainConfig)
    source: Path | None = None

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        attack_kw = {k: kw.pop(k) for k in ("grad_mode",) if k in kw}
        bss_kw = {k: kw.pop(k) for k in ("target_length_mode",) if k in kw}
        cfg = replace(self, **kw)
        if attack_kw:
            cfg = replace(cfg, attack=replace(cfg.attack, grad_mode=GradMode.parse(attack_kw["grad_mode"])))
        if bss_kw:
            mode = TargetLengthMode.parse(bss_kw["target_length_mode"])
            cfg = replace(cfg, bss=replace(cfg.bss, target_length_mode=mode))
        if cfg.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {cfg.threads}")
        return cfg

    def echo(self) -> dict:
        """JSON-friendly view of every setting."""
        a, b, t = self.attack, self.bss, self.train
        return {
            "seed": self.seed, "threads": self.threads, "dataset": self.dataset, "samples": self.samples,
            "require_correct": self.require_correct, "surrogate": str(self.surrogate),
            "targets": [str(p) for p in self.targets],
            "attack": {"epsilon": a.epsilon, "T": a.T, "alpha": a.step_size, "mu": a.mu,
                       "grad_mode": a.grad_mode.value},
            "bss": {"M": b.M, "d_b": b.d_b, "d_p": b.d_p, "r": b.r, "base_resolution": b.base_resolution,
                    "target_length_mode": b.target_length_mode.value},
            "methods": list(self.methods), "number_scales": list(self.number_scales),
            "ablation_n": self.ablation_n,
            "train": {"dataset": t.dataset, "train_count": t.train_count, "epochs": t.epochs, "lr": t.lr,
                      "batch_size": t.batch_size, "augment": t.augment, "schedule": t.schedule,
                      "models": [f"{m.name}:{m.seed}:{m.c1}:{m.c2}" for m in t.models]},
            "source": str(self.source) if self.source else None,
        }


def _get(section, key, conv, default):
    if section is None or key not in section or section[key].strip() == "":
        return default
    try:
        return conv(section[key])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from None


def _bool(text: str) -> bool:
    key = text.strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read(path)
    base = path.parent
    sec = {name: parser[name] if parser.has_section(name) else None
           for name in ("experiment", "data", "models", "attack", "bss", "sweep", "ablation", "train")}
    known = set(sec)
    unknown = [s for s in parser.sections() if s not in known]
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")

    def rel(p: str) -> Path:
        p = Path(p.strip())
        return p if p.is_absolute() else (base / p)

    d = ExperimentConfig()
    epsilon = _get(sec["attack"], "epsilon", parse_number, d.attack.epsilon)
    attack = AttackConfig(
        epsilon=epsilon,
        T=_get(sec["attack"], "iterations", int, d.attack.T),
        alpha=_get(sec["attack"], "alpha", parse_number, None),
        mu=_get(sec["attack"], "mu", parse_number, d.attack.mu),
        grad_mode=_get(sec["attack"], "grad_mode", GradMode.parse, d.attack.grad_mode),
    )
    bss = BssParams(
        M=_get(sec["bss"], "M", int, d.bss.M),
        d_b=_get(sec["bss"], "d_b", int, d.bss.d_b),
        d_p=_get(sec["bss"], "d_p", int, d.bss.d_p),
        r=_get(sec["bss"], "r", parse_number, d.bss.r),
        base_resolution=_get(sec["bss"], "base_resolution", int, d.bss.base_resolution),
        target_length_mode=_get(sec["bss"], "target_length_mode", TargetLengthMode.parse,
                                d.bss.target_length_mode),
    )
    t = d.train
    train = TrainConfig(
        dataset=_get(sec["train"], "dataset", str.strip, t.dataset),
        train_count=_get(sec["train"], "train_count", int, t.train_count),
        epochs=_get(sec["train"], "epochs", int, t.epochs),
        lr=_get(sec["train"], "lr", parse_number, t.lr),
        batch_size=_get(sec["train"], "batch_size", int, t.batch_size),
        augment=_get(sec["train"], "augment", _bool, t.augment),
        schedule=_get(sec["train"], "schedule", str.strip, t.schedule),
        models=_get(sec["train"], "models", lambda s: tuple(ModelSpec.parse(m) for m in parse_list(s)), t.models),
    )
    cfg = ExperimentConfig(
        seed=_get(sec["experiment"], "seed", int, d.seed),
        out=_get(sec["experiment"], "out", rel, rel(str(d.out))),
        threads=_get(sec["experiment"], "threads", int, d.threads),
        dataset=_get(sec["data"], "dataset", str.strip, d.dataset),
        samples=_get(sec["data"], "samples", int, d.samples),
        require_correct=_get(sec["data"], "require_correct", _bool, d.require_correct),
        surrogate=_get(sec["models"], "surrogate", rel, rel(str(d.surrogate))),
        targets=_get(sec["models"], "targets", lambda s: tuple(rel(p) for p in parse_list(s)),
                     tuple(rel(str(p)) for p in d.targets)),
        attack=attack,
        bss=bss,
        methods=_get(sec["sweep"], "methods", lambda s: tuple(m.lower() for m in parse_list(s)), d.methods),
        number_scales=_get(sec["sweep"], "number_scales", lambda s: tuple(int(n) for n in parse_list(s)),
                           d.number_scales),
        ablation_n=_get(sec["ablation"], "n", int, d.ablation_n),
        train=train,
        source=path,
    )
    if cfg.threads < 1 or cfg.samples < 0 or any(n < 1 for n in cfg.number_scales):
        raise ConfigError("threads and every number scale must be >= 1; samples must be >= 0")
    return cfg
