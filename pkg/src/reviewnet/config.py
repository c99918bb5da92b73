"""Run configuration: one flat set of tunables with defaults, loaded from TOML or JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .dga import DgaConfig, resolve_ablation
from .embed import WalkSettings
from .nfs import SvmSettings
from .pooling import ImportanceWeights


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 72
    # ingestion and windows
    min_reviews: int = 3
    window_count: int = 10
    window_length: float | None = None  # seconds; overrides window_count when set
    # structure metrics
    damping: float = 0.85
    alpha_eq8: float = 0.5
    ego_hops: int = 2
    ego_budget: int = 256
    ms_levels: int = 3
    n_jobs: int = 1
    # NFS
    dv_source: str = "diversity"
    pca_kept: int = 2
    svm_C: float = 1.0
    svm_epochs: int = 500
    svm_lr: float = 0.01
    svm_balanced: bool = True
    nfs_val_fraction: float = 0.2
    # pooling
    alpha1: float = 0.5
    alpha2: float = 0.3
    alpha3: float = 0.2
    beta1: float = 0.5
    beta2: float = 0.5
    theta: float | None = None
    theta_quantile: float = 0.2
    theta_by_type: bool = False
    delta: float = 0.3
    max_sample: int = 1000
    cluster_ratio: float = 8.0
    # global embeddings
    walk_len: int = 10
    walks_per_node: int = 5
    walk_window: int = 2
    embed_dim: int = 16
    negatives: int = 5
    walk_epochs: int = 5
    walk_lr: float = 0.025
    # attention network
    layers: int = 2
    hidden: int = 8
    heads: int = 4
    lr: float = 0.005
    weight_decay: float = 5e-4
    dropout: float = 0.3
    patience: int = 200
    max_epochs: int = 1000
    leaky_slope: float = 0.2
    gamma: float = 0.5
    lam: float = 0.2
    time_dim: int = 8
    time_form: str = "encoded"
    ablation: str = "full"
    # evaluation
    min_spam: float = 0.6
    train_fraction: float = 0.5
    val_fraction: float = 0.2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            self.importance()
            self.dga()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0 < self.damping < 1:
            raise ConfigError("damping must lie in (0, 1)")
        if not 0 <= self.alpha_eq8 <= 1 or not 0 <= self.min_spam <= 1:
            raise ConfigError("alpha_eq8 and min_spam must lie in [0, 1]")
        if self.train_fraction <= 0 or self.val_fraction <= 0 or self.train_fraction + self.val_fraction >= 1:
            raise ConfigError("train_fraction and val_fraction must be positive and leave a test share")
        if self.window_count < 1 or self.min_reviews < 1 or self.max_sample < 1 or self.cluster_ratio < 1:
            raise ConfigError("window_count, min_reviews, max_sample and cluster_ratio must be >= 1")
        if self.dv_source not in ("diversity", "degree_centrality"):
            raise ConfigError("dv_source must be 'diversity' or 'degree_centrality'")

    # --------------------------------------------------------- module views
    def importance(self) -> ImportanceWeights:
        return ImportanceWeights(self.alpha1, self.alpha2, self.alpha3, self.beta1, self.beta2,
                                 self.theta, self.theta_quantile, self.delta, self.theta_by_type)

    def svm(self) -> SvmSettings:
        return SvmSettings(self.svm_C, self.svm_epochs, self.svm_lr, True, self.svm_balanced)

    def walks(self) -> WalkSettings:
        return WalkSettings(self.walk_len, self.walks_per_node, self.walk_window, self.embed_dim,
                            self.negatives, self.walk_epochs, self.walk_lr)

    def dga(self, ablation: str | None = None, seed: int | None = None) -> DgaConfig:
        return DgaConfig(
            layers=self.layers, hidden=self.hidden, heads=self.heads, lr=self.lr,
            weight_decay=self.weight_decay, dropout=self.dropout, patience=self.patience,
            max_epochs=self.max_epochs, seed=self.seed if seed is None else seed,
            leaky_slope=self.leaky_slope, gamma=self.gamma, lam=self.lam, time_dim=self.time_dim,
            time_form=self.time_form, ablation=resolve_ablation(ablation or self.ablation),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **overrides) -> "RunConfig":
        return from_mapping({**self.to_dict(), **overrides})


def from_mapping(data: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(**data)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read a .toml or .json file (None: defaults), then apply ``overrides`` (flags win)."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib

            data = tomllib.loads(text)
        else:
            data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a table/object")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_mapping(data)
