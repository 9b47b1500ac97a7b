"""Flat key=value run configuration.

One file describes a full run: dataset location, model shape, training
hyperparameters, solver, and split plan.  The format is a plain text
file of ``key = value`` lines with ``#`` comments; unknown keys are
rejected so typos fail loudly.  Every run writes its fully resolved
configuration next to its outputs, and that file alone reproduces the
run bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .data import DatasetSpec, SplitPlan
from .errors import ConfigError
from .model import GNN_KINDS, VARIANTS, ModelConfig
from .solver import METHODS, SolveSpec
from .training import TrainConfig


@dataclass
class RunConfig:
    """Union of every knob a run needs, in one flat namespace.

    ``channels`` feeds both the reader and the model's input width;
    ``num_nodes`` may stay 0 to be inferred from the data.
    """

    # dataset
    values_path: str = ""
    adjacency_path: str = ""
    channels: int = 1
    interval_minutes: float = 5.0
    name: str = ""
    # model
    num_nodes: int = 0
    input_len: int = 12
    horizon: int = 12
    out_channels: int = 1
    dim_h: int = 32
    dim_z: int = 32
    num_layers: int = 1
    embed_dim: int = 2
    sig_depth: int = 2
    subpath_len: int = 2
    variant: str = "full"
    gnn_kind: str = "adaptive"
    # training
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-3
    patience: int = 15
    seed: int = 0
    # solver
    method: str = "rk4"
    steps_per_window: int = 2
    # split plan and input irregularity
    split: str = "chronological"
    ratios: str = "6:2:2"
    folds: int = 4
    drop_rate: float = 0.0

    def dataset_spec(self) -> DatasetSpec:
        if not self.values_path:
            raise ConfigError("values_path is not set (pass --data or set it in the config)")
        return DatasetSpec(
            values_path=self.values_path,
            adjacency_path=self.adjacency_path or None,
            channels=self.channels,
            interval_minutes=self.interval_minutes,
            name=self.name,
        )

    def model_config(self, num_nodes: int) -> ModelConfig:
        if self.num_nodes and self.num_nodes != num_nodes:
            raise ConfigError(
                f"config says num_nodes = {self.num_nodes} but the data has {num_nodes} nodes"
            )
        return ModelConfig(
            num_nodes=num_nodes,
            in_channels=self.channels,
            input_len=self.input_len,
            horizon=self.horizon,
            out_channels=self.out_channels,
            dim_h=self.dim_h,
            dim_z=self.dim_z,
            num_layers=self.num_layers,
            embed_dim=self.embed_dim,
            sig_depth=self.sig_depth,
            subpath_len=self.subpath_len,
            variant=self.variant,
            gnn_kind=self.gnn_kind,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            weight_decay=self.weight_decay,
            patience=self.patience,
            seed=self.seed,
        )

    def solve_spec(self) -> SolveSpec:
        return SolveSpec(method=self.method, steps_per_window=self.steps_per_window)

    def split_plan(self) -> SplitPlan:
        parts = self.ratios.split(":")
        if len(parts) != 3:
            raise ConfigError(f"ratios must look like 6:2:2, got {self.ratios!r}")
        try:
            ratios = tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"ratios must be integers, got {self.ratios!r}") from exc
        return SplitPlan(kind=self.split, ratios=ratios, folds=self.folds)

    def validate(self) -> None:
        """Cheap cross-field checks that don't need the data."""
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.gnn_kind not in GNN_KINDS:
            raise ConfigError(f"gnn_kind must be one of {GNN_KINDS}, got {self.gnn_kind!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (0.0 <= self.drop_rate < 1.0):
            raise ConfigError(f"drop_rate must be in [0, 1), got {self.drop_rate}")
        self.train_config()
        self.solve_spec()
        self.split_plan()


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r} expects {kind}, got {raw!r}") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a typed override dict."""
    overrides: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in overrides:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        overrides[key] = _parse_value(key, raw)
    return overrides


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    """Read a config file and apply CLI overrides on top."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = parse_config_text(text, source=path)
    if overrides:
        for key, val in overrides.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = val
    config = RunConfig(**values)
    config.validate()
    return config


def render_config(config: RunConfig) -> str:
    """Canonical text form; floats keep 17 significant digits."""
    lines = ["# resolved run configuration"]
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if f.type == "float":
            value = "%.17g" % value
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def save_config(path: str, config: RunConfig) -> None:
    from .data import _atomic_write

    _atomic_write(path, render_config(config))
