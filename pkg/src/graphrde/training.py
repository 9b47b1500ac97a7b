"""Training, evaluation and gradient checking for the forecasting model.

The pipeline separates a one-off preprocessing step (spline fitting and
windowed log-signature extraction per forecasting window, on normalized
inputs) from the optimization loop, which only replays taped tensor ops.
Losses are computed in normalized space; reported metrics are always
de-normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import Normalizer, WindowSet
from .errors import ConfigError, ContractError, NumericError, TrainingAbort
from .logsig import LogSigSequence, LyndonBasis, window_logsig
from .model import HiddenState, ModelConfig, ParamStore, init_state, readout
from .paths import RawSeries, fit_spline
from .solver import SolveSpec, integrate
from .tensor import Tensor

MAPE_EPS = 1e-3  # |target| below this is excluded from MAPE


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-3
    patience: int = 15
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError("epochs, batch_size and patience must be >= 1")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be > 0 and weight_decay >= 0")


@dataclass
class MetricReport:
    """De-normalized forecast quality; MAPE is a fraction, not a percent."""

    mae: float
    rmse: float
    mape: float
    per_horizon: dict[str, list[float]]

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "mape": self.mape,
            "per_horizon": self.per_horizon,
        }


def compute_metrics(pred: np.ndarray, target: np.ndarray) -> MetricReport:
    """MAE / RMSE / masked MAPE overall and per horizon step.

    Arrays are (..., horizon, channels) in raw units.  Targets smaller
    than ``MAPE_EPS`` in magnitude are excluded from MAPE.
    """
    if pred.shape != target.shape:
        raise ContractError(f"prediction shape {pred.shape} != target shape {target.shape}")
    err = pred - target

    def mask_mape(e: np.ndarray, y: np.ndarray) -> float:
        valid = np.abs(y) >= MAPE_EPS
        if not valid.any():
            return 0.0
        return float(np.mean(np.abs(e[valid]) / np.abs(y[valid])))

    horizon = pred.shape[-2]
    per: dict[str, list[float]] = {"mae": [], "rmse": [], "mape": []}
    for s in range(horizon):
        es, ys = err[..., s, :], target[..., s, :]
        per["mae"].append(float(np.mean(np.abs(es))))
        per["rmse"].append(float(np.sqrt(np.mean(es**2))))
        per["mape"].append(mask_mape(es, ys))
    return MetricReport(
        mae=float(np.mean(np.abs(err))),
        rmse=float(np.sqrt(np.mean(err**2))),
        mape=mask_mape(err, target),
        per_horizon=per,
    )


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute deviation over every prediction entry."""
    if pred.shape != target.shape:
        raise ContractError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return T.mean_all(T.absolute(pred - target))


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


class Adam:
    """Adam with coupled L2 weight decay (decay added to the gradient)."""

    def __init__(
        self,
        params: list[tuple[str, Tensor]],
        lr: float,
        weight_decay: float = 0.0,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params}
        self.v = {name: np.zeros_like(p.data) for name, p in params}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params:
            if p.grad is None:
                raise ContractError(f"parameter {name!r} has no gradient; run backward first")
            g = p.grad + self.weight_decay * p.data
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1**self.t)
            v_hat = self.v[name] / (1 - b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Window preprocessing: splines -> windowed log-signatures
# ---------------------------------------------------------------------------


@dataclass
class PreparedSplit:
    """Constant model inputs for a set of forecasting windows."""

    f0: np.ndarray            # (count, nodes, channels) normalized first frames
    coords: np.ndarray        # (count, W, nodes, L) log-signature coordinates
    boundaries: np.ndarray    # (W + 1,) shared window edges in knot indices
    targets_norm: np.ndarray  # (count, nodes, horizon, out_channels)
    targets_raw: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return len(self.f0)


def prepare_split(
    windows: WindowSet,
    normalizer: Normalizer,
    config: ModelConfig,
    substeps: int = 1,
    basis: LyndonBasis | None = None,
) -> PreparedSplit:
    """Normalize inputs, interpolate, and extract per-window log-signatures."""
    if len(windows) == 0:
        raise ContractError("cannot prepare an empty window set")
    if basis is None:
        basis = LyndonBasis(config.path_channels, config.sig_depth)
    times = np.arange(windows.input_len, dtype=np.float64)
    coords_all = []
    boundaries = None
    for i in range(len(windows)):
        series = RawSeries(
            values=normalizer.apply(windows.inputs[i]),
            mask=windows.masks[i],
            times=times,
        )
        seq = window_logsig(
            fit_spline(series), config.subpath_len, config.sig_depth, substeps, basis=basis
        )
        coords_all.append(seq.coords)
        boundaries = seq.boundaries
    targets_norm = normalizer.apply(windows.targets, channels=config.out_channels)
    return PreparedSplit(
        f0=normalizer.apply(windows.inputs[:, :, 0, :]),
        coords=np.stack(coords_all),
        boundaries=boundaries,
        targets_norm=targets_norm,
        targets_raw=windows.targets.copy(),
        offsets=windows.offsets.copy(),
    )


def forward_prepared(
    params: ParamStore,
    config: ModelConfig,
    solve: SolveSpec,
    prepared: PreparedSplit,
    idx: np.ndarray,
) -> Tensor:
    """Predictions (batch, nodes, horizon, out_channels) in normalized space."""
    f0 = T.constant(prepared.f0[idx])
    logsigs = LogSigSequence(
        coords=prepared.coords[idx].transpose(1, 0, 2, 3),
        boundaries=prepared.boundaries,
        depth=config.sig_depth,
        dim=config.path_channels,
    )
    state = init_state(f0, params, config)
    final = integrate(state, logsigs, solve, params, config)
    return readout(final, params, config)


def predict_denormalized(
    params: ParamStore,
    config: ModelConfig,
    solve: SolveSpec,
    prepared: PreparedSplit,
    normalizer: Normalizer,
    batch_size: int = 64,
) -> np.ndarray:
    """Raw-unit predictions for every window, computed without taping."""
    outs = []
    with T.no_grad():
        for start in range(0, len(prepared), batch_size):
            idx = np.arange(start, min(start + batch_size, len(prepared)))
            pred = forward_prepared(params, config, solve, prepared, idx)
            outs.append(normalizer.invert(pred.data))
    return np.concatenate(outs, axis=0)


def evaluate_prepared(
    params: ParamStore,
    config: ModelConfig,
    solve: SolveSpec,
    prepared: PreparedSplit,
    normalizer: Normalizer,
    batch_size: int = 64,
) -> MetricReport:
    preds = predict_denormalized(params, config, solve, prepared, normalizer, batch_size)
    return compute_metrics(preds, prepared.targets_raw)


def historical_average(windows: WindowSet) -> np.ndarray:
    """Baseline: mean of each node's observed input values, every horizon.

    Returns (count, nodes, horizon, out_channels) raw-unit predictions.
    """
    m = windows.targets.shape[-1]
    mask = windows.masks[:, :, :, None]
    sums = (windows.inputs[:, :, :, :m] * mask).sum(axis=2)
    counts = mask.sum(axis=2)
    means = sums / counts
    return np.repeat(means[:, :, None, :], windows.horizon, axis=2)


# ---------------------------------------------------------------------------
# Fit loop
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    history: list[tuple[int, float, float]]  # (epoch, train_loss, val_mae)
    best_epoch: int
    best_val_mae: float
    stopped_early: bool = False


def fit(
    params: ParamStore,
    config: ModelConfig,
    train_prep: PreparedSplit,
    val_prep: PreparedSplit,
    train_cfg: TrainConfig,
    solve: SolveSpec,
    normalizer: Normalizer,
) -> FitResult:
    """Minibatch L1 training with early stopping on validation MAE.

    Shuffling is seeded per epoch with ``seed + epoch``; the parameters
    left in ``params`` afterwards are the best-validation snapshot.  A
    non-finite loss or diverging state aborts with the history so far
    and the last healthy snapshot attached.
    """
    adam = Adam(params.tracked(), train_cfg.lr, train_cfg.weight_decay)
    n = len(train_prep)
    history: list[tuple[int, float, float]] = []
    best_val = math.inf
    best_arrays = params.state_arrays()
    best_epoch = -1
    since_best = 0
    stopped_early = False
    try:
        for epoch in range(train_cfg.epochs):
            order = np.random.default_rng(train_cfg.seed + epoch).permutation(n)
            total, count = 0.0, 0
            for start in range(0, n, train_cfg.batch_size):
                idx = order[start : start + train_cfg.batch_size]
                params.zero_grad()
                pred = forward_prepared(params, config, solve, train_prep, idx)
                loss = l1_loss(pred, T.constant(train_prep.targets_norm[idx]))
                T.backward(loss)
                adam.step()
                total += loss.item() * len(idx)
                count += len(idx)
            train_loss = total / count
            val_mae = evaluate_prepared(
                params, config, solve, val_prep, normalizer, train_cfg.batch_size
            ).mae
            history.append((epoch, train_loss, val_mae))
            if val_mae < best_val:
                best_val = val_mae
                best_arrays = params.state_arrays()
                best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if since_best >= train_cfg.patience:
                    stopped_early = True
                    break
    except NumericError as exc:
        raise TrainingAbort(
            f"training aborted at epoch {len(history)}: {exc}",
            history=history,
            best_params=best_arrays if best_epoch >= 0 else None,
        ) from exc
    params.load_arrays(best_arrays)
    return FitResult(
        history=history, best_epoch=best_epoch, best_val_mae=best_val, stopped_early=stopped_early
    )


def write_history(path: str, history: list[tuple[int, float, float]]) -> None:
    lines = ["epoch,train_loss,val_mae"]
    for epoch, train_loss, val_mae in history:
        lines.append(f"{epoch},{train_loss:.17g},{val_mae:.17g}")
    from .data import _atomic_write

    _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    entries_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < 1e-4


def gradcheck(
    config: ModelConfig,
    solve: SolveSpec,
    seed: int = 0,
    batch: int = 2,
    eps: float = 1e-5,
) -> GradCheckReport:
    """Compare every parameter gradient against central differences.

    Builds a small random batch through the real spline/log-signature
    path, takes the L1 training loss, and checks each parameter entry:
    relative error |analytic - numeric| / max(|analytic|, |numeric|,
    1e-6) must stay below 1e-4 in float64.
    """
    rng = np.random.default_rng(seed)
    v, d = config.num_nodes, config.in_channels
    values = rng.normal(size=(v, config.input_len + config.horizon + batch - 1, d))
    from .data import Normalizer as _N, make_windows

    windows = make_windows(values, config.input_len, config.horizon, config.out_channels)
    normalizer = _N(mean=np.zeros(d), std=np.ones(d))
    prepared = prepare_split(windows, normalizer, config)
    params = ParamStore(config, seed=seed + 1)
    idx = np.arange(min(batch, len(prepared)))
    target = T.constant(prepared.targets_norm[idx])

    params.zero_grad()
    loss = l1_loss(forward_prepared(params, config, solve, prepared, idx), target)
    T.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.tracked()}

    def loss_value() -> float:
        with T.no_grad():
            pred = forward_prepared(params, config, solve, prepared, idx)
            return l1_loss(pred, target).item()

    worst, worst_name, checked = 0.0, "", 0
    for name, p in params.tracked():
        flat = p.data.reshape(-1)
        gflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_value()
            flat[i] = orig - eps
            down = loss_value()
            flat[i] = orig
            fd = (up - down) / (2.0 * eps)
            rel = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6)
            checked += 1
            if rel > worst:
                worst, worst_name = rel, name
    return GradCheckReport(max_rel_err=worst, worst_param=worst_name, entries_checked=checked)
