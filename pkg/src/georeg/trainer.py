"""Multi-stage training loop, evaluation and metrics output."""

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import toeplitz
from .data import CHUNK
from .flow import ModelState, fixed_function_values, forward, get_activation
from .linear_init import compute_pca_basis, fit_head
from .updates import (DegenerateDirection, DirectionParams, MomentumState, compute_direction,
                      layer_from_state, line_search_step, momentum_update, mse, residual)

log = logging.getLogger(__name__)

METRICS_HEADER = ["iteration", "stage", "mu", "train_mse", "train_acc", "test_acc", "wallclock_s"]


class ConfigError(ValueError):
    pass


class NumericAbort(ArithmeticError):
    pass


@dataclass
class StageConfig:
    kind: str = "plain"
    iterations: int = 300
    step: str = "fixed"
    mu: float = 0.06
    alpha0: float = 0.98
    alpha: list = field(default_factory=lambda: [0.99])
    beta: float = 0.98
    update_head: bool = False
    window: int = 5
    # False: use the raw projection P(W0) instead of the unit-norm argmax
    conv_normalize: bool = True

    def validate(self, r):
        if self.kind not in ("plain", "conv"):
            raise ConfigError(f"stage kind must be plain or conv, got {self.kind!r}")
        if self.step not in ("fixed", "line_search"):
            raise ConfigError(f"step must be fixed or line_search, got {self.step!r}")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.step == "fixed" and not self.mu > 0:
            raise ConfigError("fixed step needs mu > 0")
        if len(self.alpha) != r:
            raise ConfigError(f"need {r} alpha values (one per fixed function), got {len(self.alpha)}")
        for a in [self.alpha0, self.beta, *self.alpha]:
            if not 0.0 <= a < 1.0:
                raise ConfigError(f"momentum coefficient {a} outside [0, 1)")
        if self.kind == "conv" and (self.window < 1 or self.window % 2 == 0):
            raise ConfigError(f"conv window must be odd, got {self.window}")


@dataclass
class TrainConfig:
    d: int = 400
    r: int = 1
    activation: str = "tanh"
    stages: list = field(default_factory=lambda: [StageConfig()])
    # "pca": leading eigenvectors of E[x x^T]; "identity": U = I (d = n), keeps the pixel grid
    reduction: str = "pca"
    minibatch: int = None
    seed: int = 0
    workers: int = None
    ridge: float = 1e-8

    def validate(self, n=None):
        if self.r != 1:
            raise ConfigError("only the single fixed function f(x) = x is supported (r = 1)")
        try:
            get_activation(self.activation)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.reduction not in ("pca", "identity"):
            raise ConfigError(f"reduction must be pca or identity, got {self.reduction!r}")
        if n is not None:
            if not 1 <= self.d <= n:
                raise ConfigError(f"d={self.d} must be in [1, n={n}]")
            if self.reduction == "identity" and self.d != n:
                raise ConfigError(f"identity reduction needs d = n = {n}")
        if self.minibatch is not None and self.minibatch < 1:
            raise ConfigError("minibatch must be positive")
        for stage in self.stages:
            stage.validate(self.r)
            if stage.kind == "conv":
                side = math.isqrt(self.d)
                if side * side != self.d:
                    raise ConfigError(f"conv stages need d to be a perfect square, got {self.d}")


@dataclass
class MetricsRow:
    iteration: int
    stage: int
    mu: float
    train_mse: float
    train_acc: float
    test_acc: float
    wallclock_s: float


def _accuracy(outputs, labels):
    return float(np.mean(np.argmax(outputs, axis=0) == labels))


def evaluate(model, data, workers=None):
    """``(mse, accuracy)`` of the model's readout on a dataset."""
    out = model.head(forward(model, data.X))
    return mse(data.Y - out, CHUNK, workers), _accuracy(out, data.labels)


def initial_model(data, cfg):
    cfg.validate(data.n)
    if cfg.reduction == "identity":
        U = np.eye(data.n)
    else:
        U = compute_pca_basis(data.X, cfg.d, workers=cfg.workers)
    F = U @ data.X
    head = fit_head(F, data.Y, cfg.ridge, workers=cfg.workers)
    return ModelState(U, head, [], get_activation(cfg.activation), cfg.r), F


def train(data, test, cfg, on_row=None, notes=None):
    """Grow the layer stack stage by stage.

    Returns ``(model, rows)``; ``rows[0]`` is the iteration-0 baseline of the
    initial affine head.  ``on_row`` is called with each row as it is produced.
    Reasons for stopping a stage early are appended to ``notes`` if given.
    """
    t0 = time.perf_counter()
    workers = cfg.workers
    model, F = initial_model(data, cfg)
    act, Y, labels = model.act, data.Y, data.labels
    FK = fixed_function_values(data.X, cfg.r)
    if test is not None:
        Ft, FKt = model.U @ test.X, fixed_function_values(test.X, cfg.r)
    rng = np.random.default_rng(cfg.seed)
    rows = []

    def record(iteration, stage, mu):
        out = model.head(F)
        loss = mse(Y - out, CHUNK, workers)
        if not math.isfinite(loss):
            raise NumericAbort(f"train MSE became {loss} at iteration {iteration} (stage {stage}, mu={mu})")
        test_acc = _accuracy(model.head(Ft), test.labels) if test is not None else float("nan")
        row = MetricsRow(iteration, stage, float(mu), loss, _accuracy(out, labels), test_acc,
                         time.perf_counter() - t0)
        rows.append(row)
        log.info("iter %d stage %d mu=%.4g mse=%.6f train=%.4f test=%.4f", iteration, stage,
                 row.mu, row.train_mse, row.train_acc, row.test_acc)
        if on_row is not None:
            on_row(row)

    record(0, 0, 0.0)
    iteration = 0
    for si, stage in enumerate(cfg.stages):
        structure = toeplitz.square_structure(model.d, stage.window) if stage.kind == "conv" else None
        grid = (structure.grid_rows, structure.grid_cols) if structure else (0, 0)
        window = stage.window if structure else 0
        state = None
        for _ in range(stage.iterations):
            Z = residual(Y, model.head.D, model.head.c, F)
            if cfg.minibatch and cfg.minibatch < data.T:
                cols = np.sort(rng.choice(data.T, size=cfg.minibatch, replace=False))
                Fb, FKb, Zb = F[:, cols], [Fk[:, cols] for Fk in FK], Z[:, cols]
            else:
                Fb, FKb, Zb = F, FK, Z
            try:
                direction = compute_direction(Fb, FKb, Zb, model.head.D, act, structure,
                                              stage.conv_normalize, CHUNK, workers)
            except toeplitz.ZeroProjection:
                log.warning("zero convolution projection at iteration %d; W0 term skipped", iteration + 1)
                plain = compute_direction(Fb, FKb, Zb, model.head.D, act, None, True, CHUNK, workers)
                direction = DirectionParams(np.zeros(stage.window ** 2), plain.Wk, plain.b, "conv")
            if state is None:
                state = MomentumState.zeros_like(direction, [stage.alpha0, *stage.alpha], stage.beta)
            state = momentum_update(state, direction)
            layer = layer_from_state(state, stage.kind, grid, window)
            psi = layer.direction(act, F, FK)
            if stage.step == "line_search":
                try:
                    mu = line_search_step(Z, model.head.D @ psi, CHUNK, workers)
                except DegenerateDirection as exc:
                    reason = f"stage {si} stopped before iteration {iteration + 1}: {exc}"
                    log.warning(reason)
                    if notes is not None:
                        notes.append(reason)
                    break
            else:
                mu = stage.mu
            layer.mu = float(mu)
            F = F + layer.mu * psi
            if test is not None:
                Ft = layer.apply(act, Ft, FKt)
            model.layers.append(layer)
            if stage.update_head:
                model.head = fit_head(F, Y, cfg.ridge, workers=workers)
            iteration += 1
            record(iteration, si, layer.mu)
    return model, rows


def write_metrics(rows, path, comments=()):
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(row).values()])


def read_metrics(path):
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    types = {f.name: f.type for f in fields(MetricsRow)}
    return [MetricsRow(**{k: types[k](v) for k, v in rec.items()}) for rec in reader]
