"""Stochastic gradient descent with momentum and the two data-selection strategies.

``per_epoch_full_pass``
    Every validation is preceded by one complete seeded-shuffled pass over
    the training set; training stops after ``epochs`` passes or
    ``max_iterations`` updates, whichever comes first.
``fixed_chunk``
    Validation every ``validation_interval`` updates, drawing batches from an
    endless stream of shuffled passes, until ``max_iterations``.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkModel, accuracy, backward, forward

log = logging.getLogger(__name__)

STRATEGIES = ("per_epoch_full_pass", "fixed_chunk")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class SolverConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 256
    epochs: int = 20
    max_iterations: int = 17400
    validation_interval: int = 1000
    strategy: str = "per_epoch_full_pass"
    seed: int = 0
    lr_gamma: float = 0.1
    lr_steps: int = 3
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass
class SolverState:
    iteration: int = 0
    velocity: list[dict[str, np.ndarray]] = field(default_factory=list)


@dataclass
class TrainReport:
    points: list[tuple[int, float]] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    iterations_run: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @property
    def best_accuracy(self) -> float:
        return max(a for _, a in self.points) if self.points else 0.0

    @property
    def best_iteration(self) -> int:
        best = self.best_accuracy
        return next(i for i, a in self.points if a == best) if self.points else 0

    @property
    def validations(self) -> int:
        return len(self.points)

    def to_csv(self) -> str:
        lines = ["iteration,accuracy"] + [f"{i},{a!r}" for i, a in self.points]
        return "\n".join(lines) + "\n"


def compute_iterations(total_images: int, batch_size: int, epochs: int) -> int:
    """Updates needed for ``epochs`` passes over ``total_images`` in batches of ``batch_size``."""
    if min(total_images, batch_size, epochs) < 1:
        raise ValueError("all arguments must be >= 1")
    return epochs * math.ceil(total_images / batch_size)


def iteration_budget(config: SolverConfig, n_train: int) -> int:
    if config.strategy == "per_epoch_full_pass":
        return min(config.max_iterations, compute_iterations(n_train, config.batch_size, config.epochs))
    return config.max_iterations


def learning_rate_at(config: SolverConfig, iteration: int, budget: int) -> float:
    step = max(1, math.ceil(budget / config.lr_steps))
    return config.learning_rate * config.lr_gamma ** (iteration // step)


class _BatchPlan:
    """Deterministic mapping from an iteration number to its mini-batch indices."""

    def __init__(self, n, config: SolverConfig):
        self.n, self.cfg = n, config
        self._perms: dict[int, np.ndarray] = {}
        self.per_epoch = math.ceil(n / config.batch_size)

    def _perm(self, k):
        if k not in self._perms:
            if len(self._perms) > 4:
                self._perms.clear()
            rng = np.random.default_rng(np.random.SeedSequence([self.cfg.seed, k]))
            self._perms[k] = rng.permutation(self.n)
        return self._perms[k]

    def batch(self, it):
        b = self.cfg.batch_size
        if self.cfg.strategy == "per_epoch_full_pass":
            epoch, j = divmod(it, self.per_epoch)
            return self._perm(epoch)[j * b:(j + 1) * b]
        pos = it * b + np.arange(b)
        passes, offs = np.divmod(pos, self.n)
        return np.array([self._perm(int(p))[o] for p, o in zip(passes, offs)])

    def validate_after(self, it):
        """Whether a validation follows update number ``it`` (0-based)."""
        if self.cfg.strategy == "per_epoch_full_pass":
            return (it + 1) % self.per_epoch == 0
        return (it + 1) % self.cfg.validation_interval == 0


def train(model: NetworkModel, train_x, train_y, val_x, val_y, config: SolverConfig,
          state: SolverState | None = None, callback=None, stop_after: int | None = None):
    """Optimize a copy of ``model``; returns ``(model, report, state)``.

    Accuracy on the validation split is recorded before the first update and
    at every validation point. ``stop_after`` pauses after that many updates
    without touching the schedule; passing the returned ``state`` back in
    resumes exactly where it stopped.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    if len(train_y) == 0:
        raise ValueError("empty training set")
    if not np.isin(train_y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    model = model.copy()
    n = len(train_y)
    budget = iteration_budget(config, n)
    plan = _BatchPlan(n, config)
    if state is None:
        state = SolverState(0, [{k: np.zeros_like(v) for k, v in p.items()} for p in model.params])
    else:
        state = SolverState(state.iteration, [{k: v.copy() for k, v in p.items()} for p in state.velocity])
    report = TrainReport()
    start = time.perf_counter()

    def validate(it):
        acc = accuracy(model, val_x, val_y)
        report.points.append((it, acc))
        log.info("iteration %d: validation accuracy %.4f", it, acc)
        if callback:
            callback(it, acc)

    if state.iteration == 0:
        validate(0)
    it = state.iteration
    end = budget if stop_after is None else min(budget, it + stop_after)
    while it < end:
        idx = plan.batch(it)
        _, _, cache = forward(model, train_x[idx])
        loss, grads, _ = backward(model, cache, train_y[idx])
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss} at iteration {it}")
        lr = learning_rate_at(config, it, budget)
        for p, g, v in zip(model.params, grads, state.velocity):
            for name in p:
                step = g[name] + config.weight_decay * p[name] if config.weight_decay else g[name]
                v[name] *= config.momentum
                v[name] -= lr * step
                p[name] += v[name]
        report.losses.append(loss)
        report.iterations_run += 1
        it += 1
        state.iteration = it
        if plan.validate_after(it - 1) or it == budget:
            validate(it)
    report.wall_time = time.perf_counter() - start
    return model, report, state
