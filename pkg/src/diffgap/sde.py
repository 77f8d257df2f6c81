"""Variance-exploding diffusion: exact forward noising and reverse-time sampling.

The forward process is ``dx = dW`` so ``x_t = x_0 + sqrt(t) eps``. Sampling
runs the reverse SDE from ``x_{t_f} ~ N(0, t_f I)`` down to ``t_0`` with the
Euler-Maruyama step ``x <- x + h s(x, t) + sqrt(h) xi`` where ``h`` is the
(positive) time decrement.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._rng import stream

LOG_UNIFORM = "log"
UNIFORM = "uniform"
_SCHEDULES = (LOG_UNIFORM, UNIFORM)

BLOCK = 1024


class DivergenceError(RuntimeError):
    """Raised when a reverse trajectory leaves the finite range."""

    def __init__(self, step, t):
        super().__init__(f"non-finite state at step {step} (t={t:.6g}); reduce the step size")
        self.step = step
        self.t = t


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Reverse-sampling output.

    ``times[k]`` is the time reached after step ``k + 1``. Diagnostics are
    per recorded time: mean orthogonal residual ``|(I - Pi) x|`` and the mean
    coordinate variance inside each tangent subspace. They are empty when no
    model was supplied.
    """

    times: np.ndarray
    final: np.ndarray = field(repr=False)
    orth_residual: np.ndarray | None = field(default=None, repr=False)
    tangent_variance: np.ndarray | None = field(default=None, repr=False)

    def rows(self):
        cols = [self.times]
        if self.orth_residual is not None:
            cols.append(self.orth_residual)
            cols.extend(self.tangent_variance.T)
        return np.column_stack(cols)


def time_grid(t_f, t_0, steps, schedule=LOG_UNIFORM):
    if not t_f > t_0 > 0:
        raise ValueError(f"need t_f > t_0 > 0, got t_f={t_f}, t_0={t_0}")
    if int(steps) != steps or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps}")
    if schedule not in _SCHEDULES:
        raise ValueError(f"schedule must be one of {_SCHEDULES}, got {schedule!r}")
    if schedule == LOG_UNIFORM:
        return np.geomspace(t_f, t_0, int(steps) + 1)
    return np.linspace(t_f, t_0, int(steps) + 1)


def forward_sample(x0, t, seed, n=None):
    """``x0 + sqrt(t) eps``; returns shape (n, d) when ``n`` is given."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    x0 = np.asarray(x0, dtype=float)
    rng = stream(seed, 5)
    shape = x0.shape if n is None else (int(n),) + x0.shape
    return x0 + np.sqrt(t) * rng.standard_normal(shape)


def _run_block(score, grid, x, rng, basis, groups, noise):
    n_steps = grid.size - 1
    record = basis is not None
    orth = np.empty(n_steps) if record else None
    tvar = np.empty((n_steps, len(groups))) if record else None
    for k in range(n_steps):
        t, t_next = grid[k], grid[k + 1]
        h = t - t_next
        x = x + h * score(x, t)
        if noise:
            x = x + np.sqrt(h) * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(k + 1, t_next)
        if record:
            c = x @ basis
            tang = c @ basis.T
            orth[k] = np.sum(np.linalg.norm(x - tang, axis=1))
            for g, idx in enumerate(groups):
                tvar[k, g] = np.sum(c[:, idx] ** 2)
    return x, orth, tvar


def reverse_sample(score, t_f, t_0, steps, n_samples, seed, schedule=LOG_UNIFORM,
                   model=None, subspaces=None, d=None, threads=None, initial=None, noise=True):
    """Integrate the reverse SDE for ``n_samples`` independent particles.

    Particles are processed in blocks of ``BLOCK`` with one RNG stream per
    block, so results do not depend on ``threads``. When ``model`` is given
    the trajectory diagnostics are measured against its tangent space;
    ``subspaces`` lists index groups into the tangent eigen-directions
    (default: one group holding all of them). Tangent variances are
    second moments of the eigen-coordinates, averaged over each group.

    ``initial`` replaces the ``N(0, t_f I)`` start with given states of shape
    (n_samples, d). ``noise=False`` drops the Brownian increment and follows
    the deterministic drift ``x <- x + h s(x, t)``.
    """
    grid = time_grid(t_f, t_0, steps, schedule)
    if int(n_samples) != n_samples or n_samples < 1:
        raise ValueError(f"n_samples must be a positive integer, got {n_samples}")
    n_samples = int(n_samples)
    if initial is not None:
        initial = np.atleast_2d(np.asarray(initial, dtype=float))
        if initial.shape[0] != n_samples:
            raise ValueError(f"initial states have {initial.shape[0]} rows, expected {n_samples}")
        d = initial.shape[1]
    if d is None:
        if model is None:
            raise ValueError("pass the ambient dimension d or a model")
        d = model.d
    basis = groups = None
    if model is not None:
        basis = model.tangent_basis()
        groups = [np.arange(basis.shape[1])] if subspaces is None else [np.asarray(g) for g in subspaces]
    n = int(n_samples)
    starts = list(range(0, n, BLOCK))

    def work(b):
        lo = starts[b]
        size = min(BLOCK, n - lo)
        rng = stream(seed, 4, b)
        if initial is None:
            x = np.sqrt(t_f) * rng.standard_normal((size, d))
        else:
            x = initial[lo:lo + size].copy()
        return _run_block(score, grid, x, rng, basis, groups, noise)

    workers = threads or os.cpu_count() or 1
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(len(starts))))
    else:
        results = [work(b) for b in range(len(starts))]
    final = np.vstack([r[0] for r in results])
    orth = tvar = None
    if basis is not None:
        orth = sum(r[1] for r in results) / n
        sizes = np.array([len(g) for g in groups], dtype=float)
        tvar = sum(r[2] for r in results) / n / sizes
    return TrajectoryRecord(grid[1:], final, orth, tvar)
