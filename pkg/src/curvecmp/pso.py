"""Seeded, deterministic particle swarm optimization over boxes and simplices.

The engine minimizes a batch objective ``f(positions) -> values`` where
``positions`` has one row per particle.  Coordinates live in box bounds;
designated contiguous blocks of coordinates are decoded onto the probability
simplex (absolute value, then normalization) before each evaluation, which
keeps weight optimization unconstrained.  Every particle draws from its own
counter-based random stream derived from (seed, particle index), so results
do not depend on evaluation order or parallel scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from curvecmp.errors import InvalidInputError

PENALTY = 1e30

_VELOCITY_CLAMP = 0.5  # max |v| as a fraction of each coordinate's range
_CHUNK = 64  # iterations of random draws pre-generated per particle
_IMPROVE_RTOL = 1e-14  # relative decrease that counts as progress


@dataclass(frozen=True)
class PsoConfig:
    """Swarm settings; ``seed`` is mandatory (no wall-clock seeding).

    ``swarm_size=None`` selects ceil(40 * sqrt(dimension)).  The default
    inertia/acceleration values are the standard constriction-equivalent
    choices.
    """

    seed: int
    swarm_size: int | None = None
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    max_iters: int = 2000
    stagnation_window: int = 200

    def __post_init__(self):
        if self.swarm_size is not None and self.swarm_size < 2:
            raise InvalidInputError("swarm_size must be at least 2")
        if not (0.0 <= self.inertia <= 1.0):
            raise InvalidInputError("inertia must lie in [0, 1]")
        if self.cognitive <= 0 or self.social <= 0:
            raise InvalidInputError("cognitive and social factors must be positive")
        if self.max_iters < 1 or self.stagnation_window < 1:
            raise InvalidInputError("max_iters and stagnation_window must be positive")

    def sized_for(self, dim: int) -> int:
        if self.swarm_size is not None:
            return int(self.swarm_size)
        return int(np.ceil(40.0 * np.sqrt(dim)))

    def with_(self, **kw) -> "PsoConfig":
        return replace(self, **kw)


@dataclass
class PsoResult:
    position: np.ndarray
    value: float
    iterations: int
    history: np.ndarray  # best value after each iteration (nonincreasing)


def particle_streams(seed: int, n: int, context: tuple = ()):
    """Independent Philox streams keyed by (seed, *context, particle index)."""
    return [
        np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed),) + tuple(int(c) for c in context) + (i,))))
        for i in range(n)
    ]


def decode_simplex(positions: np.ndarray, simplex_blocks) -> np.ndarray:
    """Map designated coordinate blocks onto the simplex (abs + normalize)."""
    out = np.array(positions, dtype=float, copy=True)
    for start, stop in simplex_blocks:
        block = np.abs(out[..., start:stop])
        total = block.sum(axis=-1, keepdims=True)
        uniform = np.full_like(block, 1.0 / (stop - start))
        with np.errstate(invalid="ignore", divide="ignore"):
            normalized = np.where(total > 0, block / np.where(total > 0, total, 1.0), uniform)
        out[..., start:stop] = normalized
    return out


def pso_minimize(objective, bounds, simplex_blocks=(), config: PsoConfig | None = None, context: tuple = (), init=None) -> PsoResult:
    """Minimize a batch objective over box bounds with optional simplex blocks.

    ``objective`` receives decoded positions of shape (swarm, dim) and must
    return one finite value per row (infeasible rows should be penalized, not
    raised).  The returned position is decoded.  ``context`` extends the
    per-particle stream keys so nested runs (restarts, polish rounds) draw
    fresh, reproducible randomness.  ``init`` rows (clipped to the box)
    replace the random starting positions of the first particles, which warm
    starts refinement runs with the incumbent.
    """
    if config is None:
        raise InvalidInputError("a PsoConfig with an explicit seed is required")
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or np.any(bounds[:, 1] < bounds[:, 0]):
        raise InvalidInputError("bounds must be a (dim, 2) array with lo <= hi")
    dim = bounds.shape[0]
    simplex_blocks = [(int(a), int(b)) for a, b in simplex_blocks]
    for a, b in simplex_blocks:
        if not (0 <= a < b <= dim):
            raise InvalidInputError("simplex block out of range")

    swarm = config.sized_for(dim)
    lo, hi = bounds[:, 0], bounds[:, 1]
    span = hi - lo
    vmax = _VELOCITY_CLAMP * np.where(span > 0, span, 1.0)

    streams = particle_streams(config.seed, swarm, context)
    x = np.stack([lo + g.random(dim) * span for g in streams])
    if init is not None:
        init = np.atleast_2d(np.asarray(init, dtype=float))
        m = min(init.shape[0], swarm)
        x[:m] = np.clip(init[:m], lo, hi)
    v = np.zeros_like(x)

    def evaluate(positions):
        vals = np.asarray(objective(decode_simplex(positions, simplex_blocks)), dtype=float)
        return np.where(np.isfinite(vals), vals, PENALTY)

    values = evaluate(x)
    pbest, pbest_val = x.copy(), values.copy()
    gi = int(np.argmin(pbest_val))
    gbest, gbest_val = pbest[gi].copy(), float(pbest_val[gi])

    history = []
    last_improve = 0
    iters_done = 0
    draws = None
    for it in range(config.max_iters):
        slot = it % _CHUNK
        if slot == 0:
            draws = np.stack([g.random((_CHUNK, 2, dim)) for g in streams])
        r1 = draws[:, slot, 0, :]
        r2 = draws[:, slot, 1, :]
        v = config.inertia * v + config.cognitive * r1 * (pbest - x) + config.social * r2 * (gbest[None, :] - x)
        np.clip(v, -vmax, vmax, out=v)
        x = np.clip(x + v, lo, hi)
        values = evaluate(x)

        better = values < pbest_val
        pbest[better] = x[better]
        pbest_val[better] = values[better]
        gi = int(np.argmin(pbest_val))
        if pbest_val[gi] < gbest_val - _IMPROVE_RTOL * max(1.0, abs(gbest_val)):
            last_improve = it
        if pbest_val[gi] < gbest_val:
            gbest, gbest_val = pbest[gi].copy(), float(pbest_val[gi])
        history.append(gbest_val)
        iters_done = it + 1
        if it - last_improve >= config.stagnation_window:
            break

    return PsoResult(
        position=decode_simplex(gbest, simplex_blocks),
        value=gbest_val,
        iterations=iters_done,
        history=np.asarray(history),
    )


def shrink_box(center, bounds, halfwidth) -> np.ndarray:
    """Box of +-halfwidth (absolute, per coordinate) around center, clipped."""
    bounds = np.asarray(bounds, dtype=float)
    center = np.asarray(center, dtype=float)
    h = np.broadcast_to(np.asarray(halfwidth, dtype=float), center.shape)
    lo = np.maximum(bounds[:, 0], center - h)
    hi = np.minimum(bounds[:, 1], center + h)
    # keep a nonempty box even when the center drifted onto a bound
    fix = lo > hi
    lo[fix] = hi[fix] = np.clip(center[fix], bounds[fix, 0], bounds[fix, 1])
    return np.column_stack([lo, hi])
