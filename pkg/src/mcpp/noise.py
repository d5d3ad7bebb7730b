"""Planner-visible profile perturbation: token-length and success-rate noise.

Both operations return fresh pool tables; the originals (and therefore all
execution-side sampling) are never touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .model import InputError, ModelCatalog, PoolRecords, PoolTable, attempt_cost_micro

TOKEN_LENGTH = "token_length"
SUCCESS_RATE = "success_rate"


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    sigma: float
    eps_clip: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (TOKEN_LENGTH, SUCCESS_RATE):
            raise InputError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise InputError("sigma must be >= 0")
        if not 0.0 < self.eps_clip < 0.5:
            raise InputError("eps_clip must be in (0, 0.5)")


def perturb_token_lengths(pools: PoolTable, spec: NoiseSpec, catalog: ModelCatalog) -> PoolTable:
    """Gaussian noise on token lengths in per-pool max-normalized space.

    Each sample is independently moved to c_max * clip(c/c_max + sigma*z,
    eps, 1-eps) and rounded back to a positive integer token count; success
    flags and latencies are unchanged.  Per-record costs are re-derived from
    the perturbed token counts.
    """
    if spec.kind != TOKEN_LENGTH:
        raise InputError(f"expected kind {TOKEN_LENGTH!r}, got {spec.kind!r}")
    out = {}
    for (v, m), rec in pools.pools.items():
        gen = rngmod.substream(spec.seed, rngmod.NOISE, v, m)
        c_max = float(rec.tokens.max())
        z = gen.standard_normal(len(rec))
        normalized = np.clip(
            rec.tokens / c_max + spec.sigma * z, spec.eps_clip, 1.0 - spec.eps_clip
        )
        tokens = np.maximum(1, np.round(normalized * c_max)).astype(np.int64)
        price = catalog.models[m].price_per_1k_tokens_usd
        cost = np.array([attempt_cost_micro(t, price) for t in tokens], dtype=np.int64)
        out[(v, m)] = PoolRecords(
            success=rec.success.copy(),
            tokens=tokens,
            latency_ms=rec.latency_ms.copy(),
            cost_micro=cost,
        )
    return PoolTable(pools=out)


def perturb_success_rate(pools: PoolTable, spec: NoiseSpec) -> PoolTable:
    """Gaussian noise on each pool's success rate with minimal label flips.

    One z ~ N(0,1) is drawn per (node, model) pool; the success count is
    moved to round(clip(p + sigma*z, eps, 1-eps) * n) by flipping exactly the
    needed number of labels, chosen uniformly among records of the required
    polarity. Tokens and latencies (hence costs) are unchanged.
    """
    if spec.kind != SUCCESS_RATE:
        raise InputError(f"expected kind {SUCCESS_RATE!r}, got {spec.kind!r}")
    out = {}
    for (v, m), rec in pools.pools.items():
        gen = rngmod.substream(spec.seed, rngmod.NOISE, v, m)
        n = len(rec)
        p = rec.success_rate
        p_tilde = float(np.clip(p + spec.sigma * gen.standard_normal(), spec.eps_clip, 1.0 - spec.eps_clip))
        target = int(round(p_tilde * n))
        current = int(np.count_nonzero(rec.success))
        success = rec.success.copy()
        if target > current:
            pool_idx = np.flatnonzero(~success)
            flip = gen.choice(pool_idx, size=target - current, replace=False)
            success[flip] = True
        elif target < current:
            pool_idx = np.flatnonzero(success)
            flip = gen.choice(pool_idx, size=current - target, replace=False)
            success[flip] = False
        out[(v, m)] = PoolRecords(
            success=success,
            tokens=rec.tokens.copy(),
            latency_ms=rec.latency_ms.copy(),
            cost_micro=rec.cost_micro.copy(),
        )
    return PoolTable(pools=out)
