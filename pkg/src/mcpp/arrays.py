"""Packing of workflow instances into the flat arrays the kernels consume."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernel
from .model import EMPIRICAL, InputError, WorkflowInstance

MAX_KERNEL_NODES = 63  # node sets are int64 bitmasks


@dataclass(frozen=True)
class InstanceArrays:
    mode: int  # _kernel.PARAM or _kernel.EMPIR
    pred: np.ndarray  # int64[n] predecessor bitmasks
    full_mask: int
    p: np.ndarray  # float64[n, m]
    cost: np.ndarray  # int64[n, m] per-attempt cost estimate (micro-USD)
    tau: np.ndarray  # int64[n, m] per-attempt latency estimate (ms)
    pool_n: np.ndarray  # int64[n, m]
    pool_succ: np.ndarray  # uint8[n, m, max_n]
    pool_cost: np.ndarray  # int64[n, m, max_n]
    pool_lat: np.ndarray  # int64[n, m, max_n]


def pack(instance: WorkflowInstance) -> InstanceArrays:
    """Pack (and cache on the instance) the kernel view of an instance."""
    cached = instance._arrays
    if cached is not None:
        return cached  # type: ignore[return-value]
    n = instance.graph.n_nodes
    if n > MAX_KERNEL_NODES:
        raise InputError(f"kernels support at most {MAX_KERNEL_NODES} nodes, got {n}")
    prof = instance.planning_profiles
    n_models = prof.n_models
    if instance.mode == EMPIRICAL:
        assert instance.pools is not None
        max_n = max(len(rec) for rec in instance.pools.pools.values())
        pool_n = np.ones((n, n_models), dtype=np.int64)
        pool_succ = np.zeros((n, n_models, max_n), dtype=np.uint8)
        pool_cost = np.zeros((n, n_models, max_n), dtype=np.int64)
        pool_lat = np.ones((n, n_models, max_n), dtype=np.int64)
        for (v, m), rec in instance.pools.pools.items():
            sz = len(rec)
            pool_n[v, m] = sz
            pool_succ[v, m, :sz] = rec.success.astype(np.uint8)
            pool_cost[v, m, :sz] = rec.cost_micro
            pool_lat[v, m, :sz] = rec.latency_ms
        mode = _kernel.EMPIR
    else:
        pool_n = np.ones((1, 1), dtype=np.int64)
        pool_succ = np.zeros((1, 1, 1), dtype=np.uint8)
        pool_cost = np.zeros((1, 1, 1), dtype=np.int64)
        pool_lat = np.ones((1, 1, 1), dtype=np.int64)
        mode = _kernel.PARAM
    arrays = InstanceArrays(
        mode=mode,
        pred=instance.graph.pred_masks(),
        full_mask=(1 << n) - 1,
        p=np.ascontiguousarray(prof.p, dtype=np.float64),
        cost=np.ascontiguousarray(prof.cost_micro, dtype=np.int64),
        tau=np.ascontiguousarray(prof.latency_ms, dtype=np.int64),
        pool_n=pool_n,
        pool_succ=pool_succ,
        pool_cost=pool_cost,
        pool_lat=pool_lat,
    )
    instance._arrays = arrays
    return arrays
