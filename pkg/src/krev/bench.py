"""Benchmark the permutation backends against each other.

Times the scalar and batched permutation kernels plus the operations that
sit on top of them (digest, incremental insert) for each available backend.
"""

from __future__ import annotations

import time

import numpy as np

from . import _backend, keccak
from .tree import RevocationTree


def _time(fn, repeat: int) -> float:
    fn()  # warmup (JIT compile, cache fill)
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def available_backends():
    names = []
    try:
        _backend.load_kernels("numba")
        names.append("numba")
    except ImportError:
        pass
    names.append("numpy")
    return names


def run_benchmarks(permute_repeat: int = 2000, batch_size: int = 512,
                   hash_repeat: int = 2000, insert_count: int = 1500):
    """Returns one row per (backend, operation) with per-op microseconds."""
    original = _backend.backend_name()
    rows = []
    try:
        for name in available_backends():
            _backend.activate(name)
            kernels = _backend.load_kernels(name)

            state = np.zeros(25, dtype=np.uint32)
            per = _time(lambda: kernels.permute(state), permute_repeat)
            rows.append({"backend": name, "op": "permute (1 state)", "us_per_op": per * 1e6})

            states = np.zeros((batch_size, 25), dtype=np.uint32)
            per = _time(lambda: kernels.permute_batch(states), max(1, permute_repeat // 64))
            rows.append({
                "backend": name,
                "op": f"permute (batch {batch_size}, per state)",
                "us_per_op": per * 1e6 / batch_size,
            })

            msg = bytes(range(28))
            per = _time(lambda: keccak.hash_bytes(msg), hash_repeat)
            rows.append({"backend": name, "op": "hash 28-byte serial", "us_per_op": per * 1e6})

            serials = [i.to_bytes(28, "big") for i in range(insert_count)]

            def build():
                tree = RevocationTree(5)
                for s in serials:
                    tree.insert(s, 10**9)

            per = _time(build, 3)
            rows.append({
                "backend": name,
                "op": f"insert (k=5, {insert_count} serials, per insert)",
                "us_per_op": per * 1e6 / insert_count,
            })
    finally:
        _backend.activate(original)
    return rows


def format_rows(rows) -> str:
    width = max(len(r["op"]) for r in rows)
    lines = [f"{'backend':8} {'operation':{width}} {'us/op':>12}"]
    for r in rows:
        lines.append(f"{r['backend']:8} {r['op']:{width}} {r['us_per_op']:12.2f}")
    by_op = {}
    for r in rows:
        by_op.setdefault(r["op"], {})[r["backend"]] = r["us_per_op"]
    for op, vals in by_op.items():
        if "numba" in vals and "numpy" in vals and vals["numba"] > 0:
            lines.append(f"speedup numba/numpy on {op}: {vals['numpy'] / vals['numba']:.1f}x")
    return "\n".join(lines)
