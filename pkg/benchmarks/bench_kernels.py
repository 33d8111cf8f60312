"""Compare the compiled kernels with the numpy fallback on inputs captured from real episodes.

    python benchmarks/bench_kernels.py [--task blocks_stack_easy] [--calls 200] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time
from collections import defaultdict

import numpy as np

from chainplan.bench.tasks import episode_config, get_task
from chainplan.constraints import solver
from chainplan.executor.executor import ExecConfig, execute_plan
from chainplan.kinematics import arm, backend, collision
from chainplan.scene.scene import load_scene

KERNELS = ("lm_solve", "fk", "fk_frames", "sphere_box_depth", "box_box_depth")
MODULES = (solver, collision, arm)


class Capture:
    """Stands in for the kernel module and keeps a copy of each call's arguments."""

    def __init__(self, inner, limit):
        self.inner = inner
        self.limit = limit
        self.calls = defaultdict(list)

    def __getattr__(self, name):
        fn = getattr(self.inner, name)
        if name not in KERNELS:
            return fn

        def wrapped(*args):
            if len(self.calls[name]) < self.limit:
                self.calls[name].append(tuple(np.array(a, copy=True) if isinstance(a, np.ndarray) else a
                                              for a in args))
            return fn(*args)
        return wrapped


def capture(task_name: str, limit: int, episodes: int = 2) -> dict:
    task = get_task(task_name)
    cap = Capture(backend.get("python"), limit)
    saved = [m.kernels for m in MODULES]
    try:
        for m in MODULES:
            m.kernels = cap
        for ep in range(episodes):
            scene, state = load_scene(episode_config(task, 0, ep))
            execute_plan(scene, state, task.canonical_plan(), task.predicate, ExecConfig(record=False))
    finally:
        for m, k in zip(MODULES, saved):
            m.kernels = k
    return cap.calls


def _flat(out) -> np.ndarray:
    if isinstance(out, tuple):
        return np.concatenate([_flat(o) for o in out])
    return np.ravel(np.asarray(out, dtype=float))


def time_calls(mod, name, calls, repeat) -> float:
    fn = getattr(mod, name)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        for args in calls:
            fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--task", default="blocks_stack_easy")
    ap.add_argument("--calls", type=int, default=200, help="calls captured per kernel")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    py = backend.get("python")
    try:
        cy = backend.get("cython")
    except ImportError:
        print("compiled extension not built; only the numpy fallback is available")
        return 1
    calls = capture(args.task, args.calls)
    print(f"{'kernel':<18}{'calls':>7}{'python ms':>12}{'cython ms':>12}{'speedup':>9}{'max diff':>11}")
    for name in KERNELS:
        cs = calls.get(name, [])
        if not cs:
            continue
        diff = max(float(np.max(np.abs(_flat(getattr(py, name)(*a)) - _flat(getattr(cy, name)(*a))), initial=0.0))
                   for a in cs)
        tp = time_calls(py, name, cs, args.repeat)
        tc = time_calls(cy, name, cs, args.repeat)
        print(f"{name:<18}{len(cs):>7}{1e3 * tp:>12.2f}{1e3 * tc:>12.2f}{tp / tc:>8.1f}x{diff:>11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
