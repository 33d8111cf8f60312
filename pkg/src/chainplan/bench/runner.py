"""Episode runs, search comparisons and their statistics."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from ..executor.executor import ExecConfig, Executor
from ..executor.recorder import write_traj
from ..executor.steps import Plan
from ..proposer.base import ProposalRequest
from ..proposer.noisy import NoisyProposer
from ..proposer.scripted import ScriptedProposer
from ..scene.scene import load_scene
from ..search.mcts import SearchConfig, search
from ..search.stcr import combine
from .tasks import TaskSpec, episode_config

STATS_FIELDS = ("episode", "success", "status", "cause", "expansions", "plan_id", "frames")


def make_proposer(kind: str, noise_p: float = 0.0, seed: int = 0, episode: int = 0, remote_config=None):
    if kind == "scripted":
        return ScriptedProposer()
    if kind == "noisy":
        return NoisyProposer(noise_p, seed * 1_000_003 + episode)
    if kind == "remote":
        from ..proposer.remote import RemoteConfig, RemoteProposer
        return RemoteProposer(remote_config or RemoteConfig.from_env())
    raise ValueError(f"unknown proposer {kind!r}")


def plan_id(signature) -> str:
    """Short stable name for a normalized plan signature."""
    return hashlib.sha1(json.dumps(signature, separators=(",", ":")).encode()).hexdigest()[:12]


@dataclass
class EpisodeResult:
    episode: int
    success: bool
    status: str
    cause: str | None
    expansions: int
    signature: tuple | None
    frames: list = field(default_factory=list, repr=False)
    tree: dict | None = field(default=None, repr=False)
    tokens: dict | None = None

    def row(self) -> dict:
        return {"episode": self.episode, "success": int(self.success), "status": self.status,
                "cause": self.cause or "", "expansions": self.expansions,
                "plan_id": plan_id(self.signature) if self.signature else "", "frames": len(self.frames)}


@dataclass
class RunStats:
    task: str
    episodes: int = 0
    successes: int = 0
    causes: Counter = field(default_factory=Counter)
    plans: set = field(default_factory=set)
    expansions: int = 0
    tokens: Counter = field(default_factory=Counter)
    rows: list = field(default_factory=list)

    def add(self, r: EpisodeResult) -> None:
        self.episodes += 1
        self.successes += int(r.success)
        if not r.success:
            self.causes[r.cause or r.status] += 1
        if r.success and r.signature:
            self.plans.add(plan_id(r.signature))
        self.expansions += r.expansions
        if r.tokens:
            self.tokens.update(r.tokens)
        self.rows.append(r.row())

    def merge(self, other: "RunStats") -> "RunStats":
        out = RunStats(self.task, self.episodes + other.episodes, self.successes + other.successes,
                       self.causes + other.causes, self.plans | other.plans, self.expansions + other.expansions,
                       self.tokens + other.tokens, sorted(self.rows + other.rows, key=lambda r: r["episode"]))
        return out

    @property
    def rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0

    def summary(self) -> dict:
        return {"task": self.task, "episodes": self.episodes, "successes": self.successes,
                "success_rate": round(self.rate, 4), "distinct_plans": len(self.plans),
                "mean_expansions": round(self.expansions / self.episodes, 4) if self.episodes else 0.0,
                "failure_causes": dict(sorted(self.causes.items())), "tokens": dict(sorted(self.tokens.items()))}

    def table(self) -> str:
        s = self.summary()
        lines = [f"task            {s['task']}", f"episodes        {s['episodes']}",
                 f"successes       {s['successes']} ({100 * s['success_rate']:.1f}%)",
                 f"distinct plans  {s['distinct_plans']}", f"mean expansions {s['mean_expansions']}"]
        for cause, n in s["failure_causes"].items():
            lines.append(f"  failed: {cause:<16} {n}")
        if s["tokens"]:
            lines.append("tokens          " + ", ".join(f"{k}={v}" for k, v in s["tokens"].items()))
        return "\n".join(lines)


def _record(scene, state, steps, task, cfg: ExecConfig):
    """Re-run a finished plan from the start with recording on."""
    return Executor(scene, ExecConfig(cfg.eps_attach, cfg.eps_align, cfg.openness_moment, cfg.valuable,
                                      cfg.solver, True)).execute(state, Plan(tuple(steps), "replay"), task)


def run_episode(task: TaskSpec, seed: int, episode: int, proposer, search_cfg: SearchConfig | None = None,
                exec_cfg: ExecConfig = ExecConfig(), record: bool = True) -> EpisodeResult:
    scene, state = load_scene(episode_config(task, seed, episode))
    tokens = None
    if search_cfg is None:
        prop = proposer.propose(ProposalRequest(task, scene, state, state, call=episode))
        cfg = exec_cfg if record else ExecConfig(exec_cfg.eps_attach, exec_cfg.eps_align, exec_cfg.openness_moment,
                                                 exec_cfg.valuable, exec_cfg.solver, False)
        out = Executor(scene, cfg).execute(state, prop.plan, task.predicate)
        sig = None
        if out.ok:
            sig = tuple(u.signature for u in combine(scene, list(prop.plan.steps), out.records))
        if prop.usage:
            tokens = {k: int(v) for k, v in prop.usage.items() if isinstance(v, int)}
        return EpisodeResult(episode, out.ok, out.status, out.cause or (prop.error and "proposal"), 1, sig,
                             out.frames if out.ok else [], None, tokens)
    usage = getattr(proposer, "usage", None)
    before = usage.as_dict() if usage is not None else {}
    res = search(task, scene, state, proposer, search_cfg)
    frames = []
    if res.ok and record:
        steps = [s for u in res.units for s in u.steps]
        frames = _record(scene, state, steps, task.predicate, exec_cfg).frames
    last = res.history[-1] if res.history else {}
    if usage is not None:
        tokens = {k: v - before[k] for k, v in usage.as_dict().items() if k.endswith("tokens")}
    return EpisodeResult(episode, res.ok, "success" if res.ok else "failed",
                         None if res.ok else (last.get("cause") or last.get("status")), res.expansions,
                         res.plan_signature() if res.ok else None, frames, res.dump(), tokens)


def run_episodes(task: TaskSpec, n: int, seed: int, proposer_kind: str = "scripted", noise_p: float = 0.0,
                 search_cfg: SearchConfig | None = None, out_dir=None, exec_cfg: ExecConfig = ExecConfig(),
                 remote_config=None) -> RunStats:
    """``n`` randomized episodes; successes become trajectory files under ``out_dir``."""
    stats = RunStats(task.name)
    base = None
    if out_dir is not None and n > 0:
        base = Path(out_dir) / task.name / str(seed)
        base.mkdir(parents=True, exist_ok=True)
    shared = make_proposer(proposer_kind, noise_p, seed, 0, remote_config) if proposer_kind == "remote" else None
    for i in range(n):
        proposer = shared or make_proposer(proposer_kind, noise_p, seed, i)
        cfg = None if search_cfg is None else SearchConfig(search_cfg.gamma, search_cfg.n_max,
                                                            seed * 1_000_003 + i, search_cfg.exec_cfg)
        r = run_episode(task, seed, i, proposer, cfg, exec_cfg, record=base is not None)
        stats.add(r)
        if base is None:
            continue
        if r.success:
            header = {"task": task.name, "seed": seed, "episode": i, "success": True,
                      "scene": episode_config(task, seed, i), "plan_id": plan_id(r.signature)}
            write_traj(base / f"episode_{i}.traj", header, r.frames)
        if r.tree is not None:
            (base / f"tree_{i}.json").write_text(json.dumps(r.tree, sort_keys=True, indent=1) + "\n")
    if base is not None:
        write_stats(base / "stats.csv", stats)
    return stats


def write_stats(path, stats: RunStats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=STATS_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in stats.rows:
            w.writerow(row)


# ---------------------------------------------------------------- search vs single shot

def distinct_curve(signatures) -> list[int]:
    """Running count of distinct plans after each success."""
    seen, out = set(), []
    for sig in signatures:
        seen.add(plan_id(sig))
        out.append(len(seen))
    return out


def two_proportion_z(s1: int, n1: int, s2: int, n2: int) -> tuple[float, float]:
    """z statistic and one-sided p-value for rate 1 exceeding rate 2 (pooled variance)."""
    p1, p2 = s1 / n1, s2 / n2
    pool = (s1 + s2) / (n1 + n2)
    se = math.sqrt(pool * (1 - pool) * (1 / n1 + 1 / n2))
    if se == 0:  # both rates are 0 or both are 1
        return 0.0, 0.5
    z = (p1 - p2) / se
    return z, 0.5 * math.erfc(z / math.sqrt(2))


@dataclass
class ModeResult:
    label: str
    n_max: int | None
    trials: int
    successes: int
    expansions: int
    signatures: list  # successful plan signatures in trial order

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def row(self, checkpoints=20) -> dict:
        curve = distinct_curve(self.signatures[:checkpoints])
        return {"mode": self.label, "n_max": self.n_max or 1, "trials": self.trials, "successes": self.successes,
                "success_rate": round(self.rate, 4),
                "mean_expansions": round(self.expansions / self.trials, 4) if self.trials else 0.0,
                "distinct_plans": curve[-1] if curve else 0}


def compare_mcts(task: TaskSpec, noise_p: float, n_max_list, trials: int, seed: int = 0,
                 gamma: float = 0.95, proposer_kind: str = "noisy") -> list[ModeResult]:
    """Single proposal executed once versus search with each budget, on the same episodes."""
    single = ModeResult("single", None, trials, 0, 0, [])
    modes = [ModeResult("mcts", n, trials, 0, 0, []) for n in n_max_list]
    for i in range(trials):
        for m in [single] + modes:
            proposer = make_proposer(proposer_kind, noise_p, seed, i)
            cfg = SearchConfig(gamma, m.n_max or 1, seed * 1_000_003 + i)
            r = run_episode(task, seed, i, proposer, cfg, record=False)
            m.successes += int(r.success)
            m.expansions += r.expansions
            if r.success:
                m.signatures.append(r.signature)
    return [single] + modes


def comparison_table(results: list[ModeResult]) -> str:
    rows = [r.row() for r in results]
    head = f"{'mode':<8}{'n_max':>6}{'trials':>8}{'success':>9}{'rate':>8}{'expand':>8}{'distinct':>10}"
    lines = [head]
    for r in rows:
        lines.append(f"{r['mode']:<8}{r['n_max']:>6}{r['trials']:>8}{r['successes']:>9}"
                     f"{100 * r['success_rate']:>7.1f}%{r['mean_expansions']:>8.2f}{r['distinct_plans']:>10}")
    return "\n".join(lines)


def diversity_curves(task: TaskSpec, noise_p: float, n_max_list, successes: int = 20, seed: int = 0,
                     scene_episode: int = 0, max_trials: int = 400, gamma: float = 0.95,
                     proposer_kind: str = "noisy") -> dict:
    """Distinct-plan count after each of the first ``successes`` successes, on one fixed scene.

    Signatures carry grid cells, so plans from different randomized scenes are
    almost always distinct; diversity is only meaningful on a shared scene.
    Trials differ by proposer seed alone.  Key 1 is the single-shot mode.
    """
    out = {}
    for n_max in [1] + [n for n in n_max_list if n != 1]:
        sigs, trial = [], 0
        while len(sigs) < successes and trial < max_trials:
            proposer = make_proposer(proposer_kind, noise_p, seed, trial)
            cfg = SearchConfig(gamma, n_max, seed * 1_000_003 + trial)
            r = run_episode(task, seed, scene_episode, proposer, cfg, record=False)
            if r.success:
                sigs.append(r.signature)
            trial += 1
        out[n_max] = distinct_curve(sigs)
    return out
