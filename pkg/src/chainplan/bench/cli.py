"""Command-line entry point: ``chainplan <verb> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..executor.executor import ExecConfig, execute_plan
from ..proposer.remote import RemoteConfigError
from ..scaling import FrameError, TABLE_FRAME, derive_transform, load_room_frame, rebase_scene, residual_gap
from ..scene.scene import load_scene
from ..search.mcts import SearchConfig
from .dataset import export_dataset
from .runner import (comparison_table, compare_mcts, diversity_curves, make_proposer, run_episode,
                     run_episodes, two_proportion_z)
from .tasks import TASKS, episode_config, get_task

EXIT_OK, EXIT_HARNESS, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


def _tasks(name: str) -> list:
    if name == "all":
        return list(TASKS.values())
    try:
        return [get_task(name)]
    except KeyError:
        raise ConfigError(f"unknown task {name!r}; known: {', '.join(TASKS)}") from None


def _search_cfg(args) -> SearchConfig:
    try:
        return SearchConfig(gamma=args.gamma, n_max=_n_max_list(args.n_max)[0], seed=args.seed)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _n_max_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --n-max {text!r}") from None
    if not vals or min(vals) < 1:
        raise ConfigError("--n-max values must be positive")
    return vals


def _check_common(args) -> None:
    if getattr(args, "episodes", 0) < 0:
        raise ConfigError("--episodes must be non-negative")
    if not 0.0 <= getattr(args, "noise_p", 0.0) <= 1.0:
        raise ConfigError("--noise-p must lie in [0, 1]")
    if getattr(args, "proposer", "scripted") == "remote":
        try:
            make_proposer("remote")
        except RemoteConfigError as e:
            raise ConfigError(str(e)) from None


def cmd_run(args, force_search: bool = False) -> int:
    _check_common(args)
    tasks = _tasks(args.task)
    cfg = _search_cfg(args) if (args.mcts or force_search) else None
    rows = []
    for task in tasks:
        stats = run_episodes(task, args.episodes, args.seed, args.proposer, args.noise_p, cfg, args.out)
        print(stats.table())
        print()
        rows.append(stats.summary())
    if args.json:
        print(json.dumps(rows, sort_keys=True))
    return EXIT_OK


def cmd_search(args) -> int:
    return cmd_run(args, force_search=True)


def cmd_compare(args) -> int:
    _check_common(args)
    n_list = _n_max_list(args.n_max)
    _search_cfg(args)
    out = []
    for task in _tasks(args.task):
        results = compare_mcts(task, args.noise_p, n_list, args.episodes, args.seed, args.gamma, args.proposer)
        print(f"{task.name}, noise p={args.noise_p}")
        print(comparison_table(results))
        single = results[0]
        for m in results[1:]:
            z, pval = two_proportion_z(m.successes, m.trials, single.successes, single.trials)
            print(f"n_max={m.n_max}: {100 * (m.rate - single.rate):+.1f} points, z={z:.2f}, one-sided p={pval:.3g}")
        curves = {}
        if args.diversity:
            curves = diversity_curves(task, args.noise_p, n_list, args.diversity, args.seed, gamma=args.gamma,
                                      proposer_kind=args.proposer)
            for n, c in curves.items():
                print(f"distinct plans, n_max={n}: {c}")
        print()
        out.append({"task": task.name, "noise_p": args.noise_p, "rows": [r.row() for r in results],
                    "diversity": {str(k): v for k, v in curves.items()}})
    if args.json:
        print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_export(args) -> int:
    if not args.out or not Path(args.out).is_dir():
        raise ConfigError(f"--out {args.out!r} is not a run directory")
    m = export_dataset(args.out)
    print(f"{len(m['episodes'])} episodes, {len(m['errors'])} errors -> {Path(args.out) / 'manifest.json'}")
    for e in m["errors"]:
        print(f"  {e['file']}: {e['error']}")
    return EXIT_OK


def cmd_rebase(args) -> int:
    if not args.room_frame:
        raise ConfigError("rebase needs --room-frame")
    try:
        room = load_room_frame(args.room_frame)
    except (OSError, FrameError) as e:
        raise ConfigError(str(e)) from None
    T = derive_transform(TABLE_FRAME, room.frame)
    out = []
    for task in _tasks(args.task):
        scene, state = load_scene(episode_config(task, args.seed, 0))
        plan = task.canonical_plan()
        cfg = ExecConfig(record=False)
        base = execute_plan(scene, state, plan, task.predicate, cfg)
        scene2, state2 = rebase_scene(scene, state, T, room.boxes)
        moved = execute_plan(scene2, state2, plan, task.predicate, cfg)
        gap = residual_gap(base.residual_log(), moved.residual_log())
        print(f"{task.name}: table {base.status}, room {moved.status}, residual gap {gap:.3g}")
        out.append({"task": task.name, "table_status": base.status, "room_status": moved.status,
                    "residual_gap": gap, "transform": T.to_list(),
                    "objects": {f"{k[0]}:{k[1]}": p.to_list() for k, p in sorted(state2.object_poses.items())}})
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_dump_tree(args) -> int:
    _check_common(args)
    task = _tasks(args.task)[0]
    cfg = _search_cfg(args)
    cfg = SearchConfig(cfg.gamma, cfg.n_max, args.seed * 1_000_003)
    proposer = make_proposer(args.proposer, args.noise_p, args.seed, 0)
    r = run_episode(task, args.seed, 0, proposer, cfg, record=False)
    text = json.dumps(r.tree, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        print(f"{r.status} after {r.expansions} expansions, {len(r.tree['nodes'])} nodes -> {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chainplan", description="Randomized manipulation episodes and plan search.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, episodes=10):
        sp.add_argument("--task", default="blocks_stack_easy", help="task name or 'all'")
        sp.add_argument("--episodes", type=int, default=episodes)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--proposer", choices=("scripted", "noisy", "remote"), default="scripted")
        sp.add_argument("--noise-p", type=float, default=0.0)
        sp.add_argument("--n-max", default="8", help="expansion budget; compare accepts a comma list")
        sp.add_argument("--gamma", type=float, default=0.95)
        sp.add_argument("--out", default=None)
        sp.add_argument("--json", action="store_true", help="also print machine-readable rows")

    sp = sub.add_parser("run", help="run randomized episodes")
    common(sp)
    sp.add_argument("--mcts", action="store_true", help="search instead of executing one proposal")
    sp.set_defaults(fn=cmd_run)
    sp = sub.add_parser("search", help="run episodes with tree search")
    common(sp)
    sp.set_defaults(fn=cmd_search, mcts=True)
    sp = sub.add_parser("compare", help="single proposal versus search")
    common(sp, episodes=50)
    sp.add_argument("--diversity", type=int, default=0, metavar="K",
                    help="also count distinct plans over the first K successes on one scene")
    sp.set_defaults(fn=cmd_compare, proposer="noisy")
    sp = sub.add_parser("export", help="write a manifest for a run directory")
    sp.add_argument("--out", required=True, help="run directory")
    sp.set_defaults(fn=cmd_export)
    sp = sub.add_parser("rebase", help="execute a task's scripted plan in a room frame")
    sp.add_argument("--task", default="open_drawer")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--room-frame", required=False)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_rebase)
    sp = sub.add_parser("dump-tree", help="run one search and dump its tree as JSON")
    common(sp, episodes=1)
    sp.set_defaults(fn=cmd_dump_tree, proposer="noisy", noise_p=0.4)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - any crash inside the harness
        print(f"harness error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_HARNESS


if __name__ == "__main__":
    sys.exit(main())
