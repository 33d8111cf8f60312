"""Tree search over branch units with discounted UCB selection.

Each expansion restores a node's world state, asks the proposer for the rest
of the plan, executes it, and grows the tree by the units that ran.  There
are no separate rollouts: the execution inside an expansion is the
simulation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from ..executor.executor import ExecConfig, Executor
from ..executor.steps import Plan
from ..executor.success import check_success
from ..proposer.base import ProposalRequest, empty_proposal
from ..proposer.dsl import render_plan
from ..scene.state import Snapshot, snapshot
from .stcr import BranchUnit, combine, failed_unit_signature, segment, truncate

EMPTY = None  # the choice that stops the walk and expands the current node


@dataclass(frozen=True)
class SearchConfig:
    gamma: float = 0.95
    n_max: int = 8
    seed: int = 0
    exec_cfg: ExecConfig = ExecConfig(record=False)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie strictly between 0 and 1")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")


def refold(rewards, gamma: float) -> tuple[float, float]:
    """Discounted reward sum and count, recomputed from the whole reward list."""
    n = len(rewards)
    w = sum(gamma ** (n - t) * r for t, r in enumerate(rewards, start=1))
    c = sum(gamma ** t for t in range(n))
    return w, c


@dataclass
class EdgeStats:
    """Rewards of every trajectory through one (node, choice) pair, oldest first."""

    gamma: float
    rewards: list = field(default_factory=list)
    w: float = 0.0
    n_gamma: float = 0.0

    @property
    def n(self) -> int:
        return len(self.rewards)

    def add(self, reward: float) -> None:
        self.rewards.append(float(reward))
        # older rewards fade by one more factor of gamma
        self.w = self.gamma * self.w + reward
        self.n_gamma = self.gamma * self.n_gamma + 1.0

    def mean(self) -> float:
        return self.w / self.n_gamma


def q_ducb(stats: EdgeStats, total: float) -> float:
    """Discounted UCB value of one edge; ``total`` sums n_gamma over the node's choices."""
    if stats.n == 0:
        return math.inf
    return stats.mean() + math.sqrt(2.0 * math.log(total) / stats.n_gamma)


@dataclass
class TreeNode:
    id: int
    parent: int | None
    unit: BranchUnit | None
    snapshot: Snapshot
    depth: int = 0
    children: dict = field(default_factory=dict)  # signature -> node id
    edges: dict = field(default_factory=dict)  # signature or EMPTY -> EdgeStats
    prohibited: set = field(default_factory=set)
    error_context: dict | None = None
    terminal: bool = False


def _order(choice) -> tuple:
    # child signatures in lexicographic order, EMPTY last
    return (1,) if choice is EMPTY else (0, choice)


@dataclass
class ExpansionResult:
    created: list
    reached: int
    reward: float
    success: bool
    status: str
    cause: str | None = None
    proposal_error: str | None = None


class Tree:
    def __init__(self, scene, task, initial_state, gamma: float):
        self.scene = scene
        self.task = task
        self.initial_state = initial_state.copy()
        self.gamma = gamma
        self.nodes: list[TreeNode] = []
        self.add_node(None, None, snapshot(initial_state))

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def add_node(self, parent: TreeNode | None, unit: BranchUnit | None, snap: Snapshot) -> TreeNode:
        node = TreeNode(len(self.nodes), None if parent is None else parent.id, unit, snap,
                        0 if parent is None else parent.depth + 1)
        node.edges[EMPTY] = EdgeStats(self.gamma)
        self.nodes.append(node)
        if parent is not None:
            parent.children[unit.signature] = node.id
            parent.edges[unit.signature] = EdgeStats(self.gamma)
        return node

    def units_to(self, node: TreeNode) -> list[BranchUnit]:
        out = []
        while node.unit is not None:
            out.append(node.unit)
            node = self.nodes[node.parent]
        return out[::-1]

    def choices(self, node: TreeNode) -> list:
        return sorted(list(node.children) + [EMPTY], key=_order)

    def values(self, node: TreeNode) -> dict:
        total = sum(node.edges[c].n_gamma for c in self.choices(node))
        return {c: q_ducb(node.edges[c], total) for c in self.choices(node)}

    # -------------------------------------------------------- dump
    def dump(self) -> dict:
        nodes, edges = [], []
        for n in self.nodes:
            nodes.append({
                "id": n.id, "parent": n.parent, "depth": n.depth, "terminal": n.terminal,
                "unit": None if n.unit is None else {"signature": _jsonable(n.unit.signature),
                                                     "code": render_plan([list(n.unit.steps)])},
                "prohibited": sorted(_jsonable(p) for p in n.prohibited),
                "error_context": n.error_context,
            })
            for choice in self.choices(n):
                st = n.edges[choice]
                edges.append({"node": n.id, "child": None if choice is EMPTY else n.children[choice],
                              "rewards": st.rewards, "n": st.n})
        return {"gamma": self.gamma, "nodes": nodes, "edges": edges}


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


def select(tree: Tree) -> tuple[TreeNode, list]:
    """Walk from the root by highest value; choosing EMPTY stops at that node."""
    node = tree.root
    path = []
    while True:
        vals = tree.values(node)
        best = max(tree.choices(node), key=lambda c: vals[c])  # max keeps the first of equals
        path.append((node.id, best))
        if best is EMPTY:
            return node, path
        node = tree.nodes[node.children[best]]


def backpropagate(tree: Tree, path: list, reward: float) -> None:
    for node_id, choice in path:
        tree.nodes[node_id].edges[choice].add(reward)


class Search:
    def __init__(self, scene, task, initial_state, proposer, config: SearchConfig = SearchConfig()):
        self.scene = scene
        self.task = task
        self.proposer = proposer
        self.config = config
        self.tree = Tree(scene, task, initial_state, config.gamma)
        self.executor = Executor(scene, config.exec_cfg)
        self.calls = 0
        self.history: list[dict] = []

    def _propose(self, node: TreeNode, state):
        req = ProposalRequest(
            self.task, self.scene, self.tree.initial_state, state,
            executed=tuple(u.steps for u in self.tree.units_to(node)),
            prohibited=tuple(sorted(node.prohibited)),
            error_context=None if node.error_context is None else json.dumps(node.error_context, sort_keys=True),
            call=self.config.seed * 1_000_003 + self.calls,
        )
        self.calls += 1
        try:
            return self.proposer.propose(req)
        except Exception as e:  # a proposer bug or outage is a failed expansion, never a crash
            return empty_proposal(f"proposer raised {type(e).__name__}: {e}")

    def expand(self, node: TreeNode) -> ExpansionResult:
        state = node.snapshot.restore()
        prop = self._propose(node, state)
        plan: Plan = prop.plan
        steps = segment(plan)
        if not steps and plan.parse_error is None:
            return ExpansionResult([], node.id, 0.0, False, "empty", None, prop.error)
        out = self.executor.execute(state, plan, self.task.predicate, keep_states=True)
        kept, k = truncate(out, steps)
        units = combine(self.scene, kept, out.records)
        reward = 1.0 if out.valuable else 0.0
        created = []
        cur = node
        synced = True  # cur's snapshot equals the live execution state
        complete = True
        for u in units:
            live = out.step_states[u.end]
            if u.signature in cur.children:
                cur = self.tree.nodes[cur.children[u.signature]]
                synced = synced and cur.snapshot.restore().equals(live)
                continue
            if not synced:
                # an earlier unit matched an existing branch whose state differs slightly;
                # replay this unit from that branch so the node's snapshot is reproducible
                replay = self.executor.execute(cur.snapshot.restore(), Plan(u.steps, "replay"), None)
                if replay.status != "success":
                    complete = False
                    break
                again = combine(self.scene, list(u.steps), replay.records)
                if len(again) == 1:
                    u = BranchUnit(u.steps, again[0].signature, u.end)
                if u.signature in cur.children:
                    cur = self.tree.nodes[cur.children[u.signature]]
                    synced = cur.snapshot.restore().equals(replay.state)
                    continue
                live = replay.state
            child = self.tree.add_node(cur, u, snapshot(live))
            created.append(child.id)
            cur = child
        if k is not None:
            sig = failed_unit_signature(self.scene, steps, out.records, k)
            if sig:
                cur.prohibited.add(sig)
            cur.error_context = {"step": k, "cause": out.cause, "message": out.message}
        elif plan.parse_error is not None:
            cur.error_context = {"step": len(steps), "cause": "parse_error", "message": prop.error}
        success = False
        if out.status == "success" and complete and units:
            success = check_success(self.task.predicate, self.scene, cur.snapshot.restore())
            cur.terminal = success
        return ExpansionResult(created, cur.id, reward, success, out.status, out.cause, prop.error)

    def run(self) -> "SearchResult":
        for it in range(self.config.n_max):
            node, path = select(self.tree)
            res = self.expand(node)
            backpropagate(self.tree, path, res.reward)
            self.history.append({"expansion": it, "node": node.id, "reached": res.reached, "status": res.status,
                                 "cause": res.cause, "reward": res.reward, "created": res.created})
            if res.success:
                units = self.tree.units_to(self.tree.nodes[res.reached])
                return SearchResult("success", it + 1, units, self.tree, self.history, self.config.n_max)
        best = max(self.tree.nodes, key=lambda n: (n.depth, -n.id))
        return SearchResult("failed", self.config.n_max, self.tree.units_to(best), self.tree, self.history,
                            self.config.n_max)


@dataclass
class SearchResult:
    status: str
    expansions: int
    units: list  # successful plan, or the deepest partial one
    tree: Tree
    history: list
    n_max: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "success"

    @property
    def depth(self) -> int:
        return len(self.units)

    def plan_signature(self) -> tuple:
        return tuple(u.signature for u in self.units)

    def plan_text(self) -> str:
        return render_plan([list(u.steps) for u in self.units]) if self.units else ""

    def dump(self) -> dict:
        d = self.tree.dump()
        d.update({"status": self.status, "expansions": self.expansions, "n_max": self.n_max,
                  "plan": self.plan_text() if self.ok else None,
                  "plan_signature": _jsonable(self.plan_signature()) if self.ok else None,
                  "best_depth": self.depth, "history": self.history})
        return d


def search(task, scene, initial_state, proposer, config: SearchConfig = SearchConfig()) -> SearchResult:
    return Search(scene, task, initial_state, proposer, config).run()
