import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainplan.bench.runner import make_proposer
from chainplan.bench.tasks import TASKS
from chainplan.executor.steps import INIT_POSE, Step, Target
from chainplan.proposer.base import Proposer, proposal_from_text
from chainplan.proposer.dsl import render_plan
from chainplan.proposer.scripted import ScriptedProposer
from chainplan.scene.state import snapshot
from chainplan.search.mcts import (EMPTY, EdgeStats, Search, SearchConfig, Tree, backpropagate, q_ducb, refold,
                                   search, select)
from chainplan.search.stcr import BranchUnit, cell_of, group_indices, truncate
from conftest import _scene


def S(kind, hand="left"):
    if kind == "move":
        return Step("move", hand, targets=(Target(hand, pose=INIT_POSE),))
    if kind in ("grasp", "pinch"):
        return Step(kind, hand, ("cube", 0))
    return Step(kind, hand)


def kinds(*names):
    return [S(n) for n in names]


# ---------------------------------------------------------------- combine rule

def test_grasp_with_two_moves_is_one_unit():
    assert group_indices(kinds("pre_grasp", "move", "move", "grasp")) == [[0, 1, 2, 3]]


@pytest.mark.parametrize("names, groups", [
    (("pre_pinch", "move", "pinch", "move", "move", "open", "move"), [[0, 1, 2], [3], [4, 5], [6]]),
    (("move", "pre_grasp", "move", "grasp"), [[0], [1, 2, 3]]),
    (("open",), [[0]]),
    (("pre_pinch", "move"), [[0, 1]]),
    (("pre_grasp", "pre_pinch", "move", "pinch"), [[0], [1, 2, 3]]),
    ((), []),
])
def test_group_indices_hand_cases(names, groups):
    assert group_indices(kinds(*names)) == groups


@given(st.lists(st.sampled_from(["pre_grasp", "pre_pinch", "move", "grasp", "pinch", "open"]), max_size=12))
def test_groups_partition_steps_in_order(names):
    flat = [i for g in group_indices(kinds(*names)) for i in g]
    assert flat == list(range(len(names)))


def test_truncate_keeps_prefix():
    class Out:
        status, failed_step = "failed", 2
    steps = kinds("pre_grasp", "move", "grasp", "open")
    assert truncate(Out, steps) == (steps[:2], 2)
    Out.status = "incomplete"
    assert truncate(Out, steps) == (steps, None)


def test_cell_of_uses_canonical_two_cm_grid():
    scene, _ = _scene("blocks_stack_easy", 0, 0)
    p = scene.frame.transform_point(np.array([0.031, -0.001, 0.02]))
    assert cell_of(scene, p) == (1, -1, 1)
    assert cell_of(scene, None) == ()


def test_branch_unit_needs_steps():
    with pytest.raises(ValueError):
        BranchUnit((), ())


# ---------------------------------------------------------------- discounted statistics

def test_q_ducb_hand_value():
    e = EdgeStats(0.5)
    e.add(1.0)
    e.add(0.0)
    # W = 0.5 * 1 + 0 ; N = 0.5 + 1
    assert e.w == 0.5 and e.n_gamma == 1.5
    assert q_ducb(e, 3.0) == pytest.approx(1 / 3 + math.sqrt(2 * math.log(3.0) / 1.5))
    assert q_ducb(EdgeStats(0.5), 3.0) == math.inf


@given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=200), st.floats(0.5, 0.999))
def test_incremental_matches_refold(rewards, gamma):
    e = EdgeStats(gamma)
    for r in rewards:
        e.add(r)
    w, n = refold(rewards, gamma)
    assert abs(e.w - w) <= 1e-12 and abs(e.n_gamma - n) <= 1e-12


def test_config_validation():
    for kw in (dict(gamma=1.0), dict(gamma=0.0), dict(n_max=0)):
        with pytest.raises(ValueError):
            SearchConfig(**kw)


# ---------------------------------------------------------------- tree mechanics

def _tree():
    scene, state = _scene("block_stack_single", 0, 0)
    return Tree(scene, TASKS["block_stack_single"], state, 0.9), state


def test_select_breaks_ties_lexicographically_empty_last():
    tree, state = _tree()
    open_sig = (("left", "open", "", ()),)
    move_sig = (("left", "move", "init", ()),)
    tree.add_node(tree.root, BranchUnit((S("open"),), open_sig), snapshot(state))
    tree.add_node(tree.root, BranchUnit((S("move"),), move_sig), snapshot(state))
    assert tree.choices(tree.root) == [move_sig, open_sig, EMPTY]
    node, path = select(tree)
    assert path[0] == (0, move_sig)
    # the move child is a leaf: its only choice is EMPTY
    assert path[-1] == (node.id, EMPTY)
    backpropagate(tree, path, 0.0)
    assert select(tree)[1][0] == (0, open_sig)
    backpropagate(tree, select(tree)[1], 0.0)
    assert select(tree)[1][0] == (0, EMPTY)


def test_scripted_search_succeeds_first_expansion():
    scene, state = _scene("blocks_stack_easy", 0, 0)
    res = search(TASKS["blocks_stack_easy"], scene, state, ScriptedProposer(), SearchConfig(n_max=4))
    assert res.ok and res.expansions == 1
    assert [s for u in res.units for s in u.steps] == list(TASKS["blocks_stack_easy"].canonical_plan().steps)


class FailsFirstMove(Proposer):
    """Shape the fingers, then reach for a point far outside the workspace."""

    def propose(self, request):
        bad = [Step("pre_pinch", "left"),
               Step("move", "left", targets=(Target("left", pose=(0.3, 0.9, 0.5, 1, 0, 0, 0)),))]
        return proposal_from_text(render_plan([bad]))


def test_failing_proposer_grows_prohibited_sets_and_fails():
    scene, state = _scene("block_stack_single", 0, 0)
    s = Search(scene, TASKS["block_stack_single"], state, FailsFirstMove(), SearchConfig(n_max=6))
    sizes = []
    for _ in range(6):
        node, path = select(s.tree)
        res = s.expand(node)
        backpropagate(s.tree, path, res.reward)
        sizes.append(sum(len(n.prohibited) for n in s.tree.nodes))
        assert not res.success and res.reward == 0.0
    assert sizes == sorted(sizes) and sizes[-1] >= 1
    assert s.run().status == "failed"


class Raises(Proposer):
    def propose(self, request):
        raise RuntimeError("outage")


def test_proposer_exception_is_a_failed_expansion():
    scene, state = _scene("block_stack_single", 0, 0)
    res = search(TASKS["block_stack_single"], scene, state, Raises(), SearchConfig(n_max=3))
    assert res.status == "failed" and all(h["reward"] == 0.0 for h in res.history)
    assert len(res.tree.nodes) == 1


def _noisy_search(seed, p=0.5, n_max=6, task="blocks_stack_hard"):
    scene, state = _scene(task, 0, seed % 3)
    prop = make_proposer("noisy", p, seed, 0)
    return search(TASKS[task], scene, state, prop, SearchConfig(n_max=n_max, seed=seed))


@settings(max_examples=8)
@given(st.integers(0, 500))
def test_children_are_deduplicated(seed):
    res = _noisy_search(seed)
    for node in res.tree.nodes:
        kids = [res.tree.nodes[c] for c in node.children.values()]
        assert len({k.unit.signature for k in kids}) == len(kids)
        assert all(node.children[k.unit.signature] == k.id for k in kids)


def test_search_dump_is_deterministic():
    a = json.dumps(_noisy_search(17).dump(), sort_keys=True)
    b = json.dumps(_noisy_search(17).dump(), sort_keys=True)
    assert a == b


def test_edge_visits_sum_to_expansions():
    res = _noisy_search(5)
    root = res.tree.root
    assert sum(root.edges[c].n for c in res.tree.choices(root)) == res.expansions
