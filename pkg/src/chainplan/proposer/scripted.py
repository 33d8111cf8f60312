"""Deterministic proposer replaying a task's canonical plan."""

from __future__ import annotations

from .base import Proposal, Proposer, ProposalRequest, proposal_from_text
from .dsl import render_plan


def _key(step) -> tuple:
    return (step.kind, step.hand)


def remaining_blocks(canonical: list[list], executed_steps) -> list[list]:
    """Canonical step groups still to run after ``executed_steps``.

    Executed steps are matched in order against the canonical sequence by
    (kind, hand); steps with no counterpart are skipped.  A group that was
    partly run is returned as its unfinished tail.
    """
    flat = [(b, s) for b, group in enumerate(canonical) for s in group]
    i = 0
    for step in executed_steps:
        j = i
        while j < len(flat) and _key(flat[j][1]) != _key(step):
            j += 1
        if j < len(flat):
            i = j + 1
    out: list[list] = []
    last = None
    for b, s in flat[i:]:
        if b != last:
            out.append([])
            last = b
        out[-1].append(s)
    return out


class ScriptedProposer(Proposer):
    name = "scripted"

    def blocks(self, request: ProposalRequest) -> list[list]:
        return remaining_blocks(request.task.canonical_blocks(), request.executed_steps())

    def render(self, blocks: list[list], provenance: str, **meta) -> Proposal:
        text = render_plan(blocks) if blocks else ""
        prop = proposal_from_text(text, provenance)
        prop.meta.update(meta)
        return prop

    def propose(self, request: ProposalRequest) -> Proposal:
        return self.render(self.blocks(request), "scripted")
