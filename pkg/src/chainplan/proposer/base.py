"""Proposer interface: what a proposer is asked and what it returns."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..executor.steps import Plan
from .dsl import DSLError, extract_blocks, parse_block

OK = "ok"
SKIPPED = "skipped"


@dataclass(frozen=True)
class ProposalRequest:
    """Everything a proposer may look at when asked for the rest of a plan.

    ``executed`` holds the step groups already run on the way to ``state``
    (root-to-node branch units during a search).  ``call`` numbers the
    requests of one search so seeded proposers stay reproducible.
    """

    task: object
    scene: object
    initial_state: object
    state: object
    executed: tuple = ()
    prohibited: tuple = ()
    error_context: str | None = None
    call: int = 0

    def executed_steps(self) -> list:
        return [s for group in self.executed for s in group]


@dataclass
class Proposal:
    text: str
    plan: Plan
    # one entry per fenced block: OK, an error message, or SKIPPED after the first error
    statuses: list = field(default_factory=list)
    error: str | None = None
    usage: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def valid_blocks(self) -> int:
        return sum(1 for s in self.statuses if s == OK)


def proposal_from_text(text: str, provenance: str = "proposed", **kw) -> Proposal:
    """Parse a reply; the first bad block ends the plan and is reported."""
    blocks = extract_blocks(text)
    steps, statuses, parse_error = [], [], None
    for i, code in enumerate(blocks):
        if parse_error is not None:
            statuses.append(SKIPPED)
            continue
        try:
            group = parse_block(code)
        except DSLError as e:
            parse_error = (i, str(e))
            statuses.append(str(e))
            continue
        steps.extend(s.with_block(i) for s in group)
        statuses.append(OK)
    n_ok = parse_error[0] if parse_error is not None else len(blocks)
    plan = Plan(tuple(steps), provenance, blocks=n_ok, parse_error=parse_error)
    err = None if parse_error is None else f"block {parse_error[0]}: {parse_error[1]}"
    return Proposal(text, plan, statuses, error=err, **kw)


def empty_proposal(error: str, text: str = "", **kw) -> Proposal:
    return Proposal(text, Plan((), "proposed"), [], error=error, **kw)


class Proposer:
    name = "proposer"

    def propose(self, request: ProposalRequest) -> Proposal:
        raise NotImplementedError
