"""Goal-pose and path solvers over relational constraints.

Both run damped least squares in the compiled kernel and then re-verify every
hard constraint and the collision state in plain Python before accepting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..geometry import Pose, screw_interpolate
from ..kinematics.backend import kernels
from .constraint import EPS_A, EPS_P, Constraint, residual, within_bounds

_EMPTY3 = np.zeros((0, 3))
_EMPTY_BOX = np.zeros((0, 4, 4))


@dataclass(frozen=True)
class SolverConfig:
    eps_p: float = EPS_P
    eps_a: float = EPS_A
    w_reg: float = 0.05
    restarts: int = 8
    max_iter: int = 100
    w_col: float = 100.0
    margin: float = 1e-3
    seed: int = 0
    waypoints: int = 16
    path_weight: float = 10.0
    track_weight: float = 1.0
    interp_weight: float = 1e-3

    def __post_init__(self):
        if self.eps_p <= 0 or self.eps_a <= 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.waypoints < 2:
            raise ValueError("need at least 2 path segments")


@dataclass
class GoalResult:
    theta: np.ndarray
    pose: Pose
    objective: float
    residuals: list
    restart: int
    iterations: int
    feasible: bool
    contacts: list = field(default_factory=list)
    violated: list = field(default_factory=list)

    def report(self) -> dict:
        return {
            "feasible": self.feasible,
            "objective": float(self.objective),
            "residuals": [float(r) for r in self.residuals],
            "restart": self.restart,
            "iterations": self.iterations,
            "violated": list(self.violated),
            "contacts": [str(c) for c in self.contacts],
        }


class InfeasibleGoal(RuntimeError):
    def __init__(self, message: str, best: GoalResult | None = None):
        super().__init__(message)
        self.best = best

    @property
    def residuals(self):
        return [] if self.best is None else self.best.residuals


class InfeasiblePath(RuntimeError):
    def __init__(self, index: int, cause: str, contacts=None, constraint: Constraint | None = None):
        super().__init__(f"path infeasible at waypoint {index}: {cause}")
        self.index = index
        self.cause = cause
        self.contacts = contacts or []
        self.constraint = constraint


@dataclass
class PathResult:
    waypoints: list
    cost: float
    residuals: list


def _obstacle_args(obstacles):
    if obstacles is None:
        return (_EMPTY3, _EMPTY_BOX, _EMPTY3, _EMPTY3, np.zeros(0), np.zeros(4)), 0.0
    return obstacles.args(), 1.0


def canonical_order(constraints: Sequence[Constraint], cfg: SolverConfig) -> list[Constraint]:
    """Deterministic ordering so that results do not depend on list order."""
    keyed = [(tuple(c.pack(cfg.eps_p, cfg.eps_a).tolist()) + (not c.hard, c.label), i, c)
             for i, c in enumerate(constraints)]
    keyed.sort(key=lambda t: t[0])
    return [c for _, _, c in keyed]


def objective(constraints, residuals, theta, theta_nominal, w_reg) -> float:
    total = 0.0
    for c, r in zip(constraints, residuals):
        total += c.weight * r
    return total + w_reg * float(np.linalg.norm(np.asarray(theta) - theta_nominal))


def _lm(arm, start, ref, w_ref, rows, obstacles, cfg, w_col=None):
    obs, on = _obstacle_args(obstacles)
    carried, binv, bhalf, sc, sr, plane = obs
    wc = cfg.w_col * on if w_col is None else w_col
    if rows.shape[0] == 0:
        rows = np.zeros((0, 16))
    return kernels.lm_solve(
        arm.base, arm.offsets, arm.axes, arm.ee, arm.lower, arm.upper,
        np.asarray(start, dtype=float), np.asarray(ref, dtype=float), w_ref, rows,
        arm.sph_link, arm.sph_local, arm.sph_r, carried, binv, bhalf, sc, sr, plane,
        wc, cfg.margin, cfg.max_iter,
    )


def evaluate(constraints, pose: Pose, cfg: SolverConfig):
    """Independent residuals and the labels of violated hard constraints."""
    res = [residual(c, pose) for c in constraints]
    bad = [c.label or c.kind for c, r in zip(constraints, res) if c.hard and not within_bounds(c, r, cfg.eps_p, cfg.eps_a)]
    return res, bad


def solve_goal(arm, constraints: Sequence[Constraint], theta0, theta_nominal=None,
               cfg: SolverConfig = SolverConfig(), obstacles=None,
               check: Callable | None = None) -> GoalResult:
    if not constraints:
        raise ValueError("solve_goal needs at least one constraint")
    theta0 = np.asarray(theta0, dtype=float)
    nominal = arm.nominal if theta_nominal is None else np.asarray(theta_nominal, dtype=float)
    cons = canonical_order(constraints, cfg)
    rows_all = np.array([c.pack(cfg.eps_p, cfg.eps_a) for c in cons])
    rows_hard = np.array([c.pack(cfg.eps_p, cfg.eps_a) for c in cons if c.hard]).reshape(-1, 16)
    best: GoalResult | None = None
    diag: GoalResult | None = None
    for i in range(cfg.restarts):
        if i == 0:
            start = theta0
        else:
            start = np.random.default_rng([cfg.seed, i]).uniform(arm.lower, arm.upper)
        th, _, it1 = _lm(arm, start, nominal, cfg.w_reg, rows_all, obstacles, cfg)
        it2 = 0
        if rows_hard.shape[0]:
            th, _, it2 = _lm(arm, th, nominal, 0.0, rows_hard, obstacles, cfg)
        pose = arm.fk(th)
        res, bad = evaluate(cons, pose, cfg)
        contacts = [] if check is None else list(check(th))
        limits_ok = arm.within_limits(th)
        feasible = not bad and not contacts and limits_ok
        obj = objective(cons, res, th, nominal, cfg.w_reg)
        cand = GoalResult(th, pose, obj, res, i, it1 + it2, feasible, contacts, bad)
        if feasible:
            if best is None or obj < best.objective:
                best = cand
        else:
            score = (len(bad) + len(contacts), obj)
            if diag is None or score < (len(diag.violated) + len(diag.contacts), diag.objective):
                diag = cand
    if best is None:
        detail = ", ".join(diag.violated + [str(c) for c in diag.contacts[:3]]) if diag else ""
        raise InfeasibleGoal(f"no feasible goal after {cfg.restarts} restarts ({detail})", diag)
    # report residuals in the caller's constraint order
    pos = {id(c): j for j, c in enumerate(cons)}
    best.residuals = [best.residuals[pos[id(c)]] for c in constraints]
    return best


def tracking_constraints(hand: str, target: Pose, weight: float) -> list[Constraint]:
    R = target.R
    return [
        Constraint("point2point", hand, hand_point=np.zeros(3), target_point=target.p, weight=weight,
                   hard=False, label="track_origin"),
        Constraint("axis_parallel", hand, hand_axis=[1, 0, 0], target_axis=R[:, 0], weight=weight * 0.1,
                   hard=False, label="track_x"),
        Constraint("axis_parallel", hand, hand_axis=[0, 0, 1], target_axis=R[:, 2], weight=weight * 0.1,
                   hard=False, label="track_z"),
    ]


def solve_path(arm, theta_start, theta_goal, path_constraints: Sequence[Constraint] = (),
               cfg: SolverConfig = SolverConfig(), obstacles=None,
               check: Callable | None = None) -> PathResult:
    """Screw-interpolated waypoints, each projected onto the path constraints.

    Returns ``waypoints`` of length T+1 whose first and last entries are the
    requested start and goal.  ``obstacles`` may be a list (one per waypoint).
    """
    theta_start = np.array(theta_start, dtype=float)
    theta_goal = np.array(theta_goal, dtype=float)
    T = cfg.waypoints
    side = path_constraints[0].hand if path_constraints else "hand"
    p0, p1 = arm.fk(theta_start), arm.fk(theta_goal)
    path_cons = canonical_order(path_constraints, cfg)
    path_rows = [np.concatenate([[c.pack(cfg.eps_p, cfg.eps_a)[0], c.weight * cfg.path_weight],
                                 c.pack(cfg.eps_p, cfg.eps_a)[2:]]) for c in path_cons]
    waypoints = [theta_start]
    all_res = []
    prev = theta_start
    for t in range(1, T):
        s = t / T
        target = screw_interpolate(p0, p1, s)
        lin = (1.0 - s) * theta_start + s * theta_goal
        track = [c.pack(cfg.eps_p, cfg.eps_a) for c in tracking_constraints(side, target, cfg.track_weight)]
        rows = np.array(track + path_rows)
        obs = obstacles[t] if isinstance(obstacles, (list, tuple)) else obstacles
        th, _, _ = _lm(arm, prev, lin, cfg.interp_weight, rows, obs, cfg)
        pose = arm.fk(th)
        res, bad = evaluate(path_cons, pose, cfg)
        if bad:
            raise InfeasiblePath(t, f"path constraint {bad[0]} violated", constraint=path_cons[
                [c.label or c.kind for c in path_cons].index(bad[0])])
        if not arm.within_limits(th):
            raise InfeasiblePath(t, "joint limits")
        if check is not None:
            contacts = list(check(th))
            if contacts:
                raise InfeasiblePath(t, "collision " + ", ".join(str(c) for c in contacts[:3]), contacts)
        all_res.append(res)
        waypoints.append(th)
        prev = th
    waypoints.append(theta_goal)
    cost = float(sum(np.sum((waypoints[i + 1] - waypoints[i]) ** 2) for i in range(len(waypoints) - 1)))
    return PathResult(waypoints, cost, all_res)
