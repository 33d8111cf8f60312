import functools

import pytest
from hypothesis import HealthCheck, settings

from chainplan.bench.tasks import TASKS, episode_config
from chainplan.scene.scene import load_scene

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE: dict = {}


@functools.lru_cache(maxsize=None)
def _scene(task: str, seed: int, episode: int):
    return load_scene(episode_config(TASKS[task], seed, episode))


@pytest.fixture
def scene_of():
    """(scene, fresh state) for a task episode; scenes are cached, states are copies."""
    def get(task="blocks_stack_easy", seed=0, episode=0):
        scene, state = _scene(task, seed, episode)
        return scene, state.copy()
    return get


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
