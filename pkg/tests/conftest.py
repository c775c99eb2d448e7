"""Shared fixtures: builtin scenarios are run once per session and cached."""
import pytest

from triadsim import list_builtins, load_builtin, run_scenario

BUILTIN_NAMES = [name for name, _ in list_builtins()]


@pytest.fixture(scope="session")
def builtin_results():
    """Full-horizon run of every bundled scenario, keyed by name."""
    return {name: run_scenario(load_builtin(name)) for name in BUILTIN_NAMES}
