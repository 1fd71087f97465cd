import functools
from pathlib import Path

import pytest

from synthforge.asset_store import AssetStore
from synthforge.demo_assets import build_demo_assets

DATA_DIR = Path(__file__).parent / "data"

# (name, passed, detail) per acceptance criterion, printed at the end so the
# run log always carries one verdict line per criterion.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def criterion(name: str):
    """Wrap an acceptance test so it always records exactly one verdict."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException as err:
                ACCEPTANCE_RESULTS.append((name, False, str(err)[:200]))
                raise
            ACCEPTANCE_RESULTS.append((name, True, ""))

        return wrapper

    return deco


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        line = f"[ACCEPTANCE] {'PASS' if ok else 'FAIL'} - {name}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def asset_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("assets")
    build_demo_assets(root)
    return root


@pytest.fixture(scope="session")
def store(asset_dir) -> AssetStore:
    return AssetStore.from_dir(asset_dir)


@pytest.fixture(scope="session")
def config_path(asset_dir) -> Path:
    return asset_dir / "config.json"
