import json
from pathlib import Path

import pytest

from rexforge.interpreter import default_config
from rexforge.program import parse_program
from rexforge.scene import parse_regions, parse_scene

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def plate_table_scene():
    return parse_scene(json.loads((DATA / "plate_table_scene.json").read_text()))


@pytest.fixture(scope="session")
def plate_table_regions():
    return parse_regions(json.loads((DATA / "plate_table_regions.json").read_text()))


@pytest.fixture(scope="session")
def plate_table_program():
    return parse_program(json.loads((DATA / "plate_table_program.json").read_text()))


@pytest.fixture(scope="session")
def exec_config():
    return default_config()
