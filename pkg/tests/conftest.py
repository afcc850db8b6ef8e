import numpy as np
import pytest
from hypothesis import settings

from hotplate import geometry as G
from hotplate.materials import UM, builtin_table

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def table():
    return builtin_table()


def bar_device(h, length=400 * UM, width=12 * UM, table=None, **kw):
    return G.voxelize([G.straight_bar(length, width, **kw)], G.STACKS["poly_only"], h,
                      table or builtin_table())


@pytest.fixture(scope="session")
def r2_device(table):
    return G.voxelize(G.preset_layouts("R2"), G.STACKS["poly_only"], 4 * UM, table)


@pytest.fixture(scope="session")
def composite_device(table):
    return G.voxelize(G.preset_layouts("R1R2"), G.STACKS["composite"], 4 * UM, table)


def bar_mask(device):
    return device.conductor_mask & ~device.pad_mask


def x_of_cells(device, mask):
    xs, _, _ = device.centers()
    return np.broadcast_to(xs[:, None, None], device.shape)[mask]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
