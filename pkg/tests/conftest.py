"""Session-scoped corpus shapes shared across test modules.

Solves and surface extractions dominate test runtime, so the standard
domains are built once per session.  Tests must not mutate them.
"""

import numpy as np
import pytest

from cmclab.grid import Grid
from cmclab import measures, shapes, torsion

H32 = 1 / 32


def _cube_grid(half, h):
    return Grid(
        origin=(-half,) * 3, extents=(int(2 * half / h) + 1,) * 3, h=h
    )


@pytest.fixture(scope="session")
def ball32():
    dom = shapes.make_ball(_cube_grid(1.2, H32), (0.0,) * 3, 1.0)
    return dom, measures.extract_surface(dom)


@pytest.fixture(scope="session")
def ball32_deficits(ball32):
    dom, surf = ball32
    return measures.deficits(dom, surf)


@pytest.fixture(scope="session")
def ball32_sol(ball32):
    dom, surf = ball32
    return torsion.solve_torsion(dom, surf)


@pytest.fixture(scope="session")
def ball32_aligned():
    # 1.25 is an exact node multiple of 1/32, so the center lands on a node
    # and the fitted ball center carries no snap offset
    dom = shapes.make_ball(_cube_grid(1.25, H32), (0.0,) * 3, 1.0)
    return dom, measures.extract_surface(dom)


@pytest.fixture(scope="session")
def ball32_decomp(ball32_aligned):
    from cmclab import decompose

    dom, surf = ball32_aligned
    return decompose.decompose(dom, surf)


@pytest.fixture(scope="session")
def neck15_decomp():
    from cmclab import decompose

    g = Grid(
        origin=(-2.4, -1.3, -1.3),
        extents=(int(4.8 / H32) + 1, int(2.6 / H32) + 1, int(2.6 / H32) + 1),
        h=H32,
    )
    dom = shapes.two_ball_neck(g, waist=0.15)
    return decompose.decompose(dom)


@pytest.fixture(scope="session")
def ellipsoid32():
    g = Grid(origin=(-1.45,) * 3, extents=(94,) * 3, h=H32)
    dom = shapes.make_ellipsoid(g, (1.0, 1.0, 1.2))
    return dom, measures.extract_surface(dom)


@pytest.fixture(scope="session")
def ellipsoid32_deficits(ellipsoid32):
    dom, surf = ellipsoid32
    return measures.deficits(dom, surf)


@pytest.fixture(scope="session")
def ellipsoid32_sol(ellipsoid32):
    dom, surf = ellipsoid32
    return torsion.solve_torsion(dom, surf)
