from __future__ import annotations

import pytest

from multiquilt import moduli as M
from multiquilt import trees as T

# Three-layer colored tree with eight interior edges.  In preorder the edges are
#   (0,1)=l1  (1,2)=l2  (2,3)=l3  (3,4)=l8  (2,5)=l4  (2,6)=l5  (1,7)=l6  (0,8)=l7
# and its colored vertices sit at the ends of l3, l4, l5, l6 and l7.
_C1 = (True, (None,))
EXAMPLE_NESTED = (False, (
    (False, (
        (False, ((True, ((False, (None, None)),)), _C1, _C1)),
        _C1,
    )),
    _C1,
))
EXAMPLE_EDGES = {
    1: (0, 1), 2: (1, 2), 3: (2, 3), 8: (3, 4), 4: (2, 5), 5: (2, 6), 6: (1, 7), 7: (0, 8),
}


@pytest.fixture
def example_tree() -> T.ColoredRibbonTree:
    return T.from_nested(EXAMPLE_NESTED, quilted=True)


@pytest.fixture
def example_edges() -> dict[int, tuple[int, int]]:
    return dict(EXAMPLE_EDGES)


def metric(tree, lengths: dict | None = None, default: float = 1.0) -> M.MetricTree:
    lengths = lengths or {}
    return M.MetricTree.make(tree, {e: lengths.get(e, default) for e in tree.edges})


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
