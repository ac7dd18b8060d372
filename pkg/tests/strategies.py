"""Hypothesis strategies shared across test modules."""

from hypothesis import strategies as st

from ncdc.remapping import Remapping


@st.composite
def remappings(draw, dom=None, cod=None, max_size=4):
    cod = draw(st.integers(0, max_size)) if cod is None else cod
    if cod == 0:
        dom = 0
    dom = draw(st.integers(0, max_size)) if dom is None else dom
    targets = draw(st.lists(st.integers(0, cod - 1), min_size=dom, max_size=dom)) if dom else []
    return Remapping(tuple(targets), cod)


@st.composite
def bijections(draw, size=None, max_size=4):
    n = draw(st.integers(0, max_size)) if size is None else size
    return Remapping(tuple(draw(st.permutations(range(n)))), n)


@st.composite
def stride_maps(draw, dom=None, max_rank=2, max_size=4):
    """A capturing affine map; ``dom`` may be fixed to chain maps."""
    from ncdc.stride import AffineStrideMap, axis
    if dom is None:
        rank = draw(st.integers(0, max_rank))
        dom = tuple(axis(f"p{i}", draw(st.integers(1, max_size))) for i in range(rank))
    n_cod = draw(st.integers(0, max_rank))
    lam = [[draw(st.integers(0, 2)) for _ in range(n_cod)] for _ in dom]
    offset = [draw(st.integers(0, 2)) for _ in range(n_cod)]
    cod = []
    for j in range(n_cod):
        reach = offset[j] + sum((a.size - 1) * lam[i][j] for i, a in enumerate(dom))
        cod.append(axis(f"q{j}", reach + 1 + draw(st.integers(0, 1))))
    return AffineStrideMap(dom, tuple(cod), lam, offset)
