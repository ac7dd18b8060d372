"""The nine acceptance criteria, each at its stated tolerance.

Run alone with ``pytest tests/test_acceptance.py``; the terminal summary
prints one PASS/FAIL line per criterion.
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np

from ncdc import examples
from ncdc import terms as tm
from ncdc.align import compose_aligned
from ncdc.arraybr import (ArrayObject, OpTag, Weave, batch_lift, convolution, einsum,
                          elementwise, embedding, learned_params, linear, make_broadcast,
                          reindexing, rmsnorm, select, softmax, sum_over, triangular_mask)
from ncdc.diagram import expected_counts, render_svg
from ncdc.eval import ParamStore, evaluate, evaluate_oracle
from ncdc.hypergraph import extract, iso_check, rewrite, to_hypergraph
from ncdc.remapping import Remapping, compose as compose_remap
from ncdc.serde import load, save
from ncdc.stride import AffineStrideMap, axis, from_remapping, identity_map, translation_map
from ncdc.tensor import INT, REAL, TensorValue
from ncdc.uids import deterministic_uids

from . import laws
from .oracles import causal_attention
from .randterms import TermGen, random_inputs, random_term
from .second_decoder import describe, read
from .svg_audit import audit


def close(a, b, rtol=1e-9):
    """Exact for integer dtypes, ``rtol`` relative for floats."""
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if x.dtype != y.dtype or x.sizes != y.sizes:
            return False
        if x.dtype.is_integral:
            if not np.array_equal(x.array, y.array):
                return False
        elif not np.allclose(x.array, y.array, rtol=rtol, atol=0.0):
            return False
    return True


def dual_route(t, seed=0):
    xs = random_inputs(t, seed)
    store = ParamStore(seed)
    return close(evaluate(t, xs, store), evaluate_oracle(t, xs, store))


# -- criterion 1 ------------------------------------------------------------------------


def assignments(rank, limit=64):
    """Every size tuple of length ``rank`` whose product is at most ``limit``."""
    def go(prefix, budget):
        if len(prefix) == rank:
            yield tuple(prefix)
            return
        for s in range(1, budget + 1):
            yield from go(prefix + [s], budget // s)
    yield from go([], limit)


def builder_families():
    """(name, rank, factory) for every builder; factory maps a size tuple to a term."""
    ax = lambda *sizes: [axis(f"a{i}", s) for i, s in enumerate(sizes)]
    fams = []
    for fn, dtypes in (("neg", (INT, REAL)), ("relu", (INT, REAL)), ("square", (INT, REAL)),
                       ("tanh", (REAL,)), ("exp", (REAL,))):
        for dt in dtypes:
            for r in range(4):
                fams.append((f"{fn}/{dt}", r,
                             lambda s, fn=fn, dt=dt: elementwise(fn, 1, ax(*s), dt)))
    for fn, dtypes in (("add", (INT, REAL)), ("sub", (INT, REAL)), ("mul", (INT, REAL)),
                       ("max", (INT, REAL)), ("div", (REAL,))):
        for dt in dtypes:
            for r in range(3):
                fams.append((f"{fn}/{dt}", r,
                             lambda s, fn=fn, dt=dt: elementwise(fn, 2, ax(*s), dt)))
    for dt in (INT, REAL):
        fams.append(("sum", 1, lambda s, dt=dt: sum_over(*ax(*s), dtype=dt)))
        fams.append(("sum2", 2, lambda s, dt=dt: sum_over(*ax(*s), dtype=dt)))
        fams.append(("sum/lift", 2, lambda s, dt=dt: batch_lift(sum_over(axis("s", s[0]),
                                                                          dtype=dt),
                                                                 (axis("p", s[1]),))))
    fams += [
        ("softmax", 1, lambda s: softmax(axis("s", s[0]))),
        ("softmax/lift", 2, lambda s: batch_lift(softmax(axis("s", s[0])), (axis("p", s[1]),))),
        ("softmax/middle", 3, lambda s: _softmax_middle(*ax(*s))),
        ("rmsnorm", 1, lambda s: rmsnorm(axis("n", s[0]))),
        ("rmsnorm/lift", 2, lambda s: batch_lift(rmsnorm(axis("n", s[0])), (axis("p", s[1]),))),
        ("linear", 2, lambda s: linear((axis("i", s[0]),), (axis("o", s[1]),))),
        ("linear/2in", 3, lambda s: linear(ax(s[0], s[1]), (axis("o", s[2]),))),
        ("linear/lift", 3, lambda s: batch_lift(linear((axis("i", s[0]),), (axis("o", s[1]),)),
                                                (axis("p", s[2]),))),
        ("embedding", 2, lambda s: embedding(s[0], axis("m", s[1]))),
        ("embedding/lift", 3, lambda s: batch_lift(embedding(s[0], axis("m", s[1])),
                                                   (axis("p", s[2]),))),
        ("select", 1, lambda s: select(s[0])),
        ("select/lift", 2, lambda s: batch_lift(select(s[0]), (axis("p", s[1]),))),
        ("triangular_mask", 2, lambda s: triangular_mask(axis("q", s[0]), axis("x", s[1]))),
        ("triangular_mask/lift", 3, lambda s: batch_lift(
            triangular_mask(axis("q", s[0]), axis("x", s[1])), (axis("h", s[2]),))),
        ("convolution", 4, lambda s: convolution(*ax(*s))),
        ("reindex/diagonal", 2, lambda s: reindexing(
            INT, from_remapping(Remapping((0, 0), 1), (axis("p", s[0]),)), (axis("k", s[1]),))),
        ("reindex/repeat", 2, lambda s: reindexing(
            INT, from_remapping(Remapping((), 1), (axis("p", s[0]),)), (axis("a", s[1]),))),
        ("reindex/transpose", 2, lambda s: reindexing(
            REAL, from_remapping(Remapping((1, 0), 2), tuple(ax(*s))))),
        ("reindex/translate", 3, _translation),
        ("reindex/stride", 2, _strided),
    ]
    for spec in ("q h d, x h d -> h q x", "h q x, x h d -> q h d", "a, a -> ", "a b, b -> a",
                 "a, b -> a b", "a b -> b a", "a b c -> a"):
        letters = sorted({c for c in spec if c.isalpha()})
        for dt in (INT, REAL):
            fams.append((f"einsum {spec}/{dt}", len(letters),
                         lambda s, spec=spec, letters=letters, dt=dt:
                         einsum(spec, dt, dict(zip(letters, s)))))
    return fams


def _softmax_middle(a0, a1, a2):
    w = Weave((False, True, False), REAL, (a1,))
    return make_broadcast(OpTag("softmax"), [w], [w], [identity_map((a0, a2))], (a0, a2))


def _translation(s):
    n, t, extra = s
    # t and extra are shifted so that size 1 still means "no translation / exact fit"
    return reindexing(REAL, translation_map(axis("n", n), t - 1, axis("m", n + t - 1 + extra - 1)),
                      (axis("c", 1),))


def _strided(s):
    n, step = s
    p = axis("p", n)
    return reindexing(INT, AffineStrideMap((p,), (axis("q", (n - 1) * step + 1),), [[step]], [0]))


def test_criterion_1_oracle_equivalence():
    start = time.perf_counter()
    failures, checked = [], 0
    for name, rank, factory in builder_families():
        for sizes in assignments(rank):
            t = factory(sizes)
            if not dual_route(t, sum(sizes)):
                failures.append((name, sizes))
            checked += 1
    for seed in range(200):
        t = random_term(seed, depth=4)
        if not dual_route(t, seed):
            failures.append(("random", seed))
    elapsed = time.perf_counter() - start
    print(f"criterion 1: {checked} builder instances + 200 random terms in {elapsed:.1f}s")
    assert not failures, failures[:10]
    assert elapsed < 60


# -- criterion 2 ------------------------------------------------------------------------


def _attention_parts():
    with deterministic_uids():
        qk, mask, norm, sv = examples.attention_templates()
        scores = compose_aligned(compose_aligned(qk, mask), norm)
        full = compose_aligned(scores, sv)
    sizes = {"q": 4, "x": 4, "h": 2, "d1": 8, "d2": 8}
    return (examples.configure_by_name(scores, {k: v for k, v in sizes.items() if k != "d2"}),
            examples.configure_by_name(full, sizes))


def test_criterion_2_attention_pipeline():
    scores, full = _attention_parts()
    assert tm.validate(full) == []
    xs = random_inputs(full, 2)
    # softmax slices: probabilities over x for every (h, q)
    probs = evaluate(scores, xs[:2])[0].array
    assert probs.shape == (2, 4, 4)
    assert (probs >= 0).all()
    assert np.all(np.abs(probs.sum(axis=-1) - 1) <= 1e-9)
    assert close(evaluate(scores, xs[:2]), evaluate_oracle(scores, xs[:2]))
    out = evaluate(full, xs)
    assert close(out, evaluate_oracle(full, xs))
    expected = causal_attention(*(x.array.tolist() for x in xs))
    np.testing.assert_allclose(out[0].array, np.array(expected), rtol=1e-9, atol=0)


# -- criterion 3 ------------------------------------------------------------------------


def test_criterion_3_convolution_example():
    t = examples.convolution_example(configured=True)
    (w,) = learned_params(t)
    store = ParamStore(0)
    store.set(w, TensorValue(REAL, w.sizes, [1.0, -1.0]))
    xs = [TensorValue(REAL, (1, 4), [1.0, 2.0, 4.0, 7.0])]
    for ev in (evaluate, evaluate_oracle):
        assert ev(t, xs, store)[0].data == [-1.0, -2.0, -3.0]


# -- criterion 4 ------------------------------------------------------------------------


def test_criterion_4_translation_equivariance():
    cases = 0
    for n_out, k, t in itertools.product(range(1, 6), range(1, 4), range(0, 3)):
        if n_out - t < 1:
            continue  # the translated output would be empty
        for channels in ((1, 1), (2, 1), (1, 2)):
            lhs, rhs = laws.equivariance_pair(n_out, k, t, *channels)
            xs = random_inputs(lhs, cases)
            store = ParamStore(cases)
            results = [ev(term, xs, store) for ev in (evaluate, evaluate_oracle)
                       for term in (lhs, rhs)]
            assert all(close(results[0], r) for r in results[1:]), (n_out, k, t, channels)
            cases += 1
    assert cases == 3 * sum(1 for n, k, t in itertools.product(range(1, 6), range(1, 4),
                                                               range(3)) if n - t >= 1)


# -- criterion 5 ------------------------------------------------------------------------


def _family(n):
    return [ArrayObject(INT, (axis(f"a{i}", 1 + i % 4),)) for i in range(n)]


def test_criterion_5_law_suite():
    bad = {"rearrangement": [], "fox": [], "naturality": [], "batch-slice": [], "yoneda": []}

    # rearrangement composition: every pair of remappings over up to four slots
    store = ParamStore(0)
    for n_i in range(5):
        family = _family(n_i)
        xs = random_inputs(tm.identity(family), n_i)
        for n_j in range(5):
            for mu in laws.remappings_between(n_j, n_i):
                first, middle = tm.rearrangement(mu, family), mu.apply(family)
                for n_k in range(5):
                    for nu in laws.remappings_between(n_k, n_j):
                        lhs = tm.compose(first, tm.rearrangement(nu, middle))
                        rhs = tm.rearrangement(compose_remap(mu, nu), family)
                        if not laws.both_equal(lhs, rhs, xs, store):
                            bad["rearrangement"].append((mu.targets, nu.targets))

    # Fox identity: every family of up to four arrays with axis sizes up to four
    for n in range(5):
        for sizes in itertools.product(range(1, 5), repeat=n):
            family = [ArrayObject(REAL, (axis(f"a{i}", s),)) for i, s in enumerate(sizes)]
            bad["fox"] += laws.fox_identity(family, n)

    # deterministic naturality: every remapping over up to four deterministic ops
    def ops(n):
        makers = [lambda o: elementwise("neg", 1, o.shape, REAL),
                  lambda o: sum_over(*o.shape, dtype=REAL),
                  lambda o: softmax(o.shape[0]),
                  lambda o: elementwise("square", 1, o.shape, REAL)]
        objs = [ArrayObject(REAL, (axis(f"a{i}", 1 + i),)) for i in range(n)]
        return [makers[i % 4](o) for i, o in enumerate(objs)]
    for n_i in range(1, 5):
        fs = ops(n_i)
        for n_j in range(5):
            for mu in laws.remappings_between(n_j, n_i):
                bad["naturality"] += laws.naturality(fs, mu)

    # per-slice law: every builder broadcast at every shape with sizes up to four
    for name, rank, factory in builder_families():
        for sizes in itertools.product(range(1, 5), repeat=rank):
            if math.prod(sizes) > 64:
                continue
            for sub in tm.walk(factory(sizes)):
                if isinstance(sub, tm.Root):
                    found = laws.batch_slice(sub, random_inputs(sub, rank))
                    bad["batch-slice"] += [(name, sizes, f) for f in found]

    # Yoneda sliding: every small stride map against deterministic single-wire ops
    b = axis("b", 3)
    wire_ops = [elementwise("neg", 1, (), REAL), softmax(b), sum_over(b),
                linear((b,), (axis("o", 2),)), rmsnorm(b)]
    for eta in _small_stride_maps():
        for f in wire_ops:
            bad["yoneda"] += laws.yoneda(f, eta)

    assert all(not v for v in bad.values()), {k: v[:5] for k, v in bad.items() if v}


def _small_stride_maps():
    """Every map from a rank <= 1 domain (sizes <= 4) to a rank <= 2 codomain with
    entries in {0, 1, 2}, offsets in {0, 1} and tight or one-larger codomain sizes."""
    for n_dom in range(2):
        for dom_sizes in itertools.product(range(1, 5), repeat=n_dom):
            dom = tuple(axis(f"p{i}", s) for i, s in enumerate(dom_sizes))
            for n_cod in range(3):
                for lam_flat in itertools.product(range(3), repeat=n_dom * n_cod):
                    lam = [list(lam_flat[i * n_cod:(i + 1) * n_cod]) for i in range(n_dom)]
                    for offset in itertools.product(range(2), repeat=n_cod):
                        for slack in itertools.product(range(2), repeat=n_cod):
                            cod = []
                            for j in range(n_cod):
                                reach = offset[j] + sum((dom_sizes[i] - 1) * lam[i][j]
                                                        for i in range(n_dom))
                                cod.append(axis(f"q{j}", reach + 1 + slack[j]))
                            yield AffineStrideMap(dom, tuple(cod), lam, list(offset))


# -- criterion 6 ------------------------------------------------------------------------


def test_criterion_6_autoalignment():
    qk, mask, norm, sv = examples.attention_templates()
    t = compose_aligned(compose_aligned(compose_aligned(qk, mask), norm), sv)
    free = tm.free_axes(t)
    assert sorted(a.name for a in free) == ["d1", "d2", "h", "q", "x"]
    assert len(tm.scan_free_uids(t)) == 5
    assert tm.validate(t) == []


# -- criterion 7 ------------------------------------------------------------------------


def test_criterion_7_hypergraph():
    for seed in range(50):
        gen = TermGen(seed)
        x, y = gen.array(), gen.array()
        f, g = gen.chain([x], 2), gen.chain([y], 2)
        h, k = gen.chain(list(f.cod()), 2), gen.chain(list(g.cod()), 2)
        lhs = tm.product([tm.compose(f, h), tm.compose(g, k)])
        rhs = tm.compose(tm.product([f, g]), tm.product([h, k]))
        assert iso_check(to_hypergraph(lhs), to_hypergraph(rhs)), seed

    for name in sorted(examples.EXAMPLES):
        t = examples.build(name, configured=True)
        xs, store = random_inputs(t, 7), ParamStore(7)
        rewritten = extract(rewrite(to_hypergraph(t)).graph)
        assert close(evaluate(rewritten, xs, store), evaluate(t, xs, store)), name
        assert close(evaluate_oracle(rewritten, xs, store), evaluate(t, xs, store)), name

    for seed in range(100):
        t = random_term(1000 + seed)
        xs, store = random_inputs(t, seed), ParamStore(seed)
        assert close(evaluate(extract(to_hypergraph(t)), xs, store), evaluate(t, xs, store)), seed


# -- criterion 8 ------------------------------------------------------------------------


def test_criterion_8_serialization():
    bundled = [examples.build(n, c) for n in sorted(examples.EXAMPLES) for c in (False, True)]
    randoms = [random_term(seed) for seed in range(50)]
    for t in bundled + randoms:
        data = save(t)
        assert save(load(data)) == data
        assert load(data) == t
        assert read(data) == describe(t)
        assert read(save(load(data))) == describe(load(data))


# -- criterion 9 ------------------------------------------------------------------------


def test_criterion_9_diagrams():
    code = ("import sys\nfrom ncdc import examples\nfrom ncdc.diagram import render_svg\n"
            "for n in sorted(examples.EXAMPLES):\n"
            "    for c in (False, True):\n"
            "        sys.stdout.write(render_svg(examples.build(n, c)))\n")
    runs = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                           check=True).stdout for _ in range(2)]
    assert runs[0] == runs[1]
    here = "".join(render_svg(examples.build(n, c)) for n in sorted(examples.EXAMPLES)
                   for c in (False, True))
    assert here == runs[0]
    for n in sorted(examples.EXAMPLES):
        for c in (False, True):
            for show in (False, True):
                t = examples.build(n, c)
                assert audit(render_svg(t, show)) == expected_counts(t, show), (n, c, show)
