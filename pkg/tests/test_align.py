import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ncdc import examples
from ncdc import terms as tm
from ncdc.align import Configuration, compose_aligned, configure
from ncdc.arraybr import (ArrayObject, batch_lift, broadcast_ops, convolution, einsum,
                          elementwise, softmax, sum_over, triangular_mask)
from ncdc.errors import AlignmentError, CaptureError, ConfigurationError
from ncdc.eval import ParamStore, evaluate, evaluate_oracle
from ncdc.stride import axis
from ncdc.tensor import INT, REAL
from ncdc.uids import deterministic_uids

from .randterms import TermGen, agree, random_inputs


def names(t):
    return sorted(a.name for a in tm.free_axes(t))


class TestAttentionAlignment:
    def test_softmax_renamed_and_lifted(self):
        qk = einsum("q h d, x h d -> h q x")
        step = compose_aligned(qk, softmax())
        sm = broadcast_ops(step)[-1]
        (x, h, q) = qk.cod()[0].shape
        assert sm.input_weaves[0].target_axes == (x,)
        assert sm.degree == (h, q)
        assert names(step) == ["d", "h", "q", "x"]

    def test_value_input_padded(self):
        t = examples.attention()
        assert len(t.dom()) == 3
        value = t.dom()[2]
        assert [a.name for a in value.shape] == ["d2", "h", "x"]
        assert [a.name for a in t.cod()[0].shape] == ["d2", "h", "q"]

    def test_free_uids(self):
        t = examples.attention()
        assert names(t) == ["d1", "d2", "h", "q", "x"]
        assert tm.validate(t) == []

    def test_identity_on_cod(self):
        f = einsum("a b, b -> a")
        assert compose_aligned(f, tm.identity(f.cod())) == f

    def test_dtype_clash(self):
        with pytest.raises(AlignmentError):
            compose_aligned(elementwise("neg", 1, (), INT), softmax())

    def test_conflicting_lifts(self):
        a, b = axis("a"), axis("b")
        f = tm.product([elementwise("neg", 1, (a, b)), elementwise("neg", 1, (a,))])
        g = tm.product([elementwise("neg", 1, ()), elementwise("neg", 1, ())])
        with pytest.raises(AlignmentError):
            compose_aligned(f, g)


class TestConfigure:
    def test_attention(self):
        t = examples.configure_by_name(examples.attention(),
                                       {"q": 4, "h": 2, "x": 4, "d1": 8, "d2": 8})
        assert tm.scan_free_uids(t) == []

    def test_empty(self):
        t = examples.attention()
        assert configure(t, {}) is t

    def test_capture_error(self):
        t = convolution(axis("x'", 3), axis("k", 2), axis("c", 1), axis("c'", 1), axis("x"))
        (x,) = [a for a in tm.free_axes(t) if a.name == "x"]
        with pytest.raises(CaptureError):
            configure(t, {x.uid: 3})
        assert tm.scan_free_uids(configure(t, {x.uid: 4})) == []

    def test_bad_uid(self):
        with pytest.raises(ConfigurationError, match="nope"):
            configure(examples.attention(), {"nope": 3})

    def test_already_configured(self):
        t = examples.attention(configured=True)
        uid = next(iter(tm.axes_by_uid(t)))
        with pytest.raises(ConfigurationError, match="already configured"):
            configure(t, {uid: 4})

    def test_bad_sizes(self):
        for bad in (0, -1, 2.5, True):
            with pytest.raises(ConfigurationError):
                Configuration({"a": bad})


def _numpy_reference(kind, y):
    if kind == "softmax":
        e = np.exp(y - y.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    if kind == "sum":
        return y.sum(axis=-1)
    return -y


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["softmax", "sum", "neg"]))
def test_alignment_preserves_per_slice_semantics(seed, kind):
    gen = TermGen(seed, REAL, max_objects=1)
    f = gen.chain([gen.array(rank=gen.rng.randint(1, 2))], 2)
    assume(len(f.cod()) == 1 and f.cod()[0].shape)
    g = {"softmax": softmax(), "sum": sum_over(axis("s")),
         "neg": elementwise("neg", 1, ())}[kind]
    free = tm.free_axes(g)
    t = compose_aligned(f, g)
    assert tm.validate(t) == [] and tm.scan_free_uids(t) == []
    assert not free or all(a.uid not in tm.axes_by_uid(t) for a in free)
    xs = random_inputs(t, seed)
    store = ParamStore(seed)
    got = evaluate(t, xs, store)
    assert agree(got, evaluate_oracle(t, xs, store))
    expected = _numpy_reference(kind, evaluate(f, xs, store)[0].array)
    np.testing.assert_allclose(got[0].array, expected, rtol=1e-9, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_alignment_idempotent(seed):
    gen = TermGen(seed)
    f = gen.term(2)
    g = gen.chain(list(f.cod()), 2)
    assert compose_aligned(f, g) == tm.compose(f, g)


def test_configure_commutes_with_alignment():
    with deterministic_uids():
        qk = einsum("q h d, x h d -> h q x")
        mask = triangular_mask()
    shared = {a.name: a.uid for a in qk.cod()[0].shape}
    sizes = {shared["x"]: 4, shared["q"]: 4, shared["h"]: 2}
    lhs = configure(compose_aligned(qk, mask), sizes)
    rhs = compose_aligned(configure(qk, sizes), mask)
    assert lhs == rhs


def test_attention_evaluates_after_alignment():
    t = examples.attention(configured=True)
    xs = random_inputs(t, 0)
    assert agree(evaluate(t, xs), evaluate_oracle(t, xs))
