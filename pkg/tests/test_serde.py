import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncdc import examples
from ncdc import terms as tm
from ncdc.arraybr import ArrayObject
from ncdc.errors import SchemaError
from ncdc.eval import evaluate, evaluate_oracle
from ncdc.serde import (load, load_configuration, load_tensors, save, save_configuration,
                        save_tensors)
from ncdc.stride import axis, translation_map
from ncdc.tensor import INT, REAL, TensorValue, finite, quantized
from ncdc.terms import Element, ProductObject, Root

from .randterms import random_term
from .second_decoder import Invalid, describe, read

BUNDLED = [(n, c) for n in sorted(examples.EXAMPLES) for c in (False, True)]


def canonical(data):
    return json.dumps(json.loads(data), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True, allow_nan=False).encode()


@pytest.mark.parametrize("name,configured", BUNDLED)
def test_bundled_round_trip(name, configured):
    t = examples.build(name, configured)
    data = save(t)
    assert save(t) == data
    assert load(data) == t
    assert save(load(data)) == data
    assert canonical(data) == data
    assert read(data) == describe(t)


def test_dangling_uid_named():
    doc = json.loads(save(examples.attention()))
    victim = next(u for u, e in doc["uids"].items() if e["kind"] == "axis")
    del doc["uids"][victim]
    with pytest.raises(SchemaError, match=victim):
        load(json.dumps(doc))
    with pytest.raises(Invalid):
        read(json.dumps(doc))


def test_version_gate():
    doc = json.loads(save(examples.convolution_example()))
    doc["version"] = "1.7"
    assert load(json.dumps(doc)) == examples.convolution_example()
    doc["version"] = "2.0"
    with pytest.raises(SchemaError, match="version"):
        load(json.dumps(doc))


@pytest.mark.parametrize("mutate,pointer", [
    (lambda d: d["root"].pop("kind"), "/root"),
    (lambda d: d["root"]["parts"][0].update(kind="bogus"), "/root/parts/0"),
    (lambda d: d.pop("uids"), ""),
])
def test_schema_errors_carry_pointers(mutate, pointer):
    doc = json.loads(save(examples.attention()))
    mutate(doc)
    with pytest.raises(SchemaError) as info:
        load(json.dumps(doc))
    assert info.value.pointer.startswith(pointer)


def test_not_json():
    with pytest.raises(SchemaError):
        load(b"{not json")


def test_whitespace_input_resaves_canonically():
    t = examples.attention()
    pretty = json.dumps(json.loads(save(t)), indent=2)
    assert save(load(pretty)) == save(t)


def test_elements_and_stride_terms():
    a4, a3 = axis("a", 4), axis("b", 3)
    st_term = tm.compose(Element((1,), ProductObject([a3])), Root(translation_map(a3, 1, a4)))
    values = (TensorValue(REAL, (2,), [0.1, -2.5e-7]), TensorValue(finite(3), (), [2]))
    br_term = Element(values, ProductObject([ArrayObject(REAL, (axis("c", 2),)),
                                             ArrayObject(finite(3), ())]))
    for t in (st_term, br_term):
        data = save(t)
        assert load(data) == t and save(load(data)) == data
        assert read(data) == describe(t)
    assert b"0.1" in save(br_term) and b"-2.5e-07" in save(br_term)
    assert evaluate(br_term, []) == evaluate_oracle(br_term, []) == list(values)


def test_tensor_and_configuration_files():
    xs = [TensorValue(REAL, (2, 2), [1.5, 2, 3, 4]), TensorValue(INT, (3,), [1, -2, 3]),
          TensorValue(quantized("q8"), (1,), [0.25])]
    assert load_tensors(save_tensors(xs)) == xs
    assert load_tensors(save_tensors(xs[0])) == [xs[0]]
    c = {"b": 2, "a": 3}
    assert load_configuration(save_configuration(c)) == c
    assert save_configuration(c) == b'{"a":3,"b":2}'
    with pytest.raises(SchemaError):
        load_configuration(b'{"a": 0}')
    with pytest.raises(SchemaError):
        load_tensors(b'{"data": [1], "dtype": "real", "sizes": [2]}')


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_random_terms_round_trip(seed):
    t = random_term(seed)
    data = save(t)
    assert load(data) == t
    assert save(load(data)) == data
    assert read(data) == describe(t)
