"""Command-line front end: ``ncdc <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import hypergraph as hg
from . import serde
from . import terms as tm
from .arraybr import ArrayObject
from .diagram import render_svg
from .errors import NcdError
from .eval import ParamStore, evaluate, evaluate_oracle
from .examples import EXAMPLES, build, configure_by_name
from .tensor import TensorValue


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _write(path: str | None, data: bytes | str):
    if isinstance(data, str):
        data = data.encode("utf-8")
    if path in (None, "-"):
        sys.stdout.buffer.write(data if data.endswith(b"\n") else data + b"\n")
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def random_inputs(t: tm.Term, seed: int) -> list[TensorValue]:
    rng = np.random.Generator(np.random.Philox(key=int(seed) + (1 << 64)))
    values = []
    for o in t.dom():
        if not isinstance(o, ArrayObject):
            raise NcdError("random inputs are only available for array terms")
        sizes = [a.size for a in o.shape]
        if any(s is None for s in sizes):
            raise NcdError(f"input {o.display} is not configured")
        n = int(np.prod(sizes, dtype=np.int64))
        if o.dtype.kind == "finite":
            data = rng.integers(0, o.dtype.param, n)
        elif o.dtype.kind == "int":
            data = rng.integers(-9, 10, n)
        else:
            data = rng.standard_normal(n)
        values.append(TensorValue(o.dtype, sizes, data))
    return values


def _inputs(t, args) -> list[TensorValue]:
    if args.inputs:
        return serde.load_tensors(_read(args.inputs))
    return random_inputs(t, args.seed)


def _parse_sets(items: list[str]) -> dict[str, int]:
    out: dict[str, int] = {}
    for item in items:
        for pair in item.split(","):
            if not pair.strip():
                continue
            if "=" not in pair:
                raise NcdError(f"expected key=value, got {pair!r}")
            key, value = pair.split("=", 1)
            try:
                out[key.strip()] = int(value)
            except ValueError:
                raise NcdError(f"size for {key.strip()!r} must be an integer") from None
    return out


def agree(a: TensorValue, b: TensorValue, rtol: float = 1e-9, atol: float = 1e-12) -> bool:
    if a.dtype != b.dtype or a.sizes != b.sizes:
        return False
    if a.dtype.is_integral:
        return bool(np.array_equal(a.array, b.array))
    return bool(np.allclose(a.array, b.array, rtol=rtol, atol=atol))


def cmd_check(args) -> int:
    t = serde.load(_read(args.file))
    problems = tm.validate(t)
    for p in problems:
        print(f"violation: {p}")
    axes = tm.free_axes(t)
    print("free:" + ("" if axes else " none"))
    for a in axes:
        print(f"  {a.uid}  {a.name}")
    if problems:
        return 1
    print("ok")
    return 0


def cmd_config(args) -> int:
    t = serde.load(_read(args.file))
    sizes = _parse_sets(args.set or [])
    if args.config:
        sizes.update(serde.load_configuration(_read(args.config)))
    out = configure_by_name(t, sizes)
    tm.check(out)
    _write(args.output, serde.save(out))
    return 0


def cmd_eval(args) -> int:
    t = tm.check(serde.load(_read(args.file)))
    outs = evaluate(t, _inputs(t, args), ParamStore(args.seed))
    _write(args.output, serde.save_tensors(outs))
    return 0


def cmd_oracle(args) -> int:
    t = tm.check(serde.load(_read(args.file)))
    xs = _inputs(t, args)
    fast = evaluate(t, xs, ParamStore(args.seed))
    slow = evaluate_oracle(t, xs, ParamStore(args.seed))
    ok = len(fast) == len(slow) and all(agree(a, b) for a, b in zip(fast, slow))
    for i, (a, b) in enumerate(zip(fast, slow)):
        diff = float(np.max(np.abs(a.array - b.array))) if a.array.size else 0.0
        print(f"output {i}: sizes {list(a.sizes)} max abs diff {diff:.3g}")
    print("agree" if ok else "MISMATCH")
    return 0 if ok else 1


def cmd_rewrite(args) -> int:
    t = tm.check(serde.load(_read(args.file)))
    rules = [r.strip() for r in args.rules.split(",") if r.strip()]
    result = hg.rewrite(hg.to_hypergraph(t), rules, args.max_steps)
    print(f"applied {result.steps} rewrite steps", file=sys.stderr)
    if result.exhausted:
        print("step budget exhausted; output is the partially rewritten term", file=sys.stderr)
    _write(args.output, serde.save(hg.extract(result.graph)))
    return 0


def cmd_hypergraph(args) -> int:
    t = tm.check(serde.load(_read(args.file)))
    _write(args.output, hg.dump(hg.to_hypergraph(t)))
    return 0


def cmd_diagram(args) -> int:
    t = tm.check(serde.load(_read(args.file)))
    _write(args.output, render_svg(t, args.show_dtypes))
    return 0


def cmd_examples(args) -> int:
    _write(args.output, serde.save(build(args.name, args.configured)))
    return 0


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncdc", description="Broadcasted tensor term toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check", help="validate a term and list its free axes")
    s.add_argument("file")
    s.set_defaults(run=cmd_check)

    s = sub.add_parser("config", help="assign sizes to free axes")
    s.add_argument("file")
    s.add_argument("--set", action="append", metavar="K=V,...",
                   help="uid or unambiguous axis name = size")
    s.add_argument("--config", metavar="CFG.json")
    s.add_argument("-o", "--output")
    s.set_defaults(run=cmd_config)

    for name, fn, text in (("eval", cmd_eval, "run the interpreter"),
                           ("oracle", cmd_oracle, "compare interpreter and brute-force oracle")):
        s = sub.add_parser(name, help=text)
        s.add_argument("file")
        s.add_argument("--inputs", metavar="T.json", help="tensor file; random if omitted")
        s.add_argument("--seed", type=int, default=0)
        if name == "eval":
            s.add_argument("-o", "--output")
        s.set_defaults(run=fn)

    s = sub.add_parser("rewrite", help="rewrite through the hypergraph form")
    s.add_argument("file")
    s.add_argument("--rules", default=",".join(hg.RULES))
    s.add_argument("--max-steps", type=int, default=1000)
    s.add_argument("-o", "--output")
    s.set_defaults(run=cmd_rewrite)

    s = sub.add_parser("hypergraph", help="dump the hypergraph as JSON")
    s.add_argument("file")
    s.add_argument("-o", "--output")
    s.set_defaults(run=cmd_hypergraph)

    s = sub.add_parser("diagram", help="render an SVG diagram")
    s.add_argument("file")
    s.add_argument("-o", "--output")
    s.add_argument("--show-dtypes", action="store_true")
    s.set_defaults(run=cmd_diagram)

    s = sub.add_parser("examples", help="emit a bundled example term")
    s.add_argument("name", choices=sorted(EXAMPLES))
    s.add_argument("--configured", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(run=cmd_examples)
    return p


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    try:
        return args.run(args)
    except NcdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
