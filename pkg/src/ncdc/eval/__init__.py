"""Interpreter, brute-force oracle and parameter store."""

from ..tensor import TensorValue
from .interpreter import evaluate
from .oracle import evaluate_oracle
from .params import ParamStore, init_params

eval = evaluate
eval_oracle = evaluate_oracle

__all__ = ["TensorValue", "ParamStore", "init_params", "evaluate", "evaluate_oracle",
           "eval", "eval_oracle"]
