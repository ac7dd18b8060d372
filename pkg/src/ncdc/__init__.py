"""A categorical intermediate representation for broadcasted tensor programs."""

from .align import Configuration, compose_aligned, configure
from .arraybr import (ArrayObject, BroadcastedOp, OpTag, ParamRef, Weave, array, batch_lift,
                      convolution, einsum, elementwise, embedding, linear, make_broadcast,
                      reindexing, rmsnorm, select, softmax, sum_over, triangular_mask,
                      weave_permutation)
from .errors import NcdError
from .eval import ParamStore, evaluate, evaluate_oracle, init_params
from .hypergraph import extract, iso_check, rewrite, to_hypergraph
from .remapping import Remapping
from .serde import load, save
from .stride import AffineStrideMap, Axis, axis
from .tensor import INT, REAL, Datatype, TensorValue, finite, quantized
from .terms import (ProductObject, compose, fanout, identity, product, rearrangement,
                    scan_free_uids, substitute, validate)
from .uids import deterministic_uids

__version__ = "0.1.0"
