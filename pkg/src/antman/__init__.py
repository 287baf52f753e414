"""Structured-sparse + low-rank compressed linear operators and tooling."""

from . import autodiff, bench, costmodel, distill, modelfile, operators, rnn, toytask

__all__ = ["operators", "costmodel", "rnn", "modelfile", "autodiff", "distill", "toytask", "bench"]
__version__ = "0.1.0"
