"""Second-order linear operators applied to an evaluation jet."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import jax.numpy as jnp

OPERATOR_KINDS = ("laplacian", "negative-laplacian", "helmholtz", "divergence")


@dataclass(frozen=True)
class Operator:
    """``L u`` for one of the supported kinds.

    * ``laplacian``: ``Delta u``
    * ``negative-laplacian``: ``-Delta u``
    * ``helmholtz``: ``Delta u + k^2 u``
    * ``divergence``: ``-div(a grad u) = -a Delta u - grad a . grad u``

    ``coefficient`` and ``coefficient_grad`` map ``(P, d)`` points to ``(P,)`` and
    ``(P, d)`` arrays; they are only used by the divergence form.
    """

    kind: str
    k: float = 0.0
    coefficient: Callable | None = None
    coefficient_grad: Callable | None = None

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {OPERATOR_KINDS}")
        if self.kind == "divergence" and (self.coefficient is None or self.coefficient_grad is None):
            raise ValueError("divergence form needs a coefficient and its gradient")


def apply_operator(op: Operator, jet, x):
    """Evaluate ``L u`` at ``x`` from a jet with ``value``, ``grad`` and ``d2`` fields."""
    if not isinstance(op, Operator) or op.kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator {op!r}")
    lap = jnp.sum(jet.d2, axis=-1)
    if op.kind == "laplacian":
        return lap
    if op.kind == "negative-laplacian":
        return -lap
    if op.kind == "helmholtz":
        return lap + op.k**2 * jet.value
    x = jnp.reshape(jnp.asarray(x), (-1, jet.grad.shape[-1]))
    a = op.coefficient(x)
    ga = op.coefficient_grad(x)
    return -a * lap - jnp.sum(ga * jet.grad, axis=-1)
