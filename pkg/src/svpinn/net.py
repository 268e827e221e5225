"""Modified MLP with multiplicative encoder mixing and per-axis second-order jets.

Layer recursion, with features ``F = fmap(x)``::

    U = tanh(W_u F + b_u),  V = tanh(W_v F + b_v),  g_0 = F
    f_l = tanh(W_l g_{l-1} + b_l),  g_l = f_l * U + (1 - f_l) * V   (l = 1..K)
    u = W_out g_K + b_out

With DAFF features (Dirichlet eigenfunctions) and every bias removed, each
stage maps zero to zero, so ``u`` vanishes on the boundary for any weights.

Parameters are a flat ``dict[str, jax.Array]``; absent bias entries mean the
bias is fixed at zero and is not trained.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .operators import Operator, apply_operator  # noqa: F401  (re-exported)
from .spectral import select_daff_indices

FEATURE_KINDS = ("daff", "fourier", "identity")


def sinpi(t):
    """``sin(pi t)`` that is exactly zero at integer ``t``."""
    r = t - 2.0 * jnp.round(0.5 * t)  # in [-1, 1]
    a = jnp.abs(r)
    a = jnp.where(a > 0.5, 1.0 - a, a)
    return jnp.sign(r) * jnp.sin(jnp.pi * a)


def cospi(t):
    return sinpi(t + 0.5)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Input encoding: DAFF eigenfunctions, random Fourier features, or the identity.

    Use the ``daff``, ``fourier`` and ``identity`` constructors.
    """

    kind: str
    d: int
    matrix: np.ndarray = field(repr=False)  # DAFF: integer indices; Fourier: frequencies

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        m = np.array(self.matrix, dtype=np.int64 if self.kind == "daff" else float)
        if m.ndim != 2 or m.shape[1] != self.d:
            raise ValueError(f"feature matrix must have {self.d} columns")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def daff(cls, d: int, m: int, max_component: int = 64) -> "FeatureMap":
        return cls("daff", d, select_daff_indices(d, m, max_component))

    @classmethod
    def fourier(cls, d: int, m: int, sigma: float, seed: int = 0) -> "FeatureMap":
        """``[sin(A x), cos(A x)]`` with ``A`` an ``m x d`` matrix of ``N(0, sigma^2)`` entries."""
        rng = np.random.Generator(np.random.Philox(seed))
        return cls("fourier", d, sigma * rng.standard_normal((m, d)))

    @classmethod
    def identity(cls, d: int) -> "FeatureMap":
        return cls("identity", d, np.eye(d))

    @property
    def output_dim(self) -> int:
        if self.kind == "fourier":
            return 2 * self.matrix.shape[0]
        if self.kind == "daff":
            return self.matrix.shape[0]
        return self.d

    @property
    def vanishes_on_boundary(self) -> bool:
        return self.kind == "daff"

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.kind == other.kind and self.d == other.d and np.array_equal(self.matrix, other.matrix)

    __hash__ = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureMap":
        return cls(data["kind"], int(data["d"]), np.asarray(data["matrix"]))

    def __call__(self, x):
        return feature_jet(self, x, order=0)[0]


def feature_jet(fmap: FeatureMap, x, order: int = 2):
    """Features and their pure per-axis derivatives.

    Returns ``(F, dF, d2F)`` with ``F`` of shape ``(P, m)`` and ``dF``, ``d2F`` of
    shape ``(d, P, m)``; the derivative entries are ``None`` when ``order == 0``.
    """
    x = jnp.asarray(x, dtype=jnp.float64)
    if x.ndim == 1:
        x = x.reshape(-1, fmap.d)
    d = fmap.d
    if fmap.kind == "daff":
        k = jnp.asarray(fmap.matrix, dtype=jnp.float64)
        t = x[:, None, :] * k[None, :, :]  # (P, m, d)
        s = sinpi(t)
        c = 2.0 ** (d / 2.0)
        F = c * jnp.prod(s, axis=-1)
        if order == 0:
            return F, None, None
        cs = cospi(t)
        d1, d2 = [], []
        for j in range(d):
            others = c * jnp.prod(jnp.delete(s, j, axis=-1), axis=-1) if d > 1 else c
            wk = jnp.pi * k[:, j]
            d1.append(wk * cs[..., j] * others)
            d2.append(-(wk**2) * F)
        return F, jnp.stack(d1), jnp.stack(d2)
    if fmap.kind == "fourier":
        A = jnp.asarray(fmap.matrix)
        z = x @ A.T
        sz, cz = jnp.sin(z), jnp.cos(z)
        F = jnp.concatenate([sz, cz], axis=-1)
        if order == 0:
            return F, None, None
        d1 = jnp.stack([jnp.concatenate([cz * A[:, j], -sz * A[:, j]], -1) for j in range(d)])
        d2 = jnp.stack([-F * jnp.concatenate([A[:, j] ** 2, A[:, j] ** 2]) for j in range(d)])
        return F, d1, d2
    F = x
    if order == 0:
        return F, None, None
    d1 = jnp.broadcast_to(jnp.eye(d)[:, None, :], (d,) + x.shape)
    return F, d1, jnp.zeros_like(d1)


class EvalJet(NamedTuple):
    """Value, gradient and pure second partials of ``u`` at ``P`` points."""

    value: jax.Array  # (P,)
    grad: jax.Array  # (P, d)
    d2: jax.Array  # (P, d)

    @property
    def laplacian(self):
        return jnp.sum(self.d2, axis=-1)


def _depth(params: dict) -> int:
    return sum(1 for key in params if key.startswith("hidden_") and key.endswith("_W"))


def _bias(params: dict, name: str):
    return params.get(name)


def _dense_jet(W, b, z, dz, d2z):
    y = z @ W.T
    if b is not None:
        y = y + b
    if dz is None:
        return y, None, None
    return y, dz @ W.T, d2z @ W.T


def _tanh_jet(z, dz, d2z):
    t = jnp.tanh(z)
    if dz is None:
        return t, None, None
    s = 1.0 - t * t
    return t, s * dz, s * d2z - 2.0 * t * s * dz * dz


def _propagate(params: dict, F, dF, d2F):
    U = _tanh_jet(*_dense_jet(params["enc_u_W"], _bias(params, "enc_u_b"), F, dF, d2F))
    V = _tanh_jet(*_dense_jet(params["enc_v_W"], _bias(params, "enc_v_b"), F, dF, d2F))
    g = (F, dF, d2F)
    for layer in range(_depth(params)):
        f = _tanh_jet(*_dense_jet(params[f"hidden_{layer}_W"], _bias(params, f"hidden_{layer}_b"), *g))
        D = U[0] - V[0]
        value = V[0] + f[0] * D
        if f[1] is None:
            g = (value, None, None)
            continue
        dD = U[1] - V[1]
        d2D = U[2] - V[2]
        g = (
            value,
            V[1] + f[1] * D + f[0] * dD,
            V[2] + f[2] * D + 2.0 * f[1] * dD + f[0] * d2D,
        )
    return _dense_jet(params["out_W"], _bias(params, "out_b"), *g)


def forward(params: dict, fmap: FeatureMap, x):
    """Network output at ``x`` (one point or a ``(P, d)`` array)."""
    x = jnp.asarray(x, dtype=jnp.float64)
    single = x.ndim <= 1 and x.size == fmap.d
    F, _, _ = feature_jet(fmap, x.reshape(-1, fmap.d), order=0)
    y = _propagate(params, F, None, None)[0][:, 0]
    return y[0] if single else y


def eval_jet(params: dict, fmap: FeatureMap, x) -> EvalJet:
    """Exact value, gradient and pure second derivatives by forward jet propagation."""
    x = jnp.asarray(x, dtype=jnp.float64).reshape(-1, fmap.d)
    y, dy, d2y = _propagate(params, *feature_jet(fmap, x, order=2))
    return EvalJet(y[:, 0], dy[..., 0].T, d2y[..., 0].T)


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    """``fan_out x fan_in`` matrix, uniform on ``+-sqrt(6/(fan_in+fan_out))``."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def glorot_init(
    seed: int,
    fmap: FeatureMap,
    width: int,
    depth: int,
    *,
    hard: bool | None = None,
    encoder_bias: bool = True,
    input_gain: float = 1.0,
) -> dict:
    """Glorot-uniform weights and zero biases for the modified MLP.

    Parameters
    ----------
    seed : int
    fmap : FeatureMap
    width : int
        Hidden width ``r``.
    depth : int
        Number of hidden layers ``K`` (0 gives a linear readout of the features).
    hard : bool, optional
        Drop every bias so the output vanishes on the boundary. Defaults to
        ``True`` for DAFF features and ``False`` otherwise; requires DAFF.
    encoder_bias : bool
        In soft mode, whether the two encoder biases exist (and train).
    input_gain : float
        Multiplies the Glorot bound of the matrices that read the features
        (both encoders and the first hidden layer).
    """
    if hard is None:
        hard = fmap.vanishes_on_boundary
    if hard and not fmap.vanishes_on_boundary:
        raise ValueError("the hard boundary constraint needs DAFF features")
    if width < 1 or depth < 0:
        raise ValueError("width must be >= 1 and depth >= 0")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    m = fmap.output_dim
    shapes = [("enc_u", width, m), ("enc_v", width, m)]
    prev = m
    for layer in range(depth):
        shapes.append((f"hidden_{layer}", width, prev))
        prev = width
    shapes.append(("out", 1, prev))
    params = {}
    for name, fan_out, fan_in in shapes:
        gain = input_gain if name in ("enc_u", "enc_v", "hidden_0") else 1.0
        params[f"{name}_W"] = jnp.asarray(gain * glorot_uniform(rng, fan_out, fan_in))
        if hard or (name.startswith("enc") and not encoder_bias):
            continue
        params[f"{name}_b"] = jnp.zeros(fan_out)
    return params


def is_hard(params: dict, fmap: FeatureMap) -> bool:
    return fmap.vanishes_on_boundary and not any(key.endswith("_b") for key in params)


def flatten(params: dict) -> tuple[jax.Array, callable]:
    """Concatenate parameters (sorted by name) into one vector, plus the inverse map."""
    names = sorted(params)
    shapes = [params[k].shape for k in names]
    sizes = [int(np.prod(s)) for s in shapes]
    flat = jnp.concatenate([jnp.ravel(params[k]) for k in names])

    def unflatten(vec):
        out, pos = {}, 0
        for k, s, n in zip(names, shapes, sizes):
            out[k] = vec[pos : pos + n].reshape(s)
            pos += n
        return out

    return flat, unflatten


_MAGIC = b"SVPINNCK"
_VERSION = 1


def save_checkpoint(path, params: dict, fmap: FeatureMap | None = None) -> Path:
    """Versioned header, a name/shape table, then each array as row-major ``<f8``.

    The feature map, when given, is stored as extra arrays (``__fmap_*``).
    """
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    if fmap is not None:
        kind_code = float(FEATURE_KINDS.index(fmap.kind))
        arrays["__fmap_kind"] = np.array([kind_code, float(fmap.d)])
        arrays["__fmap_matrix"] = np.asarray(fmap.matrix, dtype=np.float64)
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", _VERSION, len(arrays)))
        for name in sorted(arrays):
            a = arrays[name]
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)) + raw + struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}q", *a.shape))
        for name in sorted(arrays):
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    return path


def load_checkpoint(path) -> tuple[dict, FeatureMap | None]:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError("not a checkpoint file")
    version, count = struct.unpack_from("<II", raw, 8)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 16
    table = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", raw, pos)
        name = raw[pos + 4 : pos + 4 + nlen].decode()
        pos += 4 + nlen
        (ndim,) = struct.unpack_from("<I", raw, pos)
        shape = struct.unpack_from(f"<{ndim}q", raw, pos + 4)
        pos += 4 + 8 * ndim
        table.append((name, shape))
    arrays = {}
    for name, shape in table:
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(shape).copy()
        pos += 8 * n
    if pos != len(raw):
        raise ValueError("trailing bytes after checkpoint payload")
    fmap = None
    if "__fmap_kind" in arrays:
        kind, d = arrays.pop("__fmap_kind")
        fmap = FeatureMap(FEATURE_KINDS[int(kind)], int(d), arrays.pop("__fmap_matrix"))
    return {k: jnp.asarray(v) for k, v in arrays.items()}, fmap


__all__ = [
    "EvalJet",
    "FeatureMap",
    "Operator",
    "apply_operator",
    "eval_jet",
    "feature_jet",
    "flatten",
    "forward",
    "glorot_init",
    "load_checkpoint",
    "save_checkpoint",
]
