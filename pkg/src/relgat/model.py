"""Relational graph attention layers.

The edge score for a directed edge (j -> i) is

    leaky_relu( a . [ W'h_i || W'h_j || W'' relation(h_i, h_j) ] )

with the relation operating on the raw layer inputs. With relation kind
`none` the third block is omitted and the layer is a plain single-head GAT.
The relation contribution is evaluated as relation(h_i,h_j) . (W''^T a_3),
which is the same function without materialising a per-edge projection; the
streamed kernels keep memory O(n*d) regardless of edge count.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from . import autodiff as ad
from .autodiff import Tensor, pairnorm
from .errors import ConfigError

__all__ = [
    "RelationKind",
    "LayerParams",
    "ModelConfig",
    "relation",
    "edge_scores",
    "gat_layer_forward",
    "pairnorm",
    "model_forward",
    "init_params",
    "layer_dims",
    "save_checkpoint",
    "load_checkpoint",
]


class RelationKind(Enum):
    NONE = "none"
    DIFF = "diff"
    ABSDIFF = "absdiff"
    PROD = "prod"
    ABSDIFF_PROD = "absdiff_prod"

    @property
    def width_multiplier(self) -> int:
        """Relation output width as a multiple of the input dimension."""
        if self is RelationKind.NONE:
            return 0
        return 2 if self is RelationKind.ABSDIFF_PROD else 1

    @property
    def kernel_code(self) -> int:
        return {
            RelationKind.DIFF: _kernels.KIND_DIFF,
            RelationKind.ABSDIFF: _kernels.KIND_ABSDIFF,
            RelationKind.PROD: _kernels.KIND_PROD,
            RelationKind.ABSDIFF_PROD: _kernels.KIND_ABSDIFF_PROD,
        }[self]


@dataclass
class LayerParams:
    """One attention layer: self/neighbour projection w_self (d_out, d_in),
    relation projection w_rel (d_out, r*d_in) or None, and the attention
    vector attn of length 3*d_out (2*d_out without a relation block)."""

    w_self: Tensor
    w_rel: Tensor | None
    attn: Tensor

    @property
    def d_in(self) -> int:
        return self.w_self.data.shape[1]

    @property
    def d_out(self) -> int:
        return self.w_self.data.shape[0]

    def tensors(self):
        out = [self.w_self]
        if self.w_rel is not None:
            out.append(self.w_rel)
        out.append(self.attn)
        return out

    def validate(self, kind: RelationKind) -> None:
        blocks = 2 if kind is RelationKind.NONE else 3
        if self.attn.data.shape != (blocks * self.d_out,):
            raise ConfigError(
                f"attention vector shape {self.attn.data.shape} does not match "
                f"{blocks} blocks of width {self.d_out}"
            )
        if kind is RelationKind.NONE:
            if self.w_rel is not None:
                raise ConfigError("relation kind none takes no relation matrix")
        else:
            want = (self.d_out, kind.width_multiplier * self.d_in)
            if self.w_rel is None or self.w_rel.data.shape != want:
                got = None if self.w_rel is None else self.w_rel.data.shape
                raise ConfigError(f"relation matrix shape {got}, expected {want}")


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int
    hidden_dim: int = 64
    relation: RelationKind = RelationKind.NONE
    normalization: str = "none"  # none | pairnorm
    pairnorm_scale: float = 1.0
    dropout: float = 0.6
    leaky_slope: float = 0.2

    def __post_init__(self):
        if not 1 <= self.num_layers <= 64:
            raise ConfigError(f"num_layers must be in [1, 64], got {self.num_layers}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.normalization not in ("none", "pairnorm"):
            raise ConfigError(f"unknown normalization {self.normalization!r}")


def relation(h_i: Tensor, h_j: Tensor, kind: RelationKind) -> Tensor:
    """Pairwise relation feature of two embeddings, differentiable."""
    if kind is RelationKind.NONE:
        raise ConfigError("relation kind none contributes no term; do not call")
    if h_i.data.shape != h_j.data.shape:
        raise ConfigError(
            f"relation: shape mismatch {h_i.data.shape} vs {h_j.data.shape}"
        )
    if kind is RelationKind.DIFF:
        return ad.subtract(h_i, h_j)
    if kind is RelationKind.ABSDIFF:
        return ad.absolute(ad.subtract(h_i, h_j))
    if kind is RelationKind.PROD:
        return ad.multiply(h_i, h_j)
    return ad.concat(
        [ad.absolute(ad.subtract(h_i, h_j)), ad.multiply(h_i, h_j)]
    )


def _scores_from_projection(proj, h, src, dst, params, kind, slope):
    d_out = params.d_out
    a_dst = ad.slice_1d(params.attn, 0, d_out)
    a_src = ad.slice_1d(params.attn, d_out, 2 * d_out)
    raw = ad.add(
        ad.take_rows(ad.matmul(proj, a_dst), dst),
        ad.take_rows(ad.matmul(proj, a_src), src),
    )
    if kind is not RelationKind.NONE:
        a_rel = ad.slice_1d(params.attn, 2 * d_out, 3 * d_out)
        rel_weights = ad.matmul(a_rel, params.w_rel)
        raw = ad.add(raw, ad.relation_scores(h, src, dst, rel_weights, kind.kernel_code))
    return ad.leaky_relu(raw, slope)


def edge_scores(h: Tensor, edges, params: LayerParams, kind: RelationKind,
                slope: float = 0.2) -> Tensor:
    """Score every directed edge (j -> i); edges is an (src, dst) pair of
    index arrays. Relation features are taken from the raw inputs h."""
    params.validate(kind)
    src, dst = edges
    if not isinstance(h, Tensor):
        h = Tensor(h)
    proj = ad.linear(h, params.w_self)
    return _scores_from_projection(proj, h, src, dst, params, kind, slope)


def gat_layer_forward(h: Tensor, edges, params: LayerParams, config: ModelConfig,
                      training: bool, rng=None, is_output: bool = False,
                      return_alpha: bool = False):
    """One attention layer: softmax-normalised scores per destination node,
    weighted average of projected neighbour features, ELU for hidden layers
    and raw values for the output layer. Dropout hits the layer input and the
    attention coefficients during training."""
    params.validate(config.relation)
    src, dst = edges
    if not isinstance(h, Tensor):
        h = Tensor(h)
    n = h.data.shape[0]
    if training and rng is None:
        raise ConfigError("training forward requires an rng for dropout")
    x = ad.dropout(h, config.dropout, training, rng)
    proj = ad.linear(x, params.w_self)
    scores = _scores_from_projection(
        proj, x, src, dst, params, config.relation, config.leaky_slope
    )
    alpha = ad.segment_softmax(scores, dst, n)
    alpha_used = ad.dropout(alpha, config.dropout, training, rng)
    messages = ad.scale_rows(ad.take_rows(proj, src), alpha_used)
    aggregated = ad.segment_sum(messages, dst, n)
    out = aggregated if is_output else ad.elu(aggregated)
    if return_alpha:
        return out, alpha
    return out


def layer_dims(config: ModelConfig, d_in: int, num_classes: int):
    """Dimension chain d_in -> hidden -> ... -> hidden -> num_classes."""
    dims = []
    for layer in range(config.num_layers):
        i = d_in if layer == 0 else config.hidden_dim
        o = num_classes if layer == config.num_layers - 1 else config.hidden_dim
        dims.append((i, o))
    return dims


def _glorot(rng, shape):
    fan_out, fan_in = shape if len(shape) == 2 else (1, shape[0])
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(rng, config: ModelConfig, d_in: int, num_classes: int):
    """Glorot-uniform parameters for every layer, drawn in a fixed order
    (w_self, w_rel, attn per layer) so runs are reproducible from the rng."""
    params = []
    r = config.relation.width_multiplier
    for i, o in layer_dims(config, d_in, num_classes):
        w_self = Tensor(_glorot(rng, (o, i)), requires_grad=True)
        w_rel = None
        blocks = 2
        if config.relation is not RelationKind.NONE:
            w_rel = Tensor(_glorot(rng, (o, r * i)), requires_grad=True)
            blocks = 3
        attn = Tensor(_glorot(rng, (blocks * o,)), requires_grad=True)
        params.append(LayerParams(w_self=w_self, w_rel=w_rel, attn=attn))
    return params


@dataclass
class ForwardResult:
    logits: Tensor
    hidden: Tensor  # final hidden layer output (the logits when num_layers == 1)
    layers: list = field(default_factory=list)  # per-layer outputs if captured


def model_forward(features, edges, params, config: ModelConfig, training: bool,
                  rng=None, capture_layers: bool = False) -> ForwardResult:
    """Stacked attention layers with optional PairNorm after each hidden
    layer; the final layer emits unnormalised logits."""
    if len(params) != config.num_layers:
        raise ConfigError(
            f"{len(params)} layer parameter sets for num_layers={config.num_layers}"
        )
    h = features if isinstance(features, Tensor) else Tensor(features)
    captured = []
    hidden = None
    for idx, layer_params in enumerate(params):
        is_output = idx == config.num_layers - 1
        h = gat_layer_forward(
            h, edges, layer_params, config, training, rng, is_output=is_output
        )
        if not is_output and config.normalization == "pairnorm":
            h, _ = pairnorm(h, config.pairnorm_scale)
        if not is_output:
            hidden = h
        if capture_layers:
            captured.append(h)
    if hidden is None:  # single-layer model: logits double as representations
        hidden = h
    return ForwardResult(logits=h, hidden=hidden, layers=captured)


# ---------------------------------------------------------------------------
# checkpoint format: JSON manifest + flat little-endian float64 buffer


def save_checkpoint(directory, params, config: ModelConfig, extra: dict | None = None):
    """Write manifest.json (dims, relation, normalization, per-parameter
    offsets) and params.bin (little-endian float64, declared layer order)."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    entries = []
    offset = 0
    chunks = []
    for i, p in enumerate(params):
        layer = {}
        named = [("w_self", p.w_self)]
        if p.w_rel is not None:
            named.append(("w_rel", p.w_rel))
        named.append(("attn", p.attn))
        for name, tensor in named:
            arr = tensor.data
            layer[name] = {"shape": list(arr.shape), "offset": offset}
            offset += arr.size * 8
            chunks.append(arr.astype("<f8").tobytes())
        entries.append(layer)
    manifest = {
        "format": "relgat-checkpoint",
        "version": 1,
        "dtype": "<f8",
        "num_layers": config.num_layers,
        "hidden_dim": config.hidden_dim,
        "relation": config.relation.value,
        "normalization": config.normalization,
        "pairnorm_scale": config.pairnorm_scale,
        "dropout": config.dropout,
        "leaky_slope": config.leaky_slope,
        "layers": entries,
        "total_bytes": offset,
        "extra": extra or {},
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(directory, "params.bin"), "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(directory):
    """Inverse of save_checkpoint; returns (params, config, extra)."""
    directory = os.fspath(directory)
    try:
        with open(os.path.join(directory, "manifest.json"), "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        with open(os.path.join(directory, "params.bin"), "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"not a checkpoint directory: {directory} ({exc})") from None
    if manifest.get("format") != "relgat-checkpoint":
        raise ConfigError(f"{directory}: unrecognised checkpoint manifest")
    if len(blob) != manifest["total_bytes"]:
        raise ConfigError(
            f"{directory}: params.bin holds {len(blob)} bytes, "
            f"manifest declares {manifest['total_bytes']}"
        )
    config = ModelConfig(
        num_layers=manifest["num_layers"],
        hidden_dim=manifest["hidden_dim"],
        relation=RelationKind(manifest["relation"]),
        normalization=manifest["normalization"],
        pairnorm_scale=manifest["pairnorm_scale"],
        dropout=manifest["dropout"],
        leaky_slope=manifest["leaky_slope"],
    )
    params = []
    for layer in manifest["layers"]:
        loaded = {}
        for name, meta in layer.items():
            shape = tuple(meta["shape"])
            size = int(np.prod(shape))
            start = meta["offset"]
            arr = np.frombuffer(
                blob, dtype="<f8", count=size, offset=start
            ).reshape(shape).astype(np.float64)
            loaded[name] = Tensor(arr, requires_grad=True)
        params.append(
            LayerParams(
                w_self=loaded["w_self"],
                w_rel=loaded.get("w_rel"),
                attn=loaded["attn"],
            )
        )
    return params, config, manifest.get("extra", {})
