"""Network definitions.

Two trainable architectures share one flat parameter vector layout:

* TBNet: a shared trunk feeding one small branch per output variable,
  each branch ending in its own one-neuron linear head.
* FNNBaseline: a single stack of layers with a multi-output linear head,
  used for like-for-like architecture comparisons.

Freeze masks mark whole components (trunk or a named branch); frozen
parameters receive exactly zero gradient and are never touched by the
optimizers.  Checkpoints are versioned files with a JSON header and the
raw little-endian float64 parameter payload, so round trips are bit-exact.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

ACTIVATIONS = ("sine", "tanh", "linear")

CHECKPOINT_FORMAT = "porepinn-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Corrupt, truncated, or incompatible checkpoint file."""


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"layer width must be >= 1, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class Slot:
    """One parameter array inside the flat vector."""

    component: str
    layer: int
    kind: str  # "W" or "b"
    shape: tuple
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class Segment:
    """A stack of layers fed either by the inputs or by another component."""

    component: str
    layers: tuple
    source: str  # "input" or a component name


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class ParamNet:
    """Shared parameter plumbing for both architectures."""

    kind = "base"

    def __init__(self, input_dim: int, output_order: tuple):
        if input_dim not in (2, 3):
            raise ValueError(f"input_dim must be 2 or 3, got {input_dim}")
        self.input_dim = int(input_dim)
        self.output_order = tuple(output_order)
        self.theta = np.zeros(0)
        self.slots: list[Slot] = []
        self.slot_map: dict = {}
        self.frozen_components: set = set()
        self._frozen_mask_cache: Optional[np.ndarray] = None

    # -- parameter layout ---------------------------------------------------

    def _alloc(self, rng: np.random.Generator, segments) -> None:
        slots = []
        chunks = []
        offset = 0
        for seg in segments:
            fan_in = self.input_dim if seg.source == "input" else self._component_width(seg.source)
            for li, layer in enumerate(seg.layers):
                w = _glorot(rng, fan_in, layer.width)
                b = np.zeros(layer.width)
                slots.append(Slot(seg.component, li, "W", (fan_in, layer.width), offset))
                offset += w.size
                slots.append(Slot(seg.component, li, "b", (layer.width,), offset))
                offset += b.size
                chunks.append(w.ravel())
                chunks.append(b)
                fan_in = layer.width
        self.theta = np.concatenate(chunks) if chunks else np.zeros(0)
        self.slots = slots
        self.slot_map = {(s.component, s.layer, s.kind): s for s in slots}

    def _component_width(self, component: str) -> int:
        raise NotImplementedError

    def segments(self) -> list:
        raise NotImplementedError

    def output_map(self) -> dict:
        raise NotImplementedError

    @property
    def n_params(self) -> int:
        return self.theta.size

    def slot_view(self, slot: Slot) -> np.ndarray:
        return self.theta[slot.offset : slot.offset + slot.size].reshape(slot.shape)

    def component_names(self) -> tuple:
        return tuple(dict.fromkeys(s.component for s in self.slots))

    # -- freezing -------------------------------------------------------------

    def freeze(self, components) -> "ParamNet":
        for name in components:
            if name not in self.component_names():
                raise KeyError(f"unknown component {name!r}")
        self.frozen_components |= set(components)
        self._frozen_mask_cache = None
        return self

    def unfreeze(self, components) -> "ParamNet":
        for name in components:
            if name not in self.component_names():
                raise KeyError(f"unknown component {name!r}")
        self.frozen_components -= set(components)
        self._frozen_mask_cache = None
        return self

    def is_frozen(self, component: str) -> bool:
        return component in self.frozen_components

    def frozen_param_mask(self) -> np.ndarray:
        """Boolean mask over the flat parameter vector (True = frozen)."""
        if self._frozen_mask_cache is None:
            mask = np.zeros(self.n_params, dtype=bool)
            for s in self.slots:
                if s.component in self.frozen_components:
                    mask[s.offset : s.offset + s.size] = True
            self._frozen_mask_cache = mask
        return self._frozen_mask_cache

    # -- plain value-only forward pass ---------------------------------------

    def predict(self, points: np.ndarray) -> np.ndarray:
        """Network outputs at `points` (N, input_dim), shape (N, n_outputs)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.input_dim:
            raise ValueError(
                f"expected points with {self.input_dim} coordinates, got {points.shape[1]}")
        cache = {"input": points}
        for seg in self.segments():
            x = cache[seg.source]
            for li, layer in enumerate(seg.layers):
                W = self.slot_view(self.slot_map[(seg.component, li, "W")])
                b = self.slot_view(self.slot_map[(seg.component, li, "b")])
                x = x @ W + b
                if layer.activation == "tanh":
                    x = np.tanh(x)
                elif layer.activation == "sine":
                    x = np.sin(x)
            cache[seg.component] = x
        omap = self.output_map()
        cols = [cache[omap[name][0]][:, omap[name][1]] for name in self.output_order]
        return np.stack(cols, axis=1)

    # -- persistence -----------------------------------------------------------

    def _arch_header(self) -> dict:
        raise NotImplementedError

    def checkpoint_header(self, case: str = "", epochs: int = 0, seed: int = 0) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "input_dim": self.input_dim,
            "output_order": list(self.output_order),
            "arch": self._arch_header(),
            "frozen_components": sorted(self.frozen_components),
            "case": case,
            "epochs": int(epochs),
            "seed": int(seed),
            "n_params": int(self.n_params),
        }


class TBNet(ParamNet):
    """Shared trunk + one branch per output, each branch ending in its head."""

    kind = "tbnet"

    def __init__(self, input_dim: int, trunk_layers, branches: dict, output_order=None,
                 seed: int = 0, _defer_alloc: bool = False):
        if not branches:
            raise ValueError("at least one branch is required")
        order = tuple(output_order) if output_order is not None else tuple(branches)
        if set(order) != set(branches):
            raise ValueError("output_order must name exactly the branch outputs")
        super().__init__(input_dim, order)
        self.trunk_layers = tuple(trunk_layers)
        self.branch_layers = {name: tuple(branches[name]) for name in order}
        for name, layers in self.branch_layers.items():
            if not layers:
                raise ValueError(f"branch {name!r} has no layers")
        if not _defer_alloc:
            self._alloc(np.random.default_rng(seed), self.segments())

    def _component_width(self, component: str) -> int:
        if component == "trunk":
            return self.trunk_layers[-1].width
        return self.branch_layers[component][-1].width

    def segments(self) -> list:
        segs = [Segment("trunk", self.trunk_layers, "input")]
        segs.extend(Segment(name, self.branch_layers[name], "trunk")
                    for name in self.output_order)
        return segs

    def output_map(self) -> dict:
        return {name: (name, 0) for name in self.output_order}

    def _arch_header(self) -> dict:
        return {
            "trunk": [[l.width, l.activation] for l in self.trunk_layers],
            "branches": {
                name: [[l.width, l.activation] for l in layers]
                for name, layers in self.branch_layers.items()
            },
        }


class FNNBaseline(ParamNet):
    """One stack of layers; the last layer is the multi-output linear head."""

    kind = "fnn"

    def __init__(self, input_dim: int, layers, output_order, seed: int = 0,
                 _defer_alloc: bool = False):
        super().__init__(input_dim, tuple(output_order))
        self.layers = tuple(layers)
        if self.layers[-1].width != len(self.output_order):
            raise ValueError("final layer width must equal the number of outputs")
        self.output_dim = len(self.output_order)
        if not _defer_alloc:
            self._alloc(np.random.default_rng(seed), self.segments())

    def _component_width(self, component: str) -> int:
        return self.layers[-1].width

    def segments(self) -> list:
        return [Segment("net", self.layers, "input")]

    def output_map(self) -> dict:
        return {name: ("net", i) for i, name in enumerate(self.output_order)}

    def _arch_header(self) -> dict:
        return {"layers": [[l.width, l.activation] for l in self.layers]}


# ---------------------------------------------------------------------------
# builders


def _as_layer(obj) -> LayerSpec:
    """Coerce a LayerSpec, {"width", "activation"} dict, or (width, act) pair."""
    if isinstance(obj, LayerSpec):
        return obj
    if isinstance(obj, dict):
        return LayerSpec(int(obj["width"]), obj["activation"])
    width, act = obj
    return LayerSpec(int(width), act)


def _as_layers(seq) -> tuple:
    return tuple(_as_layer(o) for o in seq)


def _hidden_plus_head(hidden, head_width: int) -> tuple:
    return _as_layers(hidden) + (LayerSpec(head_width, "linear"),)


def init_tbnet(arch: dict, seed: int) -> TBNet:
    """Build a TBNet from an architecture description.

    arch keys: input_dim, trunk (list of LayerSpec), branches (mapping
    output name -> list of hidden LayerSpec; a one-neuron linear head is
    appended unless `head_counted` is true, in which case the last listed
    layer is replaced by the head), optional output_order.
    """
    head_counted = bool(arch.get("head_counted", False))
    branches = {}
    for name, hidden in arch["branches"].items():
        hidden = tuple(hidden)
        if head_counted:
            if not hidden:
                raise ValueError(f"branch {name!r} needs at least one layer")
            hidden = hidden[:-1]
        branches[name] = _hidden_plus_head(hidden, 1)
    return TBNet(
        arch["input_dim"],
        _as_layers(arch["trunk"]),
        branches,
        output_order=arch.get("output_order"),
        seed=seed,
    )


def init_fnn(arch: dict, seed: int) -> FNNBaseline:
    """Build the baseline from: input_dim, layers (hidden), output_order."""
    order = tuple(arch["output_order"])
    layers = _hidden_plus_head(tuple(arch["layers"]), len(order))
    return FNNBaseline(arch["input_dim"], layers, order, seed=seed)


def extend_tbnet(net: TBNet, new_branches: dict, seed: int) -> TBNet:
    """Return a TBNet with extra branches, existing parameters copied bit-exactly.

    New branch parameters are freshly initialized from `seed`; the trunk and
    the existing branches keep their exact values, so existing outputs are
    unchanged.
    """
    for name in new_branches:
        if name in net.branch_layers:
            raise ValueError(f"branch {name!r} already exists")
    branches = dict(net.branch_layers)
    branches.update({name: _hidden_plus_head(layers, 1)
                     for name, layers in new_branches.items()})
    order = net.output_order + tuple(new_branches)
    out = TBNet(net.input_dim, net.trunk_layers, branches, output_order=order,
                seed=seed)
    for slot in out.slots:
        key = (slot.component, slot.layer, slot.kind)
        if key in net.slot_map:
            out.slot_view(slot)[...] = net.slot_view(net.slot_map[key])
    out.frozen_components = set(net.frozen_components)
    out._frozen_mask_cache = None
    return out


def freeze(net: ParamNet, components) -> ParamNet:
    """Mark components frozen (in place); their gradients become exactly zero."""
    return net.freeze(components)


def unfreeze(net: ParamNet, components) -> ParamNet:
    return net.unfreeze(components)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(net: ParamNet, path, case: str = "", epochs: int = 0,
                    seed: int = 0) -> None:
    header = net.checkpoint_header(case=case, epochs=epochs, seed=seed)
    payload = np.ascontiguousarray(net.theta, dtype="<f8").tobytes()
    header["payload_bytes"] = len(payload)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def _net_from_header(header: dict) -> ParamNet:
    arch = header["arch"]
    order = tuple(header["output_order"])
    if header["kind"] == "tbnet":
        trunk = tuple(LayerSpec(w, a) for w, a in arch["trunk"])
        branches = {name: tuple(LayerSpec(w, a) for w, a in layers)
                    for name, layers in arch["branches"].items()}
        net = TBNet(header["input_dim"], trunk, branches, output_order=order)
    elif header["kind"] == "fnn":
        layers = tuple(LayerSpec(w, a) for w, a in arch["layers"])
        net = FNNBaseline(header["input_dim"], layers, order)
    else:
        raise CheckpointError(f"unknown network kind {header['kind']!r}")
    return net


def load_checkpoint(path) -> tuple:
    """Load a checkpoint; returns (net, metadata dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise CheckpointError("missing checkpoint header")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a checkpoint file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {header.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    payload = data[nl + 1 :]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError("truncated checkpoint payload")
    net = _net_from_header(header)
    expected = net.n_params * 8
    if len(payload) != expected:
        raise CheckpointError(
            f"parameter payload is {len(payload)} bytes, architecture needs {expected}")
    net.theta[...] = np.frombuffer(payload, dtype="<f8")
    net.freeze(header.get("frozen_components", []))
    meta = {k: header[k] for k in ("case", "epochs", "seed")}
    return net, meta
