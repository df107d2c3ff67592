"""CNN/LSTM architecture search space: sampling, counting, (de)serialization,
and instantiation into runnable models.

Canonical record form is compact JSON with sorted keys; spec_hash is the
SHA-256 hex digest of those bytes, so identical architectures always map
to identical hashes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .nn.layers import ConvBlock, Linear, LSTMBlock, Model, ParamSet
from .nn.init import xavier_normal_init

INPUT_CHANNELS = 3
WINDOW_LEN = 100

CNN_CHANNEL_OPTIONS = tuple(range(8, 1025, 8))          # 128 options
CNN_KERNEL_OPTIONS = tuple(range(2, 10))                # 8 options
LSTM_HIDDEN_OPTIONS = tuple(range(8, 505, 8))           # 63 options
DROPOUT_OPTIONS = (0.1, 0.2, 0.3, 0.4, 0.5)


class SpecError(ValueError):
    """An architecture description violates the search-space constraints."""


class SpecParseError(ValueError):
    """A serialized architecture record could not be parsed."""


@dataclass(frozen=True)
class SearchSpaceConfig:
    """Parameter grids for sampling; defaults cover the full space, tests
    may narrow them."""

    cnn_depths: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)
    cnn_channels: tuple[int, ...] = CNN_CHANNEL_OPTIONS
    cnn_kernels: tuple[int, ...] = CNN_KERNEL_OPTIONS
    cnn_dropouts: tuple[float, ...] = DROPOUT_OPTIONS
    lstm_depths: tuple[int, ...] = (2, 3, 4)
    lstm_hidden: tuple[int, ...] = LSTM_HIDDEN_OPTIONS
    lstm_dropouts: tuple[float, ...] = DROPOUT_OPTIONS
    cnn_to_rnn_ratio: tuple[int, int] = (3, 1)
    sample_count: int = 1500
    num_classes: int = 6

    def validate(self) -> None:
        for name in ("cnn_depths", "cnn_channels", "cnn_kernels", "cnn_dropouts",
                     "lstm_depths", "lstm_hidden", "lstm_dropouts"):
            if not getattr(self, name):
                raise SpecError(f"search space range {name} is empty")
        a, b = self.cnn_to_rnn_ratio
        if a <= 0 or b <= 0:
            raise SpecError("cnn_to_rnn_ratio must be positive")
        if self.sample_count < 1:
            raise SpecError("sample_count must be positive")
        if self.num_classes < 2:
            raise SpecError("num_classes must be at least 2")

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpaceConfig":
        def grid(spec, cast):
            if isinstance(spec, dict):
                return tuple(cast(v) for v in
                             range(spec["min"], spec["max"] + 1, spec.get("step", 1)))
            return tuple(cast(v) for v in spec)

        kwargs = {}
        if "cnn" in d:
            c = d["cnn"]
            lo, hi = c.get("depth", (1, 7))
            kwargs["cnn_depths"] = tuple(range(lo, hi + 1))
            if "channels" in c:
                kwargs["cnn_channels"] = grid(c["channels"], int)
            if "kernel" in c:
                ks = c["kernel"]
                kwargs["cnn_kernels"] = (tuple(range(ks[0], ks[1] + 1))
                                         if isinstance(ks, (list, tuple)) and len(ks) == 2
                                         else grid(ks, int))
            if "dropout" in c:
                kwargs["cnn_dropouts"] = grid(c["dropout"], float)
        if "lstm" in d:
            l = d["lstm"]
            lo, hi = l.get("depth", (2, 4))
            kwargs["lstm_depths"] = tuple(range(lo, hi + 1))
            if "hidden" in l:
                kwargs["lstm_hidden"] = grid(l["hidden"], int)
            if "dropout" in l:
                kwargs["lstm_dropouts"] = grid(l["dropout"], float)
        if "cnn_to_rnn_ratio" in d:
            kwargs["cnn_to_rnn_ratio"] = tuple(d["cnn_to_rnn_ratio"])
        if "sample_count" in d:
            kwargs["sample_count"] = int(d["sample_count"])
        if "num_classes" in d:
            kwargs["num_classes"] = int(d["num_classes"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class CnnLayer:
    out_channels: int
    kernel: int
    dropout: float


@dataclass(frozen=True)
class LstmLayer:
    hidden: int
    dropout: float


@dataclass(frozen=True)
class ArchSpec:
    kind: str                                    # "cnn" | "lstm"
    cnn_layers: tuple[CnnLayer, ...] = ()
    lstm_layers: tuple[LstmLayer, ...] = ()
    input_channels: int = INPUT_CHANNELS
    num_classes: int = 6

    def validate(self) -> None:
        if self.kind == "cnn":
            if not 1 <= len(self.cnn_layers) <= 7:
                raise SpecError(f"cnn depth {len(self.cnn_layers)} outside 1..7")
            if self.lstm_layers:
                raise SpecError("cnn spec must not carry lstm layers")
            for i, layer in enumerate(self.cnn_layers):
                if layer.out_channels not in CNN_CHANNEL_OPTIONS:
                    raise SpecError(f"layer {i}: out_channels {layer.out_channels} not in 8..1024 step 8")
                if layer.kernel not in CNN_KERNEL_OPTIONS:
                    raise SpecError(f"layer {i}: kernel {layer.kernel} outside 2..9")
                if round(layer.dropout, 1) not in DROPOUT_OPTIONS or abs(layer.dropout - round(layer.dropout, 1)) > 1e-12:
                    raise SpecError(f"layer {i}: dropout {layer.dropout} not on the 0.1..0.5 grid")
        elif self.kind == "lstm":
            if not 2 <= len(self.lstm_layers) <= 4:
                raise SpecError(f"lstm depth {len(self.lstm_layers)} outside 2..4")
            if self.cnn_layers:
                raise SpecError("lstm spec must not carry cnn layers")
            for i, layer in enumerate(self.lstm_layers):
                if layer.hidden not in LSTM_HIDDEN_OPTIONS:
                    raise SpecError(f"layer {i}: hidden {layer.hidden} not in 8..504 step 8")
                last = i == len(self.lstm_layers) - 1
                if last:
                    if layer.dropout != 0.0:
                        raise SpecError(f"final lstm layer dropout must be 0.0, got {layer.dropout}")
                elif round(layer.dropout, 1) not in DROPOUT_OPTIONS or abs(layer.dropout - round(layer.dropout, 1)) > 1e-12:
                    raise SpecError(f"layer {i}: dropout {layer.dropout} not on the 0.1..0.5 grid")
        else:
            raise SpecError(f"unknown architecture kind {self.kind!r}")
        if self.input_channels < 1:
            raise SpecError("input_channels must be positive")
        if self.num_classes < 2:
            raise SpecError("num_classes must be at least 2")

    def to_record(self) -> dict:
        rec = {
            "kind": self.kind,
            "input_channels": self.input_channels,
            "num_classes": self.num_classes,
        }
        if self.kind == "cnn":
            rec["cnn_layers"] = [
                {"out_channels": l.out_channels, "kernel": l.kernel, "dropout": l.dropout}
                for l in self.cnn_layers
            ]
        else:
            rec["lstm_layers"] = [
                {"hidden": l.hidden, "dropout": l.dropout} for l in self.lstm_layers
            ]
        return rec

    @property
    def spec_hash(self) -> str:
        return hashlib.sha256(serialize(self).encode("utf-8")).hexdigest()


def serialize(spec: ArchSpec) -> str:
    """Canonical text record: compact JSON, keys sorted."""
    return json.dumps(spec.to_record(), sort_keys=True, separators=(",", ":"))


def deserialize(text: str) -> ArchSpec:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"invalid architecture record: {exc}") from exc
    if not isinstance(rec, dict):
        raise SpecParseError("architecture record must be a JSON object")
    if "kind" not in rec:
        raise SpecParseError("architecture record missing field 'kind'")
    kind = rec["kind"]
    try:
        if kind == "cnn":
            layers = tuple(
                CnnLayer(int(l["out_channels"]), int(l["kernel"]), float(l["dropout"]))
                for l in rec["cnn_layers"]
            )
            spec = ArchSpec(kind="cnn", cnn_layers=layers,
                            input_channels=int(rec.get("input_channels", INPUT_CHANNELS)),
                            num_classes=int(rec["num_classes"]))
        elif kind == "lstm":
            layers = tuple(
                LstmLayer(int(l["hidden"]), float(l["dropout"])) for l in rec["lstm_layers"]
            )
            spec = ArchSpec(kind="lstm", lstm_layers=layers,
                            input_channels=int(rec.get("input_channels", INPUT_CHANNELS)),
                            num_classes=int(rec["num_classes"]))
        else:
            raise SpecParseError(f"unknown architecture kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SpecParseError):
            raise
        raise SpecParseError(f"malformed architecture record field: {exc}") from exc
    spec.validate()
    return spec


def sample_architectures(config: SearchSpaceConfig, rng_seed: int) -> list[ArchSpec]:
    """Draw sample_count specs, CNNs first then LSTMs, split by the
    configured ratio (CNN share rounded to nearest)."""
    config.validate()
    rng = np.random.default_rng(rng_seed)
    cnn_share, rnn_share = config.cnn_to_rnn_ratio
    n_cnn = round(config.sample_count * cnn_share / (cnn_share + rnn_share))
    n_lstm = config.sample_count - n_cnn

    def choice(options):
        return options[int(rng.integers(len(options)))]

    specs: list[ArchSpec] = []
    for _ in range(n_cnn):
        depth = choice(config.cnn_depths)
        layers = tuple(
            CnnLayer(choice(config.cnn_channels), choice(config.cnn_kernels),
                     choice(config.cnn_dropouts))
            for _ in range(depth)
        )
        specs.append(ArchSpec(kind="cnn", cnn_layers=layers, num_classes=config.num_classes))
    for _ in range(n_lstm):
        depth = choice(config.lstm_depths)
        layers = []
        for i in range(depth):
            dropout = 0.0 if i == depth - 1 else choice(config.lstm_dropouts)
            layers.append(LstmLayer(choice(config.lstm_hidden), dropout))
        specs.append(ArchSpec(kind="lstm", lstm_layers=tuple(layers),
                              num_classes=config.num_classes))
    for spec in specs:
        spec.validate()
    return specs


def count_search_space(config: SearchSpaceConfig) -> dict[str, int]:
    """Exact cardinality of each family, summed over allowed depths.

    CNN layers draw (channels, kernel, dropout) independently; LSTM layers
    draw (hidden, dropout) except the final layer, whose dropout is fixed.
    """
    config.validate()
    per_cnn_layer = len(config.cnn_channels) * len(config.cnn_kernels) * len(config.cnn_dropouts)
    cnn_total = sum(per_cnn_layer ** d for d in config.cnn_depths)
    per_lstm_layer = len(config.lstm_hidden) * len(config.lstm_dropouts)
    per_lstm_final = len(config.lstm_hidden)
    lstm_total = sum(per_lstm_layer ** (d - 1) * per_lstm_final for d in config.lstm_depths)
    return {"cnn_total": cnn_total, "lstm_total": lstm_total}


def instantiate(spec: ArchSpec, num_classes: int, rng_seed: int,
                input_length: int = WINDOW_LEN) -> Model:
    """Build and Xavier-initialize a Model from a validated spec.

    The dropout RNG stream is derived from the same seed, so identical
    (spec, seed) pairs yield bit-identical models.
    """
    spec.validate()
    if num_classes != spec.num_classes:
        raise SpecError(f"spec declares {spec.num_classes} classes, asked to build {num_classes}")
    params = ParamSet()
    blocks: list = []
    if spec.kind == "cnn":
        shrink = sum(l.kernel - 1 for l in spec.cnn_layers)
        if shrink >= input_length:
            raise SpecError(
                f"kernels consume {shrink} of {input_length} input steps; no output left")
        in_ch = spec.input_channels
        for i, layer in enumerate(spec.cnn_layers, start=1):
            blocks.append(ConvBlock(f"conv{i}", params, in_ch, layer.out_channels,
                                    layer.kernel, layer.dropout))
            in_ch = layer.out_channels
        head = Linear("head", params, in_ch, num_classes)
    else:
        in_ch = spec.input_channels
        for i, layer in enumerate(spec.lstm_layers, start=1):
            blocks.append(LSTMBlock(f"lstm{i}", params, in_ch, layer.hidden, layer.dropout))
            in_ch = layer.hidden
        head = Linear("head", params, in_ch, num_classes)
    xavier_normal_init(params, rng_seed)
    dropout_rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0x5EED]))
    return Model(spec.kind, blocks, head, params, spec.input_channels, num_classes, dropout_rng)


def derive_seed(base_seed: int, *tags: str) -> int:
    """Stable per-architecture seed: hash of the base seed plus tag strings."""
    text = ":".join([str(base_seed), *tags])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
