"""CorGAN networks, the MLP baseline, generation, and checkpoint files.

A :class:`ArchitectureDescriptor` lists every layer of every network, so
it alone determines all parameter shapes. :func:`default_descriptor`
produces the stock architectures; :func:`build` allocates parameters.

Checkpoint layout (all integers little-endian)::

    b"CORGAN1\\0"                       magic
    u32 version                         currently 1
    u32 len, bytes                      descriptor JSON (UTF-8)
    u32 count                           number of named tensors
    repeated count times:
        u16 len, bytes                  tensor name (UTF-8)
        u8 ndim, ndim x u64             shape
        prod(shape) x f64               row-major values
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import RecordMatrix
from .errors import ConfigurationError, ParseError, ShapeError
from .layers import LayerSpec, Module, Sequential, build_stack, corrupt
from .tensor import Tensor, no_grad, straight_through_round

MAGIC = b"CORGAN1\0"
FORMAT_VERSION = 1

MODES = ("discrete", "continuous")
FAMILIES = ("corgan", "mlp-baseline")
# Dense stand-ins match the conv activation widths up to this cap; beyond it
# a square dense layer would need hundreds of millions of weights.
MLP_MAX_WIDTH = 2048


def _conv_len(length: int, kernel: int = 5, stride: int = 2, padding: int = 2) -> int:
    return (length + 2 * padding - kernel) // stride + 1


@dataclass(frozen=True)
class ArchitectureDescriptor:
    mode: str
    family: str
    record_width: int
    code_width: int
    noise_width: int
    encoder: tuple[LayerSpec, ...] = ()
    decoder: tuple[LayerSpec, ...] = ()
    generator: tuple[LayerSpec, ...] = ()
    discriminator: tuple[LayerSpec, ...] = ()
    n_classes: int = 0  # > 0: one generator/discriminator pair per class

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}")
        if min(self.record_width, self.noise_width) < 1 or self.code_width < 0:
            raise ConfigurationError("widths must be positive")
        if self.mode == "continuous" and (self.encoder or self.decoder):
            raise ConfigurationError("continuous mode has no autoencoder")
        if self.mode == "discrete" and not (self.encoder and self.decoder):
            raise ConfigurationError("discrete mode needs encoder and decoder layers")
        if self.mode == "discrete" and self.n_classes:
            raise ConfigurationError("class-conditional generators are only supported in continuous mode")

    @property
    def generator_out_width(self) -> int:
        return self.code_width if self.mode == "discrete" else self.record_width

    @property
    def n_generators(self) -> int:
        return max(1, self.n_classes)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "family": self.family, "record_width": self.record_width,
            "code_width": self.code_width, "noise_width": self.noise_width, "n_classes": self.n_classes,
            "encoder": [s.to_dict() for s in self.encoder],
            "decoder": [s.to_dict() for s in self.decoder],
            "generator": [s.to_dict() for s in self.generator],
            "discriminator": [s.to_dict() for s in self.discriminator],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureDescriptor":
        stacks = {k: tuple(LayerSpec.from_dict(s) for s in d.get(k, [])) for k in
                  ("encoder", "decoder", "generator", "discriminator")}
        return cls(d["mode"], d["family"], int(d["record_width"]), int(d["code_width"]),
                   int(d["noise_width"]), n_classes=int(d.get("n_classes", 0)), **stacks)

    @classmethod
    def from_json(cls, text: str) -> "ArchitectureDescriptor":
        return cls.from_dict(json.loads(text))


def default_descriptor(mode: str = "discrete", family: str = "corgan", record_width: int = 1071,
                       code_width: int = 128, noise_width: int = 128, n_kernels: int = 32,
                       kernel_dim: int = 8, slope: float = 0.2, n_classes: int = 0) -> ArchitectureDescriptor:
    """Stock architecture: two strided conv blocks per network (or dense stand-ins)."""
    M, H = record_width, code_width
    conv = family == "corgan"
    L1 = _conv_len(M)
    L2 = _conv_len(L1)
    flat = 64 * L2 if conv else min(64 * L2, MLP_MAX_WIDTH)
    h1 = min(32 * L1, MLP_MAX_WIDTH)

    def down(width):
        """Two downsampling blocks (conv or dense) applied to a flat record of ``width``."""
        if conv:
            return [
                LayerSpec("reshape", {"shape": (1, width)}),
                LayerSpec("conv1d", {"c_in": 1, "c_out": 32, "kernel": 5, "stride": 2, "padding": 2}),
                LayerSpec("leaky_relu", {"slope": slope}),
                LayerSpec("conv1d", {"c_in": 32, "c_out": 64, "kernel": 5, "stride": 2, "padding": 2}),
                LayerSpec("leaky_relu", {"slope": slope}),
                LayerSpec("flatten"),
            ]
        return [
            LayerSpec("dense", {"n_in": width, "n_out": h1}),
            LayerSpec("leaky_relu", {"slope": slope}),
            LayerSpec("dense", {"n_in": h1, "n_out": flat}),
            LayerSpec("leaky_relu", {"slope": slope}),
        ]

    def up(n_in, out_width, seed_len, act, batchnorm):
        """Project to ``64 x seed_len``, upsample x4, crop to ``out_width``."""
        w1 = 64 * seed_len if conv else min(64 * seed_len, MLP_MAX_WIDTH)
        w2 = 64 * seed_len if conv else min(64 * seed_len, MLP_MAX_WIDTH)
        layers = [LayerSpec("dense", {"n_in": n_in, "n_out": w1})]
        if conv:
            layers.append(LayerSpec("reshape", {"shape": (64, seed_len)}))
        layers += [LayerSpec("batchnorm1d", {"channels": 64 if conv else w1})] if batchnorm else []
        layers.append(LayerSpec(act, {"slope": slope} if act == "leaky_relu" else {}))
        if conv:
            layers.append(LayerSpec("conv1d_transpose", {"c_in": 64, "c_out": 32, "kernel": 4, "stride": 2,
                                                         "padding": 1}))
        else:
            layers.append(LayerSpec("dense", {"n_in": w1, "n_out": w2}))
        layers += [LayerSpec("batchnorm1d", {"channels": 32 if conv else w2})] if batchnorm else []
        layers.append(LayerSpec(act, {"slope": slope} if act == "leaky_relu" else {}))
        if conv:
            layers += [
                LayerSpec("conv1d_transpose", {"c_in": 32, "c_out": 1, "kernel": 4, "stride": 2, "padding": 1}),
                LayerSpec("crop", {"length": out_width}),
                LayerSpec("reshape", {"shape": (out_width,)}),
            ]
        else:
            layers.append(LayerSpec("dense", {"n_in": w2, "n_out": out_width}))
        return layers

    encoder, decoder = (), ()
    if mode == "discrete":
        encoder = tuple(down(M) + [LayerSpec("dense", {"n_in": flat, "n_out": H})])
        decoder = tuple(up(H, M, L2, "leaky_relu", batchnorm=False) + [LayerSpec("sigmoid")])
    g_out = H if mode == "discrete" else M
    generator = up(noise_width, g_out, math.ceil(g_out / 4), "relu", batchnorm=True) + [LayerSpec("tanh")]
    if mode == "discrete":
        generator.append(LayerSpec("affine", {"width": H}))
    discriminator = down(M) + [
        LayerSpec("minibatch_discrimination", {"n_features": flat, "n_kernels": n_kernels, "kernel_dim": kernel_dim}),
        LayerSpec("dense", {"n_in": flat + n_kernels, "n_out": 1}),
        LayerSpec("sigmoid"),
        LayerSpec("reshape", {"shape": ()}),
    ]
    return ArchitectureDescriptor(mode, family, M, H if mode == "discrete" else 0, noise_width,
                                  encoder, decoder, tuple(generator), tuple(discriminator), n_classes)


def expected_parameter_count(specs) -> int:
    """Parameter count implied by a layer list, without allocating anything."""
    total = 0
    for s in specs:
        p = s.params
        if s.kind == "dense":
            total += p["n_in"] * p["n_out"] + p["n_out"]
        elif s.kind == "conv1d":
            total += p["c_out"] * p["c_in"] * p["kernel"] + p["c_out"]
        elif s.kind == "conv1d_transpose":
            total += p["c_in"] * p["c_out"] * p["kernel"] + p["c_out"]
        elif s.kind == "batchnorm1d":
            total += 2 * p["channels"]
        elif s.kind == "minibatch_discrimination":
            total += p["n_features"] * p["n_kernels"] * p["kernel_dim"]
        elif s.kind == "affine":
            total += 2 * p["width"]
    return total


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class Autoencoder(Module):
    def __init__(self, encoder: Sequential, decoder: Sequential):
        self.encoder = encoder
        self.decoder = decoder

    def forward(self, x):
        return self.decoder(self.encoder(x))


@dataclass
class ModelBundle:
    """All networks for one run plus data-dependent extras (class prior, scaler)."""
    descriptor: ArchitectureDescriptor
    autoencoder: Autoencoder | None
    generators: list[Sequential]
    discriminators: list[Sequential]
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def generator(self) -> Sequential:
        return self.generators[0]

    @property
    def discriminator(self) -> Sequential:
        return self.discriminators[0]

    @property
    def decoder(self) -> Sequential | None:
        return None if self.autoencoder is None else self.autoencoder.decoder

    def modules(self) -> dict[str, Module]:
        mods: dict[str, Module] = {}
        if self.autoencoder is not None:
            mods["encoder"] = self.autoencoder.encoder
            mods["decoder"] = self.autoencoder.decoder
        for i, g in enumerate(self.generators):
            mods["generator" if i == 0 and len(self.generators) == 1 else f"generator{i}"] = g
        for i, d in enumerate(self.discriminators):
            mods["discriminator" if i == 0 and len(self.discriminators) == 1 else f"discriminator{i}"] = d
        return mods

    def state(self) -> dict[str, np.ndarray]:
        """Every named array (parameters, buffers, extras) in a fixed order."""
        out: dict[str, np.ndarray] = {}
        for prefix, mod in self.modules().items():
            for name, p in mod.named_parameters(prefix + "."):
                out[name] = p.data
            for name, b in mod.named_buffers(prefix + "."):
                out[name] = b
        for name in sorted(self.extras):
            out["extra." + name] = np.asarray(self.extras[name], dtype=np.float64)
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = {k for k in self.state() if not k.startswith("extra.")} - set(state)
        if missing:
            raise ParseError(f"checkpoint lacks tensors: {sorted(missing)[:5]}")
        for prefix, mod in self.modules().items():
            for name, p in mod.named_parameters(prefix + "."):
                if state[name].shape != p.data.shape:
                    raise ShapeError(f"{name}: checkpoint shape {state[name].shape} vs model {p.data.shape}")
                p.data = np.array(state[name], dtype=np.float64)
            for name, b in mod.named_buffers(prefix + "."):
                b[...] = state[name]
        self.extras = {k[len("extra."):]: np.array(v) for k, v in state.items() if k.startswith("extra.")}


def build(descriptor: ArchitectureDescriptor, rng: np.random.Generator | int = 0) -> ModelBundle:
    """Allocate and initialise every network named by ``descriptor``."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ae = None
    if descriptor.mode == "discrete":
        ae = Autoencoder(build_stack(list(descriptor.encoder), rng), build_stack(list(descriptor.decoder), rng))
    gens = [build_stack(list(descriptor.generator), rng) for _ in range(descriptor.n_generators)]
    discs = [build_stack(list(descriptor.discriminator), rng) for _ in range(descriptor.n_generators)]
    bundle = ModelBundle(descriptor, ae, gens, discs)
    _check_widths(bundle)
    return bundle


def _check_widths(bundle: ModelBundle) -> None:
    d = bundle.descriptor
    probe = Tensor(np.zeros((2, d.noise_width)))
    with no_grad():
        was = bundle.generator.training
        bundle.generator.eval()
        try:
            out = bundle.generator(probe)
            if out.shape != (2, d.generator_out_width):
                raise ConfigurationError(f"generator emits width {out.shape[1:]}, expected {d.generator_out_width}")
            if bundle.autoencoder is not None:
                code = bundle.autoencoder.encoder(Tensor(np.zeros((2, d.record_width))))
                if code.shape != (2, d.code_width):
                    raise ConfigurationError(f"encoder emits {code.shape[1:]}, expected code width {d.code_width}")
                rec = bundle.autoencoder.decoder(out)
                if rec.shape != (2, d.record_width):
                    raise ConfigurationError(f"decoder emits {rec.shape[1:]}, expected {d.record_width}")
            score = bundle.discriminator(Tensor(np.zeros((2, d.record_width))))
            if score.shape != (2,):
                raise ConfigurationError(f"discriminator emits {score.shape}, expected one score per record")
        except ShapeError as exc:
            raise ConfigurationError(f"inconsistent descriptor: {exc}") from exc
        finally:
            bundle.generator.train(was)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def synthesize(generator: Module, decoder: Module | None, z: Tensor, mode: str) -> Tensor:
    """Differentiable sample path: ``round(Dec(G(z)))`` (straight-through) or ``G(z)``."""
    out = generator(z)
    if mode == "discrete":
        if decoder is None:
            raise ConfigurationError("discrete mode needs a decoder")
        return straight_through_round(decoder(out))
    return out


def generate(generator: Module, decoder: Module | None, z, mode: str) -> RecordMatrix:
    """Records for noise ``z`` with the generator in inference mode."""
    if mode == "discrete" and decoder is None:
        raise ConfigurationError("discrete mode needs a decoder")
    z = z if isinstance(z, Tensor) else Tensor(z)
    was = generator.training
    generator.eval()
    try:
        with no_grad():
            out = synthesize(generator, decoder, z, mode).data
    finally:
        generator.train(was)
    return RecordMatrix(out, "binary" if mode == "discrete" else "continuous")


def reconstruct(autoencoder: Autoencoder, x, drop_prob: float = 0.0, rng=None) -> Tensor:
    """``Dec(Enc(x))``, corrupting the encoder input when ``drop_prob > 0``."""
    values = x.values if isinstance(x, RecordMatrix) else x
    values = values if isinstance(values, Tensor) else Tensor(values)
    if values.ndim != 2:
        raise ShapeError(f"reconstruct: expected a 2-d batch, got {values.shape}")
    if drop_prob > 0:
        values = corrupt(values, drop_prob, rng if rng is not None else 0)
    return autoencoder(values)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, bundle: ModelBundle) -> None:
    header = bundle.descriptor.to_json().encode("utf-8")
    state = bundle.state()
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header)), header, struct.pack("<I", len(state))]
    for name, arr in state.items():
        raw_name = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> tuple[ArchitectureDescriptor, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise ParseError(f"{path}: not a CORGAN1 checkpoint")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise ParseError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    version, hlen = take("<II")
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    if pos + hlen > len(blob):
        raise ParseError(f"{path}: truncated descriptor")
    try:
        descriptor = ArchitectureDescriptor.from_json(blob[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: unreadable architecture descriptor: {exc}") from None
    pos += hlen
    (count,) = take("<I")
    state = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        if pos + 8 * n > len(blob):
            raise ParseError(f"{path}: truncated data for tensor {name!r}")
        state[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(blob):
        raise ParseError(f"{path}: {len(blob) - pos} trailing bytes")
    return descriptor, state


def load_checkpoint(path) -> ModelBundle:
    descriptor, state = read_checkpoint(path)
    bundle = build(descriptor, 0)
    bundle.load_state(state)
    return bundle
