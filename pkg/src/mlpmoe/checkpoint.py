"""Named-tensor checkpoint container (safetensors byte layout).

Layout: an 8-byte little-endian unsigned header length, a JSON header
mapping tensor name -> {dtype, shape, data_offsets}, then the raw
contiguous payload. Offsets are relative to the end of the header and
must tile the payload exactly: no gaps, no overlaps. The optional
``__metadata__`` string map carries model metadata (layer count, dims,
activation tag, branch count).

Tensors are held in memory as float32 regardless of storage dtype;
``storage_dtypes`` remembers the on-disk type per tensor so that
save(load(f)) reproduces f byte for byte (F16 and BF16 promote to
float32 losslessly and truncate back without error).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FormatError, SchemaError
from .mlp import Branch, DenseMlp, MoeMlp
from .naming import LLAMA_NAMING, MLP_ROLES, NamingScheme

_HEADER_LEN_BYTES = 8
_MAX_HEADER = 100 * 1024 * 1024

_METADATA_INT_KEYS = ("num_layers", "d_model", "d_inter", "vocab_size", "num_heads", "branches_created")


def _f16_to_f32(raw: bytes) -> np.ndarray:
    return np.frombuffer(raw, dtype="<f2").astype(np.float32)


def _f32_from_bytes(raw: bytes) -> np.ndarray:
    return np.frombuffer(raw, dtype="<f4").astype(np.float32)


def _bf16_to_f32(raw: bytes) -> np.ndarray:
    u16 = np.frombuffer(raw, dtype="<u2").astype(np.uint32)
    return (u16 << 16).view(np.float32).copy()


def _f32_to_bf16_bytes(arr: np.ndarray) -> bytes:
    # plain truncation; exact for values that originated as bf16
    u32 = np.ascontiguousarray(arr, dtype="<f4").view(np.uint32)
    return (u32 >> 16).astype("<u2").tobytes()


# dtype tag -> (itemsize, decode raw -> f32 array, encode f32 array -> bytes)
DTYPES = {
    "F32": (4, _f32_from_bytes, lambda a: np.ascontiguousarray(a, dtype="<f4").tobytes()),
    "F16": (2, _f16_to_f32, lambda a: a.astype("<f2").tobytes()),
    "BF16": (2, _bf16_to_f32, _f32_to_bf16_bytes),
}


@dataclass(frozen=True)
class ModelMeta:
    """Model-level metadata carried in the container header."""

    num_layers: int = 0
    d_model: int = 0
    d_inter: int = 0
    vocab_size: int | None = None
    num_heads: int | None = None
    family: str = "unknown"
    activation: str = "silu"
    branches_created: int | None = None

    def to_strings(self) -> dict[str, str]:
        out = {"family": self.family, "activation": self.activation}
        for key in _METADATA_INT_KEYS:
            value = getattr(self, key)
            if value is not None:
                out[key] = str(value)
        return out

    @classmethod
    def from_strings(cls, raw: dict[str, str]) -> "ModelMeta":
        kwargs: dict = {}
        if "family" in raw:
            kwargs["family"] = raw["family"]
        if "activation" in raw:
            kwargs["activation"] = raw["activation"]
        for key in _METADATA_INT_KEYS:
            if key in raw:
                try:
                    kwargs[key] = int(raw[key])
                except ValueError:
                    raise FormatError(f"metadata key {key!r} is not an integer: {raw[key]!r}") from None
        return cls(**kwargs)


@dataclass
class Checkpoint:
    """Immutable-by-convention container: transforms return new instances."""

    tensors: dict[str, np.ndarray]
    meta: ModelMeta
    storage_dtypes: dict[str, str] = field(default_factory=dict)
    naming: NamingScheme = LLAMA_NAMING

    def storage_dtype(self, name: str) -> str:
        return self.storage_dtypes.get(name, "F32")

    def layer_is_moe(self, layer: int) -> bool:
        return self.naming.branch_name(layer, 0, "gate") in self.tensors

    def total_bytes(self) -> int:
        return sum(t.size * DTYPES[self.storage_dtype(n)][0] for n, t in self.tensors.items())


def _infer_meta(tensors: dict[str, np.ndarray], naming: NamingScheme) -> ModelMeta:
    """Best-effort metadata from tensor names and shapes (header had none)."""
    num_layers = 0
    d_model = 0
    d_inter = 0
    branch_rows: dict[int, int] = {}
    for name, arr in tensors.items():
        layer = naming.layer_of(name)
        if layer is not None:
            num_layers = max(num_layers, layer + 1)
        dense = naming.parse_dense(name)
        if dense is not None and dense[0] == 0:
            if dense[1] == "gate":
                d_inter, d_model = arr.shape
            continue
        branch = naming.parse_branch(name)
        if branch is not None and branch[0] == 0 and branch[2] == "gate":
            branch_rows[branch[1]] = arr.shape[0]
            d_model = arr.shape[1]
    branches = None
    if branch_rows:
        d_inter = sum(branch_rows.values())
        branches = len(branch_rows)
    vocab = None
    if naming.embed in tensors:
        vocab, d_model = tensors[naming.embed].shape
    elif naming.lm_head in tensors:
        vocab = tensors[naming.lm_head].shape[0]
    return ModelMeta(
        num_layers=num_layers,
        d_model=d_model,
        d_inter=d_inter,
        vocab_size=vocab,
        branches_created=branches,
    )


def _layer_branch_indices(ckpt: Checkpoint, layer: int) -> list[int]:
    indices = set()
    for name in ckpt.tensors:
        parsed = ckpt.naming.parse_branch(name)
        if parsed is not None and parsed[0] == layer:
            indices.add(parsed[1])
    found = sorted(indices)
    if found and found != list(range(len(found))):
        raise SchemaError(f"layer {layer}: branch indices not contiguous from 0: {found}")
    return found


def validate_checkpoint(ckpt: Checkpoint) -> None:
    """Check the per-layer MLP invariant: dense triple XOR branch set."""
    for layer in range(ckpt.meta.num_layers):
        dense = [ckpt.naming.dense_name(layer, r) for r in MLP_ROLES]
        have_dense = [n for n in dense if n in ckpt.tensors]
        branches = _layer_branch_indices(ckpt, layer)
        if have_dense and branches:
            raise SchemaError(f"layer {layer} has both dense and branch MLP tensors")
        if not have_dense and not branches:
            raise SchemaError(f"layer {layer} has no MLP tensors (missing {dense[0]!r})")
        if have_dense and len(have_dense) != 3:
            missing = [n for n in dense if n not in ckpt.tensors][0]
            raise SchemaError(f"layer {layer}: missing MLP tensor {missing!r}")


def resolve_mlp(ckpt: Checkpoint, layer: int) -> DenseMlp | MoeMlp:
    """Return the dense triple or branch list for one layer (zero-copy)."""
    if not 0 <= layer < ckpt.meta.num_layers:
        raise SchemaError(f"layer {layer} out of range (model has {ckpt.meta.num_layers} layers)")
    naming = ckpt.naming
    gate_name = naming.dense_name(layer, "gate")
    if gate_name in ckpt.tensors:
        parts = []
        for role in MLP_ROLES:
            name = naming.dense_name(layer, role)
            if name not in ckpt.tensors:
                raise SchemaError(f"layer {layer}: missing MLP tensor {name!r}")
            parts.append(ckpt.tensors[name])
        return DenseMlp(*parts, activation=ckpt.meta.activation)

    indices = _layer_branch_indices(ckpt, layer)
    if not indices:
        raise SchemaError(f"layer {layer}: missing MLP tensor {gate_name!r}")
    branches = []
    for b in indices:
        tensors = []
        for role in MLP_ROLES:
            name = naming.branch_name(layer, b, role)
            if name not in ckpt.tensors:
                raise SchemaError(f"layer {layer}: missing MLP tensor {name!r}")
            tensors.append(ckpt.tensors[name])
        alpha_name = naming.alpha_name(layer, b)
        if alpha_name not in ckpt.tensors:
            raise SchemaError(f"layer {layer}: missing MLP tensor {alpha_name!r}")
        alpha = float(ckpt.tensors[alpha_name].reshape(-1)[0])
        branches.append(Branch(*tensors, alpha=alpha))
    created = ckpt.meta.branches_created or len(branches)
    return MoeMlp(branches=branches, activation=ckpt.meta.activation, created_branches=created)


def with_mlp(ckpt: Checkpoint, layer: int, mlp: DenseMlp | MoeMlp) -> Checkpoint:
    """New checkpoint with one layer's MLP tensors replaced by ``mlp``."""
    if not 0 <= layer < ckpt.meta.num_layers:
        raise SchemaError(f"layer {layer} out of range (model has {ckpt.meta.num_layers} layers)")
    naming = ckpt.naming
    tensors = dict(ckpt.tensors)
    dtypes = dict(ckpt.storage_dtypes)

    # storage dtype for new tensors follows whatever form the layer had
    role_dtype = {}
    for role in MLP_ROLES:
        for candidate in (naming.dense_name(layer, role), naming.branch_name(layer, 0, role)):
            if candidate in tensors:
                role_dtype[role] = ckpt.storage_dtype(candidate)
                break

    for name in list(tensors):
        dense = naming.parse_dense(name)
        branch = naming.parse_branch(name)
        if (dense is not None and dense[0] == layer) or (branch is not None and branch[0] == layer):
            del tensors[name]
            dtypes.pop(name, None)

    def put(name: str, arr: np.ndarray, dtype_tag: str) -> None:
        tensors[name] = arr
        if dtype_tag != "F32":
            dtypes[name] = dtype_tag

    if isinstance(mlp, DenseMlp):
        for role, arr in zip(MLP_ROLES, (mlp.w_gate, mlp.w_up, mlp.w_down)):
            put(naming.dense_name(layer, role), arr, role_dtype.get(role, "F32"))
    else:
        for b, branch in enumerate(mlp.branches):
            for role, arr in zip(MLP_ROLES, (branch.w_gate, branch.w_up, branch.w_down)):
                put(naming.branch_name(layer, b, role), arr, role_dtype.get(role, "F32"))
            put(naming.alpha_name(layer, b), np.array([branch.alpha], dtype=np.float32), "F32")

    return replace(ckpt, tensors=tensors, storage_dtypes=dtypes)


def _parse_header(blob: bytes, path: str) -> tuple[dict, int]:
    if len(blob) < _HEADER_LEN_BYTES:
        raise FormatError(f"{path}: file too short for header length field ({len(blob)} bytes)")
    (header_len,) = struct.unpack("<Q", blob[:_HEADER_LEN_BYTES])
    if header_len > _MAX_HEADER or _HEADER_LEN_BYTES + header_len > len(blob):
        raise FormatError(f"{path}: header length {header_len} exceeds file size at byte 0")
    try:
        header = json.loads(blob[_HEADER_LEN_BYTES : _HEADER_LEN_BYTES + header_len])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: header is not valid JSON at byte {_HEADER_LEN_BYTES + exc.pos}") from None
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header JSON is not an object")
    return header, _HEADER_LEN_BYTES + header_len


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint file, validating the container byte layout.

    Metadata missing from the header is inferred from tensor names and
    shapes where possible.
    """
    path = str(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    header, payload_start = _parse_header(blob, path)
    payload = blob[payload_start:]

    raw_meta = header.pop("__metadata__", None)
    if not header:
        raise FormatError(f"{path}: container holds no tensors")

    entries = []
    for name, entry in header.items():
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: tensor {name!r} entry is not an object")
        try:
            dtype = entry["dtype"]
            shape = entry["shape"]
            begin, end = entry["data_offsets"]
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"{path}: tensor {name!r} entry missing dtype/shape/data_offsets") from None
        if dtype not in DTYPES:
            raise FormatError(f"{path}: tensor {name!r} has unknown dtype {dtype!r}")
        if not shape or any(not isinstance(s, int) or s < 1 for s in shape):
            raise FormatError(f"{path}: tensor {name!r} has invalid shape {shape!r}")
        itemsize = DTYPES[dtype][0]
        nbytes = int(np.prod(shape)) * itemsize
        if not (isinstance(begin, int) and isinstance(end, int) and 0 <= begin <= end <= len(payload)):
            raise FormatError(
                f"{path}: tensor {name!r} offsets [{begin}, {end}) outside payload "
                f"(bytes {payload_start}..{len(blob)})"
            )
        if end - begin != nbytes:
            raise FormatError(
                f"{path}: tensor {name!r} spans {end - begin} bytes but shape {shape} "
                f"as {dtype} needs {nbytes} (payload byte {begin})"
            )
        entries.append((begin, end, name, dtype, shape))

    entries.sort()
    cursor = 0
    for begin, end, name, _, _ in entries:
        if begin < cursor:
            raise FormatError(f"{path}: tensor {name!r} overlaps previous data at payload byte {begin}")
        if begin > cursor:
            raise FormatError(f"{path}: {begin - cursor} unclaimed bytes at payload byte {cursor}")
        cursor = end
    if cursor != len(payload):
        raise FormatError(f"{path}: {len(payload) - cursor} trailing bytes at payload byte {cursor}")

    tensors: dict[str, np.ndarray] = {}
    storage_dtypes: dict[str, str] = {}
    for begin, end, name, dtype, shape in entries:
        arr = DTYPES[dtype][1](payload[begin:end]).reshape(shape)
        arr.flags.writeable = False
        tensors[name] = arr
        if dtype != "F32":
            storage_dtypes[name] = dtype

    if raw_meta is not None:
        if not isinstance(raw_meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in raw_meta.items()
        ):
            raise FormatError(f"{path}: __metadata__ must be a string map")
        meta = ModelMeta.from_strings(raw_meta)
    else:
        meta = _infer_meta(tensors, LLAMA_NAMING)

    ckpt = Checkpoint(tensors=tensors, meta=meta, storage_dtypes=storage_dtypes)
    validate_checkpoint(ckpt)
    return ckpt


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write the container; the byte image is canonical (sorted names)."""
    if not ckpt.tensors:
        raise FormatError("refusing to save a checkpoint with no tensors")
    validate_checkpoint(ckpt)

    names = sorted(ckpt.tensors)
    header: dict[str, object] = {"__metadata__": ckpt.meta.to_strings()}
    chunks = []
    offset = 0
    for name in names:
        arr = ckpt.tensors[name]
        dtype = ckpt.storage_dtype(name)
        raw = DTYPES[dtype][2](arr)
        header[name] = {
            "dtype": dtype,
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        chunks.append(raw)
        offset += len(raw)

    header_json = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    pad = (-(_HEADER_LEN_BYTES + len(header_json))) % 8
    header_json += b" " * pad

    with open(str(path), "wb") as fh:
        fh.write(struct.pack("<Q", len(header_json)))
        fh.write(header_json)
        for raw in chunks:
            fh.write(raw)
