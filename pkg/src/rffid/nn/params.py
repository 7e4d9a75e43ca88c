"""Named parameter collections and the binary checkpoint format.

Checkpoint layout (little-endian):

    magic "JRFP" | version u16 | tensor_count u32 |
    per tensor: name_len u16 + UTF-8 name | rank u8 | dims u32 each |
    float32 values, row-major

Values are stored as float32, so a save/load round trip quantizes the
float64 working precision; loading twice from the same file is exact.
String metadata (e.g. the architecture preset) rides along as tensors named
"__meta__/<key>" holding UTF-8 bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import ConfigError, FormatError

_MAGIC = b"JRFP"
_VERSION = 1
_META_PREFIX = "__meta__/"


class ParamSet:
    """An ordered mapping of unique names to float64 tensors.

    Shapes are fixed at first assignment; values stay mutable (the SGD
    update writes in place).
    """

    def __init__(self, tensors: dict[str, np.ndarray] | None = None):
        self._tensors: dict[str, np.ndarray] = {}
        if tensors:
            for name, value in tensors.items():
                self[name] = value

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if name in self._tensors and self._tensors[name].shape != value.shape:
            raise ConfigError(
                f"parameter {name!r} has shape {self._tensors[name].shape}, "
                f"cannot assign shape {value.shape}"
            )
        self._tensors[name] = value

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in self._tensors:
            raise ConfigError(f"unknown parameter {name!r}")
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def copy(self) -> "ParamSet":
        return ParamSet({name: value.copy() for name, value in self.items()})

    def zeros_like(self) -> "ParamSet":
        return ParamSet({name: np.zeros_like(value) for name, value in self.items()})

    def count(self) -> int:
        return sum(value.size for value in self._tensors.values())

    def allclose(self, other: "ParamSet", rtol: float = 0.0, atol: float = 0.0) -> bool:
        if self.names() != other.names():
            return False
        return all(
            np.allclose(self[name], other[name], rtol=rtol, atol=atol)
            for name in self
        )


def save_checkpoint(
    params: ParamSet, path, metadata: dict[str, str] | None = None
) -> None:
    entries: list[tuple[str, np.ndarray]] = list(params.items())
    for key, text in sorted((metadata or {}).items()):
        payload = np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float64)
        entries.append((_META_PREFIX + key, payload))
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<HI", _VERSION, len(entries))
    for name, value in entries:
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", value.ndim)
        for dim in value.shape:
            blob += struct.pack("<I", dim)
        blob += np.ascontiguousarray(value, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> tuple[ParamSet, dict[str, str]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}", offset=0)
    if len(blob) < 10:
        raise FormatError("truncated checkpoint header", offset=len(blob))
    version, count = struct.unpack("<HI", blob[4:10])
    if version != _VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    pos = 10
    params = ParamSet()
    metadata: dict[str, str] = {}
    for _ in range(count):
        if pos + 2 > len(blob):
            raise FormatError("truncated tensor name length", offset=pos)
        (name_len,) = struct.unpack("<H", blob[pos : pos + 2])
        pos += 2
        if pos + name_len + 1 > len(blob):
            raise FormatError("truncated tensor header", offset=pos)
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        rank = blob[pos]
        pos += 1
        if pos + 4 * rank > len(blob):
            raise FormatError("truncated tensor dims", offset=pos)
        dims = struct.unpack(f"<{rank}I", blob[pos : pos + 4 * rank]) if rank else ()
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        if pos + 4 * size > len(blob):
            raise FormatError("truncated tensor values", offset=pos)
        values = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).astype(
            np.float64
        )
        pos += 4 * size
        values = values.reshape(dims)
        if name.startswith(_META_PREFIX):
            metadata[name[len(_META_PREFIX):]] = (
                values.astype(np.uint8).tobytes().decode("utf-8")
            )
        else:
            params[name] = values
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes", offset=pos)
    return params, metadata
