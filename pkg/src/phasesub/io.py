"""Binary dataset files and JSON run manifests.

A dataset file is::

    b"PSID" | u16 version | u8 kind | u8 element type | u32 ndim | u32 sizes[ndim]
    | row-major payload | UTF-8 JSON manifest (to end of file)

All integers and payload values are little-endian.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamform import BeamformedStack
from .errors import DatasetFormatError, DimensionMismatchError
from .iqfilter import FilteredIQStack, IQStack
from .model import AcquisitionConfig, BeamformConfig, BeamGrid
from .phantom import ChannelData
from .psi import PhaseImage

MAGIC = b"PSID"
VERSION = 1
KIND_CODES = {"channel": 1, "beamformed": 2, "iq": 3, "filtered_iq": 4, "phase_image": 5}
DTYPE_CODES = {"f32": (1, np.dtype("<f4")), "c64": (2, np.dtype("<c8")), "i16": (3, np.dtype("<i2"))}
_HEADER = struct.Struct("<4sHBBI")

_UMASK = os.umask(0)
os.umask(_UMASK)

_KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
_DTYPE_BY_CODE = {code: (name, dt) for name, (code, dt) in DTYPE_CODES.items()}


def dumps_manifest(doc: dict) -> str:
    """Stable, human-readable JSON (sorted keys, two-space indent)."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def atomic_write(path, data: bytes):
    """Write ``data`` to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def encode_dataset(array: np.ndarray, kind: str, dtype: str, manifest: dict) -> bytes:
    if kind not in KIND_CODES:
        raise ValueError(f"unknown dataset kind {kind!r}")
    code, dt = DTYPE_CODES[dtype]
    payload = np.asarray(array, dtype=dt, order="C")  # keeps 0-d shapes
    head = _HEADER.pack(MAGIC, VERSION, KIND_CODES[kind], code, payload.ndim)
    sizes = struct.pack(f"<{payload.ndim}I", *payload.shape)
    return head + sizes + payload.tobytes() + dumps_manifest(manifest).encode("utf-8")


def decode_dataset(blob: bytes):
    """Return ``(array, kind, manifest)``; raise DatasetFormatError on any defect."""
    if len(blob) < _HEADER.size:
        raise DatasetFormatError("file too short for a dataset header")
    magic, version, kind, code, ndim = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    if kind not in _KIND_NAMES:
        raise DatasetFormatError(f"unknown kind code {kind}")
    if code not in _DTYPE_BY_CODE:
        raise DatasetFormatError(f"unknown element type code {code}")
    if ndim > 16:
        raise DatasetFormatError(f"implausible dimension count {ndim}")
    pos = _HEADER.size
    if len(blob) < pos + 4 * ndim:
        raise DatasetFormatError("truncated dimension table")
    shape = struct.unpack_from(f"<{ndim}I", blob, pos)
    pos += 4 * ndim
    _, dt = _DTYPE_BY_CODE[code]
    nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(blob) < pos + nbytes:
        raise DatasetFormatError("payload shorter than its declared sizes")
    array = np.frombuffer(blob, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape).copy()
    try:
        manifest = json.loads(blob[pos + nbytes:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"trailing manifest unreadable: {exc}") from exc
    if not isinstance(manifest, dict):
        raise DatasetFormatError("trailing manifest is not a mapping")
    return array, _KIND_NAMES[kind], manifest


def write_dataset(path, array, kind: str, dtype: str, manifest: dict):
    atomic_write(path, encode_dataset(array, kind, dtype, manifest))


def read_dataset(path, expect_kind=None):
    blob = Path(path).read_bytes()
    array, kind, manifest = decode_dataset(blob)
    if expect_kind is not None:
        allowed = (expect_kind,) if isinstance(expect_kind, str) else tuple(expect_kind)
        if kind not in allowed:
            raise DatasetFormatError(f"{path}: expected a {' or '.join(allowed)} dataset, found {kind}")
    return array, kind, manifest


def read_manifest(path) -> dict:
    """Trailing manifest of a dataset file without loading the payload."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DatasetFormatError("file too short for a dataset header")
        magic, version, _, code, ndim = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION or code not in _DTYPE_BY_CODE or ndim > 16:
            raise DatasetFormatError(f"{path}: not a readable dataset file")
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        fh.seek(int(np.prod(shape, dtype=np.int64)) * _DTYPE_BY_CODE[code][1].itemsize, os.SEEK_CUR)
        tail = fh.read()
    try:
        return json.loads(tail.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, struct.error) as exc:
        raise DatasetFormatError(f"{path}: trailing manifest unreadable: {exc}") from exc


# Boolean masks travel inside the manifest as packed hex.

def _pack_mask(mask: np.ndarray) -> dict:
    return {"shape": list(mask.shape), "bits": np.packbits(mask.astype(bool).ravel()).tobytes().hex()}


def _unpack_mask(d: dict) -> np.ndarray:
    shape = tuple(d["shape"])
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(d["bits"]), dtype=np.uint8))
    return bits[: int(np.prod(shape))].reshape(shape).astype(bool)


def _get(manifest: dict, key: str, path):
    try:
        return manifest[key]
    except KeyError:
        raise DatasetFormatError(f"{path}: manifest lacks {key!r}") from None


def _config(manifest, path) -> AcquisitionConfig:
    try:
        return AcquisitionConfig.from_dict(_get(manifest, "config", path))
    except (TypeError, ValueError, KeyError) as exc:
        raise DatasetFormatError(f"{path}: bad acquisition config: {exc}") from exc


def _grid(manifest, path) -> BeamGrid:
    try:
        return BeamGrid(**_get(manifest, "grid", path))
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: bad grid: {exc}") from exc


def _expect_shape(array, expected, path):
    if tuple(array.shape) != tuple(expected):
        raise DimensionMismatchError(f"{path}: payload shape {tuple(array.shape)} != {tuple(expected)}")


def save_channel(path, data: ChannelData, extra=None):
    bits = data.config.quantization_bits
    dtype = "i16" if bits is not None and bits <= 16 else "f32"
    man = {"config": data.config.to_dict(), **(extra or {})}
    write_dataset(path, data.samples, "channel", dtype, man)


def load_channel(path) -> ChannelData:
    array, _, man = read_dataset(path, "channel")
    cfg = _config(man, path)
    return ChannelData(array.astype(np.float64), cfg)


def save_beamformed(path, stack: BeamformedStack, extra=None):
    man = {"config": stack.config.to_dict(), "grid": stack.grid.to_dict(),
           "beamform": stack.beamform.to_dict(), "coverage": _pack_mask(stack.coverage)}
    man.update(extra or {})
    write_dataset(path, stack.rf, "beamformed", "f32", man)


def load_beamformed(path) -> BeamformedStack:
    array, _, man = read_dataset(path, "beamformed")
    grid = _grid(man, path)
    _expect_shape(array, (4, array.shape[1], grid.nz, grid.nx), path)
    return BeamformedStack(rf=array.astype(np.float64), grid=grid, config=_config(man, path),
                           beamform=BeamformConfig(**_get(man, "beamform", path)),
                           coverage=_unpack_mask(_get(man, "coverage", path)))


def save_iq(path, stack: IQStack, extra=None):
    man = {"config": stack.config.to_dict(), "grid": stack.grid.to_dict(), "decimation": stack.decimation,
           "demod_freq": stack.demod_freq, "coverage": _pack_mask(stack.coverage)}
    kind = "iq"
    if isinstance(stack, FilteredIQStack):
        kind = "filtered_iq"
        man["retained"] = [list(b) for b in stack.retained]
        man["singular_values"] = [[float(v) for v in s] for s in stack.singular_values]
    man.update(extra or {})
    write_dataset(path, stack.iq, kind, "c64", man)


def load_iq(path) -> IQStack:
    array, kind, man = read_dataset(path, ("iq", "filtered_iq"))
    grid = _grid(man, path)
    _expect_shape(array, (4, array.shape[1], grid.nz, grid.nx), path)
    common = dict(iq=array.astype(np.complex128), grid=grid, config=_config(man, path),
                  decimation=int(_get(man, "decimation", path)),
                  demod_freq=float(_get(man, "demod_freq", path)),
                  coverage=_unpack_mask(_get(man, "coverage", path)))
    if kind == "iq":
        return IQStack(**common)
    return FilteredIQStack(**common, retained=tuple(tuple(b) for b in man.get("retained", ())),
                           singular_values=tuple(np.asarray(s) for s in man.get("singular_values", ())))


def save_phase_image(path, image: PhaseImage, extra=None):
    man = {"kind": image.kind, "n_pairs": image.n_pairs,
           "grid": image.grid.to_dict() if image.grid is not None else None,
           "config": image.config.to_dict() if image.config is not None else None}
    man.update(extra or {})
    write_dataset(path, image.values, "phase_image", "f32", man)


def load_phase_image(path) -> PhaseImage:
    array, _, man = read_dataset(path, "phase_image")
    grid = _grid(man, path) if man.get("grid") else None
    if grid is not None:
        _expect_shape(array, grid.shape, path)
    cfg = _config(man, path) if man.get("config") else None
    try:
        return PhaseImage(array.astype(np.float64), _get(man, "kind", path), grid=grid, config=cfg,
                          n_pairs=int(man.get("n_pairs", 0)))
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc


def load_any(path):
    """Load a dataset as the domain object matching its kind."""
    _, kind, _ = read_dataset(path)
    return {"channel": load_channel, "beamformed": load_beamformed, "iq": load_iq,
            "filtered_iq": load_iq, "phase_image": load_phase_image}[kind](path)


@dataclass
class RunManifest:
    """Reproducibility record of one CLI run.

    Files are named by basename relative to the manifest's directory and
    pinned by SHA-256. Worker counts and timestamps are deliberately absent,
    so identical runs give identical manifests.
    """

    stage: str
    parameters: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    software: dict = field(default_factory=dict)

    FORMAT = "phasesub-run/1"

    @classmethod
    def for_files(cls, stage, parameters, inputs=(), outputs=(), results=None):
        from . import __version__
        return cls(stage=stage, parameters=parameters,
                   inputs={Path(p).name: sha256_file(p) for p in inputs},
                   outputs={Path(p).name: sha256_file(p) for p in outputs},
                   results=results or {},
                   software={"package": "phasesub", "version": __version__})

    def to_dict(self) -> dict:
        return {"format": self.FORMAT, "stage": self.stage, "parameters": self.parameters,
                "inputs": self.inputs, "outputs": self.outputs, "results": self.results,
                "software": self.software}

    def write(self, path):
        atomic_write(path, dumps_manifest(self.to_dict()).encode("utf-8"))

    @classmethod
    def read(cls, path) -> "RunManifest":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DatasetFormatError(f"{path}: unreadable run manifest: {exc}") from exc
        if not isinstance(d, dict) or d.get("format") != cls.FORMAT:
            raise DatasetFormatError(f"{path}: not a run manifest")
        return cls(stage=d["stage"], parameters=d["parameters"], inputs=d.get("inputs", {}),
                   outputs=d.get("outputs", {}), results=d.get("results", {}),
                   software=d.get("software", {}))

    def verify(self, directory) -> list:
        """Names of listed files that are missing or whose hash differs."""
        bad = []
        for name, digest in sorted({**self.inputs, **self.outputs}.items()):
            p = Path(directory) / name
            if not p.exists() or sha256_file(p) != digest:
                bad.append(name)
        return bad
