"""On-disk formats: dataset files, checkpoints and metric CSVs.

Dataset file
    One line of UTF-8 JSON (the header) terminated by ``\\n``, followed by
    ``count * n`` little-endian float64 values in row-major order, followed,
    when ``has_masks`` is true, by ``count * n`` uint8 mask bytes (1 = observed).
    Unobserved values are stored as 0.0.  The header's ``role`` tells complete
    data, incomplete training data, held-out ground truth and imputer output
    apart.

Checkpoint
    A JSON document written with sorted keys and one-space indentation.  Every
    array is an object ``{"dtype": "<f8", "shape": [...], "data": <base64>}``
    holding little-endian float64 bytes, so save -> load -> save reproduces the
    file byte for byte.
"""

from __future__ import annotations

import base64
import binascii
import csv
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .nn import Layer, Network

DATASET_FORMAT = "misgan-lab-dataset"
DATASET_VERSION = 1
CHECKPOINT_FORMAT = "misgan-lab-checkpoint"
CHECKPOINT_VERSION = 1
CHECKPOINT_KINDS = ("misgan", "joint", "imputer")
DATASET_ROLES = ("complete", "incomplete", "heldout", "completed")


class StorageError(ValueError):
    pass


# --------------------------------------------------------------------------
# atomic writes


def write_bytes_atomic(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# datasets


@dataclass
class DatasetFile:
    x: np.ndarray
    m: np.ndarray | None = None
    image_shape: tuple[int, int] | None = None
    role: str = "complete"

    def __post_init__(self):
        if self.role not in DATASET_ROLES:
            raise StorageError(f"unknown dataset role {self.role!r}")
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise StorageError(f"dataset values must be 2-D, got shape {self.x.shape}")
        if self.m is not None:
            self.m = np.asarray(self.m)
            if self.m.shape != self.x.shape:
                raise StorageError(f"mask shape {self.m.shape} != value shape {self.x.shape}")
            if not np.isin(self.m, (0, 1)).all():
                raise StorageError("masks must be 0 or 1")
        if self.image_shape is not None:
            self.image_shape = tuple(int(v) for v in self.image_shape)
            if self.image_shape[0] * self.image_shape[1] != self.n:
                raise StorageError(f"image_shape {self.image_shape} does not match n={self.n}")

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def count(self) -> int:
        return self.x.shape[0]

    def header(self) -> dict:
        return {
            "format": DATASET_FORMAT,
            "version": DATASET_VERSION,
            "n": self.n,
            "count": self.count,
            "dtype": "<f8",
            "has_masks": self.m is not None,
            "image_shape": list(self.image_shape) if self.image_shape else None,
            "role": self.role,
        }

    def to_bytes(self) -> bytes:
        x = self.x
        if self.m is not None:
            x = np.where(self.m == 1, x, 0.0)
        parts = [json.dumps(self.header(), sort_keys=True).encode() + b"\n", x.astype("<f8").tobytes()]
        if self.m is not None:
            parts.append(self.m.astype(np.uint8).tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "DatasetFile":
        head, sep, body = payload.partition(b"\n")
        if not sep:
            raise StorageError("dataset header: missing newline terminator")
        try:
            header = json.loads(head)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise StorageError(f"dataset header: not JSON ({exc})") from None
        if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
            raise StorageError("dataset header: not a dataset file")
        if header.get("version") != DATASET_VERSION:
            raise StorageError(f"dataset header: unsupported version {header.get('version')!r}")
        if header.get("dtype") != "<f8":
            raise StorageError(f"dataset header: unsupported dtype {header.get('dtype')!r}")
        n, count = int(header["n"]), int(header["count"])
        size = n * count
        expected = 8 * size + (size if header["has_masks"] else 0)
        if len(body) != expected:
            raise StorageError(f"dataset body: expected {expected} bytes, found {len(body)}")
        x = np.frombuffer(body[: 8 * size], dtype="<f8").astype(np.float64).reshape(count, n)
        m = None
        if header["has_masks"]:
            m = np.frombuffer(body[8 * size :], dtype=np.uint8).astype(np.float64).reshape(count, n)
            if not np.isin(m, (0.0, 1.0)).all():
                raise StorageError("dataset masks: bytes other than 0/1")
        return cls(x, m, header.get("image_shape"), header.get("role", "complete"))


def write_dataset(path, data: DatasetFile) -> None:
    write_bytes_atomic(path, data.to_bytes())


def read_dataset(path) -> DatasetFile:
    return DatasetFile.from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------
# checkpoints


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"dtype": "<f8", "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj: dict) -> np.ndarray:
    if obj.get("dtype") != "<f8":
        raise StorageError(f"unsupported array dtype {obj.get('dtype')!r}")
    raw = base64.b64decode(obj["data"], validate=True)
    shape = tuple(int(s) for s in obj["shape"])
    if len(raw) != 8 * int(np.prod(shape)):
        raise StorageError(f"array payload of {len(raw)} bytes does not fit shape {shape}")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def encode_network(net: Network) -> list[dict]:
    return [
        {
            "weight": encode_array(layer.weight.data),
            "bias": encode_array(layer.bias.data),
            "activation": layer.activation,
            "lam": layer.lam,
        }
        for layer in net.layers
    ]


def decode_network(layers: list[dict]) -> Network:
    return Network(
        [
            Layer(
                ad.parameter(decode_array(entry["weight"])),
                ad.parameter(decode_array(entry["bias"])),
                entry["activation"],
                entry["lam"],
            )
            for entry in layers
        ]
    )


@dataclass
class Checkpoint:
    kind: str
    networks: dict[str, Network]
    hyper: dict = field(default_factory=dict)
    optimizer: dict[str, list[np.ndarray]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    rng: dict = field(default_factory=dict)
    step: int = 0
    log: dict | None = None

    def __post_init__(self):
        if self.kind not in CHECKPOINT_KINDS:
            raise StorageError(f"unknown checkpoint kind {self.kind!r}")

    def to_json(self) -> str:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "format_version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "networks": {name: encode_network(net) for name, net in self.networks.items()},
            "hyper": self.hyper,
            "optimizer": {name: [encode_array(a) for a in arrays] for name, arrays in self.optimizer.items()},
            "config": self.config,
            "rng": self.rng,
            "step": self.step,
            "log": self.log,
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise StorageError(f"checkpoint: not JSON ({exc})") from None
        if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
            raise StorageError("checkpoint: not a checkpoint file")
        if doc.get("format_version") != CHECKPOINT_VERSION:
            raise StorageError(
                f"checkpoint: format_version {doc.get('format_version')!r} is not {CHECKPOINT_VERSION}"
            )

        def section(name, decode):
            try:
                return decode(doc[name])
            except StorageError as exc:
                raise StorageError(f"checkpoint section {name!r}: {exc}") from None
            except (KeyError, TypeError, ValueError, AttributeError, binascii.Error) as exc:
                raise StorageError(f"checkpoint section {name!r}: {type(exc).__name__}: {exc}") from None

        return cls(
            kind=section("kind", str),
            networks=section("networks", lambda d: {k: decode_network(v) for k, v in d.items()}),
            hyper=section("hyper", dict),
            optimizer=section(
                "optimizer", lambda d: {k: [decode_array(a) for a in v] for k, v in d.items()}
            ),
            config=section("config", dict),
            rng=section("rng", dict),
            step=section("step", int),
            log=section("log", lambda d: None if d is None else dict(d)),
        )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    write_bytes_atomic(path, ckpt.to_json().encode("utf-8"))


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.from_json(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# metric CSV


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_csv(columns, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue().encode("utf-8")
