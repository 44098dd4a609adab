"""Deterministic binary checkpoints.

Layout (all integers little-endian, floats little-endian float64, C order):

    magic "NWALKCK1"
    u32 meta length, meta utf8 text (sorted key=value lines; includes the
        config hash and the four shape-determining dimensions)
    u32 config length, resolved-config utf8 text (free-form, for the record)
    u32 parameter count
    per parameter: u16 name length, "group.name" utf8, u8 ndim,
        ndim x u64 shape, raw float64 data

Identical parameters and config always serialize to identical bytes. The
config hash covers exactly the dimensions that decide parameter shapes, so
an incompatible checkpoint is rejected before any shape error can surface.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .agent import Model
from .errors import CompatibilityError, DataError
from .nn import ParamGroup

MAGIC = b"NWALKCK1"


def model_config_hash(node_dim: int, edge_dim: int, hidden_dim: int,
                      num_classes: int) -> str:
    text = (f"node_dim={node_dim};edge_dim={edge_dim};"
            f"hidden_dim={hidden_dim};num_classes={num_classes}")
    return hashlib.sha256(text.encode()).hexdigest()


def save_checkpoint(path, model: Model, config_text: str = "",
                    meta: dict | None = None):
    meta = dict(meta or {})
    meta.update({
        "config_hash": model_config_hash(model.node_dim, model.edge_dim,
                                         model.hidden_dim, model.num_classes),
        "node_dim": str(model.node_dim),
        "edge_dim": str(model.edge_dim),
        "hidden_dim": str(model.hidden_dim),
        "num_classes": str(model.num_classes),
    })
    meta_text = "".join(f"{k}={meta[k]}\n" for k in sorted(meta))
    entries = [
        (f"{group.name}.{name}", arr)
        for group in model.groups()
        for name, arr in group.params.items()
    ]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        blob = meta_text.encode()
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        blob = config_text.encode()
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


class Checkpoint:
    def __init__(self, meta: dict, config_text: str,
                 params: dict[str, dict[str, np.ndarray]]):
        self.meta = meta
        self.config_text = config_text
        self.params = params

    @property
    def config_hash(self) -> str:
        return self.meta["config_hash"]

    def build_model(self) -> Model:
        groups = {name: ParamGroup(name, arrs) for name, arrs in self.params.items()}
        missing = {"core", "policy", "classifier"} - set(groups)
        if missing:
            raise DataError(f"checkpoint lacks parameter groups {sorted(missing)}")
        return Model(groups["core"], groups["policy"], groups["classifier"],
                     node_dim=int(self.meta["node_dim"]),
                     edge_dim=int(self.meta["edge_dim"]))


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path, expected_hash: str | None = None) -> Checkpoint:
    """Read a checkpoint; with expected_hash, reject an incompatible one."""
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC), "magic") != MAGIC:
            raise DataError(f"{path} is not a checkpoint file")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "meta length"))
        meta_text = _read_exact(fh, meta_len, "meta").decode()
        meta = {}
        for line in meta_text.splitlines():
            if line:
                k, _, v = line.partition("=")
                meta[k] = v
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        config_text = _read_exact(fh, cfg_len, "config").decode()
        (n_params,) = struct.unpack("<I", _read_exact(fh, 4, "parameter count"))
        params: dict[str, dict[str, np.ndarray]] = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            full_name = _read_exact(fh, name_len, "name").decode()
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "ndim"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(fh, 8, "shape"))[0]
                for _ in range(ndim)
            )
            count = int(np.prod(shape)) if shape else 1
            data = _read_exact(fh, 8 * count, f"data of {full_name}")
            arr = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
            group, _, name = full_name.partition(".")
            if not name:
                raise DataError(f"malformed parameter name {full_name!r}")
            params.setdefault(group, {})[name] = arr
    if "config_hash" not in meta:
        raise DataError(f"{path} lacks a config hash")
    ck = Checkpoint(meta, config_text, params)
    if expected_hash is not None and ck.config_hash != expected_hash:
        raise CompatibilityError(
            f"checkpoint hash {ck.config_hash[:12]}... does not match the "
            f"configured model {expected_hash[:12]}..."
        )
    return ck
