"""Binary LSTM model format.

Layout, all little-endian:

    bytes 0..3   magic "ANTM"
    bytes 4..7   format version, unsigned 32-bit
    bytes 8..15  metadata length in bytes, unsigned 64-bit
    ...          UTF-8 JSON metadata (dims, operator kinds and structure
                 parameters per transform, gate order, array manifest)
    ...          raw float32 arrays, concatenated in manifest order

Weights are stored at 32-bit precision and widened to float64 on load, so
save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from . import rnn
from .operators import CompressionConfig, from_factors

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "ModelFormatError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedPayloadError",
    "ManifestMismatchError",
    "save_model",
    "load_model",
]

MAGIC = b"ANTM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


class ModelFormatError(Exception):
    """Base class for malformed model files."""


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedPayloadError(ModelFormatError):
    pass


class ManifestMismatchError(ModelFormatError):
    pass


def _config_meta(cfg: CompressionConfig) -> dict:
    return {k: v for k, v in asdict(cfg).items() if v is not None}


def _walk_arrays(model: rnn.LSTMModel):
    """Every weight array with its manifest name, in serialization order."""
    for k, cell in enumerate(model.layers):
        for role, op in (("w_input", cell.w_input), ("w_hidden", cell.w_hidden)):
            for name, arr in op.factors():
                yield f"layer{k}.{role}.{name}", arr
        yield f"layer{k}.bias", cell.bias


def save_model(model: rnn.LSTMModel, path) -> None:
    """Write the model; weights are rounded to float32 on the way out."""
    manifest = []
    payload = bytearray()
    for name, arr in _walk_arrays(model):
        manifest.append({"name": name, "shape": list(arr.shape)})
        payload += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    meta = {
        "gate_order": list(rnn.GATE_ORDER),
        "layers": [
            {
                "input_dim": cell.input_dim,
                "hidden_dim": cell.hidden_dim,
                "w_input": _config_meta(cell.w_input.config()),
                "w_hidden": _config_meta(cell.w_hidden.config()),
            }
            for cell in model.layers
        ],
        "metadata": model.metadata,
        "arrays": manifest,
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_model(path) -> rnn.LSTMModel:
    """Read a model file, validating structure before touching weights."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"file is {len(raw)} bytes, shorter than the header")
    magic, version, meta_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version}, expected {FORMAT_VERSION}")
    body = raw[_HEADER.size:]
    if len(body) < meta_len:
        raise TruncatedPayloadError(
            f"metadata declared {meta_len} bytes but only {len(body)} present")
    try:
        meta = json.loads(body[:meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestMismatchError(f"metadata is not valid JSON: {exc}") from exc

    manifest = meta.get("arrays")
    if not isinstance(manifest, list):
        raise ManifestMismatchError("metadata lacks an 'arrays' manifest")
    counts = [int(np.prod(entry["shape"], dtype=np.int64)) for entry in manifest]
    expected = 4 * sum(counts)
    payload = body[meta_len:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"weight payload is {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise ManifestMismatchError(
            f"{len(payload) - expected} trailing bytes beyond the manifest")

    arrays = {}
    offset = 0
    for entry, count in zip(manifest, counts):
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        arrays[entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])
        offset += 4 * count

    if meta.get("gate_order") != list(rnn.GATE_ORDER):
        raise ManifestMismatchError(
            f"gate order {meta.get('gate_order')} != {list(rnn.GATE_ORDER)}")

    layers = []
    for k, layer_meta in enumerate(meta["layers"]):
        ops = {}
        for role in ("w_input", "w_hidden"):
            cfg_meta = dict(layer_meta[role])
            cfg = CompressionConfig(**cfg_meta)
            prefix = f"layer{k}.{role}."
            factors = {name[len(prefix):]: arr for name, arr in arrays.items()
                       if name.startswith(prefix)}
            for name, arr in factors.items():
                cfg_shape = _expected_shape(cfg, name)
                if cfg_shape is not None and tuple(arr.shape) != cfg_shape:
                    raise ManifestMismatchError(
                        f"{prefix}{name} has shape {tuple(arr.shape)}, expected {cfg_shape}")
            try:
                ops[role] = from_factors(cfg, factors)
            except (KeyError, ValueError) as exc:
                raise ManifestMismatchError(
                    f"layer {k} {role}: cannot rebuild operator: {exc}") from exc
        bias = arrays.get(f"layer{k}.bias")
        if bias is None or bias.shape != (4 * layer_meta["hidden_dim"],):
            raise ManifestMismatchError(f"layer {k} bias missing or mis-shaped")
        layers.append(rnn.LSTMCellSpec(ops["w_input"], ops["w_hidden"], bias))
    return rnn.LSTMModel(layers, meta.get("metadata", {}))


def _expected_shape(cfg: CompressionConfig, factor: str):
    m, n = cfg.m, cfg.n
    if cfg.kind == "dense":
        return (m, n) if factor == "matrix" else None
    if cfg.kind == "svd":
        inner = n // cfg.r
        return {"p": (m, inner), "q": (inner, n)}.get(factor)
    if cfg.kind == "lgp-shuffle":
        return (cfg.g, m // cfg.g, n // cfg.g) if factor == "blocks" else None
    if cfg.kind == "lgp-dense":
        if factor == "blocks":
            return (cfg.g, m // cfg.g, n // cfg.g)
        side = cfg.mix_side or ("after" if m <= n else "before")
        s = m if side == "after" else n
        return (s, s) if factor == "mix" else None
    inner = n // cfg.r
    return {
        "d_in": (cfg.g_in, inner // cfg.g_in, n // cfg.g_in),
        "mix": (inner, inner),
        "d_out": (cfg.g_out, m // cfg.g_out, inner // cfg.g_out),
    }.get(factor)
