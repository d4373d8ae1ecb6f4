"""Checkpoint container: a versioned JSON manifest holding network bytes,
normalizer and prior state, skill assignments, environment snapshot, and RNG
states, encoded so that a save/load round trip is byte-identical.

Arrays and raw byte blobs travel as base64 of their exact memory contents;
Python ints and floats survive JSON exactly (shortest-repr floats round-trip).
"""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .policy import PolicyBundle, make_bundle
from .skills import SkillRegistry, factor_from_dict

CKPT_FORMAT = "symskill-checkpoint"
CKPT_VERSION = 1

KINDS = ("bundle", "train")


def _encode(obj):
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, (bytes, bytearray)):
        return {"__bytes__": base64.b64encode(bytes(obj)).decode("ascii")}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": {
            "dtype": obj.dtype.str,
            "shape": list(obj.shape),
            "data": base64.b64encode(np.ascontiguousarray(obj).tobytes()).decode("ascii"),
        }}
    if isinstance(obj, np.generic):
        return _encode(obj.item())
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise ConfigError(f"cannot checkpoint value of type {type(obj).__name__}")


def _decode(obj):
    if isinstance(obj, dict):
        if set(obj) == {"__bytes__"}:
            return base64.b64decode(obj["__bytes__"])
        if set(obj) == {"__ndarray__"}:
            spec = obj["__ndarray__"]
            flat = np.frombuffer(
                base64.b64decode(spec["data"]), dtype=np.dtype(spec["dtype"]))
            return flat.reshape(spec["shape"]).copy()
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def save_checkpoint(path, *, kind: str, meta: dict, state: dict,
                    extras: dict | None = None) -> None:
    if kind not in KINDS:
        raise ConfigError(f"checkpoint kind must be one of {KINDS}")
    payload = {
        "format": CKPT_FORMAT,
        "version": CKPT_VERSION,
        "kind": kind,
        "meta": _encode(meta),
        "state": _encode(state),
        "extras": _encode(extras or {}),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
    tmp.replace(path)


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint {path} does not exist")
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != CKPT_FORMAT:
        raise ConfigError(f"{path} is not a {CKPT_FORMAT} file")
    version = payload.get("version")
    if version != CKPT_VERSION:
        raise ConfigError(
            f"checkpoint version {version} unsupported (expected {CKPT_VERSION})")
    return {
        "kind": payload["kind"],
        "meta": _decode(payload["meta"]),
        "state": _decode(payload["state"]),
        "extras": _decode(payload["extras"]),
    }


def bundle_meta(registry: SkillRegistry, *, hidden, critic_hidden, usd_hidden,
                lr, usd_lr, grad_clip, ensemble, lam_ucb, dusdi, explore) -> dict:
    return {
        "factors": [f.to_dict() for f in registry.factors],
        "hidden": list(hidden),
        "critic_hidden": list(critic_hidden),
        "usd_hidden": list(usd_hidden),
        "lr": lr,
        "usd_lr": usd_lr,
        "grad_clip": grad_clip,
        "ensemble": ensemble,
        "lam_ucb": lam_ucb,
        "dusdi": dusdi,
        "explore": explore,
    }


def rebuild_bundle(meta: dict) -> PolicyBundle:
    registry = SkillRegistry([factor_from_dict(f) for f in meta["factors"]])
    return make_bundle(
        registry,
        hidden=tuple(meta["hidden"]),
        critic_hidden=tuple(meta["critic_hidden"]),
        usd_hidden=tuple(meta["usd_hidden"]),
        lr=meta["lr"],
        usd_lr=meta["usd_lr"],
        grad_clip=meta["grad_clip"],
        ensemble=meta["ensemble"],
        lam_ucb=meta["lam_ucb"],
        dusdi=meta["dusdi"],
        explore=meta["explore"],
    )


def save_bundle(path, bundle: PolicyBundle, meta: dict,
                extras: dict | None = None, kind: str = "bundle") -> None:
    save_checkpoint(path, kind=kind, meta=meta, state=bundle.state_dict(),
                    extras=extras)


def load_bundle(path) -> tuple[PolicyBundle, dict, dict]:
    """Rebuild a policy bundle from any checkpoint kind.

    Returns (bundle, meta, extras); train checkpoints carry the training
    loop state in extras.
    """
    ck = load_checkpoint(path)
    bundle = rebuild_bundle(ck["meta"])
    bundle.load_state_dict(ck["state"])
    return bundle, ck["meta"], ck["extras"]
