"""Binary checkpoint format for resumable training.

Layout: an 8-byte magic carrying the format version, a little-endian uint64
header length, a canonical JSON header (sorted keys, no whitespace) holding
the config echo, step counter, Adam scalars, rng stream state and a tensor
manifest of (name, shape) pairs, then the tensors' raw bytes in manifest
order as little-endian float64, C order. Canonical JSON plus exact float
round-tripping makes save -> load -> save byte-identical. A magic mismatch
is a hard error.
"""

import json
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, from_dict
from .errors import CheckpointError
from .nn import AdamState
from .unet import NoisePredictorParams, named_arrays, params_from_arrays

MAGIC = b"MDCKPT01"


@dataclass
class Checkpoint:
    config: RunConfig
    step: int
    params: NoisePredictorParams
    adam: AdamState
    rng_state: dict


def snapshot(
    config: RunConfig,
    step: int,
    params: NoisePredictorParams,
    adam: AdamState,
    rng: np.random.Generator,
) -> Checkpoint:
    """Deep-copy the live training state into a Checkpoint."""
    arrays = {k: v.copy() for k, v in named_arrays(params).items()}
    params_copy = params_from_arrays(
        arrays, params.dim, params.skips, params.grad_normalize
    )
    adam_copy = AdamState(
        m={k: v.copy() for k, v in adam.m.items()},
        v={k: v.copy() for k, v in adam.v.items()},
        step=adam.step,
        lr=adam.lr,
        beta1=adam.beta1,
        beta2=adam.beta2,
        eps=adam.eps,
        weight_decay=adam.weight_decay,
    )
    return Checkpoint(config, step, params_copy, adam_copy, rng.bit_generator.state)


def restore_rng(state: dict) -> np.random.Generator:
    bitgen = np.random.PCG64()
    bitgen.state = state
    return np.random.Generator(bitgen)


def _tensor_dict(ckpt: Checkpoint) -> dict:
    tensors = dict(named_arrays(ckpt.params))
    for name, arr in ckpt.adam.m.items():
        tensors[f"adam.m.{name}"] = arr
    for name, arr in ckpt.adam.v.items():
        tensors[f"adam.v.{name}"] = arr
    return tensors


def save(ckpt: Checkpoint, path) -> None:
    tensors = _tensor_dict(ckpt)
    header = {
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "adam": {
            "step": ckpt.adam.step,
            "lr": ckpt.adam.lr,
            "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2,
            "eps": ckpt.adam.eps,
            "weight_decay": ckpt.adam.weight_decay,
        },
        "rng": ckpt.rng_state,
        "tensors": [[name, list(arr.shape)] for name, arr in tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}")
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(
            f"{path} is not a {MAGIC.decode()} checkpoint (wrong magic or version)"
        )
    off = len(MAGIC)
    hlen = int.from_bytes(raw[off : off + 8], "little")
    off += 8
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}")
    off += hlen
    try:
        config = from_dict(header["config"])
        manifest = header["tensors"]
        arrays = {}
        for name, shape in manifest:
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            nbytes = count * 8
            if off + nbytes > len(raw):
                raise CheckpointError("checkpoint payload truncated")
            arrays[name] = (
                np.frombuffer(raw, dtype="<f8", count=count, offset=off)
                .reshape(shape)
                .copy()
            )
            off += nbytes
        if off != len(raw):
            raise CheckpointError("checkpoint payload has trailing bytes")
        params = params_from_arrays(
            {k: v for k, v in arrays.items() if not k.startswith("adam.")},
            config.world_dim,
            config.unet_skips,
            config.unet_grad_normalize,
        )
        a = header["adam"]
        adam = AdamState(
            m={k[len("adam.m."):]: v for k, v in arrays.items() if k.startswith("adam.m.")},
            v={k[len("adam.v."):]: v for k, v in arrays.items() if k.startswith("adam.v.")},
            step=int(a["step"]),
            lr=float(a["lr"]),
            beta1=float(a["beta1"]),
            beta2=float(a["beta2"]),
            eps=float(a["eps"]),
            weight_decay=float(a["weight_decay"]),
        )
        return Checkpoint(config, int(header["step"]), params, adam, header["rng"])
    except CheckpointError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint contents: {exc}")
