"""Policy checkpoint files.

Layout: an 8-byte magic, a little-endian uint32 header length, a UTF-8
JSON header (format version, layer sizes, section table, normalization
counts), then the sections as a flat little-endian float64 dump in the
order given by the header's section table. Documented in
docs/checkpoint-format.md.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ScenarioError
from .nets import Mlp
from .policy import GaussianPolicy
from .trpo import RunningNorm

MAGIC = b"WPTRL\x00\x01\n"
FORMAT_VERSION = 1


def save_checkpoint(path, policy: GaussianPolicy, value: Mlp, obs_norm: RunningNorm,
                    extra: dict | None = None) -> None:
    sections = [
        ("policy_net", policy.net.get_flat()),
        ("log_std", policy.log_std),
        ("value_net", value.get_flat()),
        ("obs_mean", obs_norm.mean),
        ("obs_var", obs_norm.var),
    ]
    header = {
        "format_version": FORMAT_VERSION,
        "policy_sizes": list(policy.net.sizes),
        "value_sizes": list(value.sizes),
        "obs_count": obs_norm.count,
        "dtype": "<f8",
        "sections": [[name, int(arr.size)] for name, arr in sections],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in sections:
            fh.write(np.asarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Rebuild (policy, value, obs_norm, extra) from a checkpoint file."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ScenarioError(f"{path}: not a policy checkpoint")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ScenarioError(
                f"{path}: unsupported checkpoint version {header.get('format_version')}"
            )
        payload = np.frombuffer(fh.read(), dtype="<f8")

    arrays = {}
    offset = 0
    for name, size in header["sections"]:
        arrays[name] = payload[offset:offset + size].copy()
        offset += size
    if offset != payload.size:
        raise ScenarioError(f"{path}: payload size does not match the section table")

    policy_sizes = header["policy_sizes"]
    dummy = np.random.default_rng(0)
    policy = GaussianPolicy(policy_sizes[0], policy_sizes[-1], policy_sizes[1:-1], dummy)
    policy.net.set_flat(arrays["policy_net"])
    policy.log_std = arrays["log_std"]
    value = Mlp(header["value_sizes"], dummy)
    value.set_flat(arrays["value_net"])
    norm = RunningNorm(mean=arrays["obs_mean"], var=arrays["obs_var"],
                       count=float(header["obs_count"]))
    return policy, value, norm, header.get("extra", {})
