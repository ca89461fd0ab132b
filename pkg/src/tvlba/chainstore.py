"""Binary persistence of fitted chains.

Layout (little-endian): 8-byte magic, u4 format version, u8 header
length, a canonical JSON header, then the draw arrays as raw float64 in
a fixed order (theta transformed, theta natural, kept trajectories). The
header carries everything needed to reconstruct the run configuration,
so save -> load is lossless and a rerun from the same (data, config,
seed) writes byte-identical files. A JSON sidecar duplicates the header
for human inspection and adds the wall-clock timestamp; the timestamp
lives only there to keep the binary reproducible.
"""

import fcntl
import hashlib
import json
import struct
import warnings
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import dynamics, pmwg
from .dynamics import ModelKind

MAGIC = b"TVLBACHN"
VERSION = 1

_ARRAYS = ("theta_x", "theta_nat", "traj")   # serialization order


def _canon_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(header):
    """Hash of the fields that determine the draws bit-for-bit."""
    keys = ("kind", "dim", "subj_labels", "T_j", "seed", "config",
            "priors", "design_name")
    return hashlib.sha256(
        _canon_json({k: header[k] for k in keys}).encode()).hexdigest()


def _build_header(chain):
    header = {
        "format": "tvlba-chain",
        "version": VERSION,
        "kind": chain.kind.value,
        "dim": int(chain.dim),
        "subj_labels": [str(s) for s in chain.subj_labels],
        "T_j": [int(t) for t in chain.T_j],
        "stage_bounds": [int(b) for b in chain.stage_bounds],
        "traj_thin": int(chain.traj_thin),
        "phi_step": float(chain.phi_step),
        "phi_accept": float(chain.phi_accept),
        "seed": int(chain.seed),
        "config": asdict(chain.config),
        "priors": asdict(chain.priors),
        "design_name": chain.design_name,
        "degen_total": [int(d) for d in
                        chain.extra.get("degen_total",
                                        np.zeros(len(chain.subj_labels)))],
        "shapes": {k: list(getattr(chain, k).shape) for k in _ARRAYS},
    }
    header["config"]["sample_weights"] = list(
        header["config"]["sample_weights"])
    header["config_hash"] = config_hash(header)
    return header


def sidecar_path(path):
    return Path(str(path) + ".json")


def save_chain(chain, path):
    """Write a chain file plus its JSON sidecar; returns the path."""
    path = Path(path)
    header = _build_header(chain)
    blob = _canon_json(header).encode()
    with open(path, "wb") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for name in _ARRAYS:
            arr = np.ascontiguousarray(getattr(chain, name), dtype="<f8")
            fh.write(arr.tobytes())
    side = dict(header)
    side["written_at"] = datetime.now(timezone.utc).isoformat()
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        json.dump(side, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def load_chain(path):
    """Read a chain file back into its in-memory form.

    Errors on bad magic, version mismatch (naming both versions), or a
    size that does not match the header's shapes; a sidecar whose config
    hash disagrees with the binary header only warns.
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a chain file")
    if len(raw) < 20:
        raise ValueError(f"{path} is truncated")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise ValueError(f"chain file {path} has format version {version}; "
                         f"this build reads version {VERSION}")
    if len(raw) < 20 + hlen:
        raise ValueError(f"{path} is truncated")
    header = json.loads(raw[20:20 + hlen].decode())

    off = 20 + hlen
    arrays = {}
    for name in _ARRAYS:
        shape = tuple(header["shapes"][name])
        nbytes = int(np.prod(shape)) * 8
        if off + nbytes > len(raw):
            raise ValueError(f"{path} is truncated in array {name!r}")
        arrays[name] = np.frombuffer(
            raw, dtype="<f8", count=int(np.prod(shape)),
            offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(raw):
        raise ValueError(f"{path} has {len(raw) - off} trailing bytes")

    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError:
            warnings.warn(f"sidecar {side} is not valid JSON")
        else:
            if meta.get("config_hash") != header["config_hash"]:
                warnings.warn(
                    f"sidecar {side} config hash does not match the "
                    f"binary header; the sidecar may be stale")

    cfg = dict(header["config"])
    cfg["sample_weights"] = tuple(cfg["sample_weights"])
    return pmwg.ChainResult(
        kind=ModelKind(header["kind"]), dim=header["dim"],
        subj_labels=list(header["subj_labels"]),
        T_j=np.asarray(header["T_j"], dtype=np.int64),
        theta_x=arrays["theta_x"], theta_nat=arrays["theta_nat"],
        stage_bounds=tuple(header["stage_bounds"]),
        traj=arrays["traj"], traj_thin=header["traj_thin"],
        phi_step=header["phi_step"], phi_accept=header["phi_accept"],
        seed=header["seed"], config=pmwg.MCMCConfig(**cfg),
        priors=dynamics.Priors(**header["priors"]),
        design_name=header["design_name"],
        extra={"degen_total": np.asarray(header["degen_total"],
                                         dtype=np.int64)})
