"""On-disk formats for chains and summaries.

``samples.bin`` layout (little endian)::

    8 bytes   magic b"DLSJMSMP"
    uint32    format version
    uint32    header length H
    H bytes   UTF-8 JSON header: n, p, dim, n_samples, arrays
    payload   the arrays named in the header, in order, C-contiguous

All CSV numbers are written with ``repr`` so files round-trip exactly and are
byte-identical across runs with equal inputs.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .likelihood import PriorConfig
from .sampler import AcceptanceLedger, ChainOutput, SamplerConfig

__all__ = [
    "SAMPLES_MAGIC",
    "SAMPLES_VERSION",
    "fmt",
    "write_rows",
    "write_matrix_csv",
    "read_matrix_csv",
    "save_chain",
    "load_chain",
    "sha256_file",
    "git_blob_hash",
]

SAMPLES_MAGIC = b"DLSJMSMP"
SAMPLES_VERSION = 1
_ARRAYS = (
    ("iterations", "<i8"),
    ("beta", "<f8"),
    ("theta", "<f8"),
    ("sigma_z_sq", "<f8"),
    ("z", "<f8"),
    ("log_posterior", "<f8"),
)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_matrix_csv(path, matrix: np.ndarray, labels: Optional[Sequence[str]] = None) -> None:
    m = np.asarray(matrix)
    labels = list(labels) if labels is not None else [str(i) for i in range(m.shape[1])]
    row_labels = labels if m.shape[0] == len(labels) else [str(i) for i in range(m.shape[0])]
    write_rows(path, [""] + labels, ([row_labels[r]] + list(m[r]) for r in range(m.shape[0])))


def read_matrix_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]]), labels


def _ledger_rows(ledger: AcceptanceLedger):
    for it, phase, block, prop, acc, jump in ledger.history:
        rate = acc / prop if prop else float("nan")
        yield it, phase, block, prop, acc, rate, jump


def save_chain(chain: ChainOutput, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    S, n, dim = chain.z.shape
    header = {
        "n": n, "p": chain.beta.shape[1], "dim": dim, "n_samples": S,
        "arrays": [{"name": name, "dtype": dt, "shape": list(getattr(chain, name).shape)} for name, dt in _ARRAYS],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(d / "samples.bin", "wb") as fh:
        fh.write(SAMPLES_MAGIC)
        fh.write(struct.pack("<II", SAMPLES_VERSION, len(blob)))
        fh.write(blob)
        for name, dt in _ARRAYS:
            fh.write(np.ascontiguousarray(getattr(chain, name), dtype=dt).tobytes())
    write_rows(d / "log_posterior.csv", ["sample", "iteration", "log_posterior"],
               ((s, chain.iterations[s], chain.log_posterior[s]) for s in range(S)))
    write_rows(d / "acceptance.csv",
               ["iteration", "phase", "block", "proposals", "acceptances", "rate", "jump_sd"],
               _ledger_rows(chain.ledger))
    config = {
        "sampler": chain.config.to_dict(),
        "prior": {
            "sigma_beta_sq": chain.prior.sigma_beta_sq,
            "sigma_theta_sq": chain.prior.sigma_theta_sq,
            "a_sigma": chain.prior.a_sigma,
            "b_sigma": chain.prior.b_sigma,
            "ordered_pairs": chain.prior.ordered_pairs,
        },
        "pair_convention": "ordered" if chain.prior.ordered_pairs else "unordered",
        "final_jumps": chain.final_jumps,
        "buckets": chain.buckets.tolist(),
        "blocks": list(chain.ledger.blocks),
    }
    (d / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return d


def load_chain(directory) -> ChainOutput:
    d = Path(directory)
    data = (d / "samples.bin").read_bytes()
    if data[:8] != SAMPLES_MAGIC:
        raise ValueError(f"{d / 'samples.bin'}: bad magic")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != SAMPLES_VERSION:
        raise ValueError(f"unsupported samples.bin version {version}")
    header = json.loads(data[16:16 + hlen])
    offset = 16 + hlen
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"]))
        arrays[spec["name"]] = np.frombuffer(data, dtype=dt, count=count, offset=offset).reshape(spec["shape"]).copy()
        offset += count * dt.itemsize
    cfg = json.loads((d / "config.json").read_text())
    sampler = cfg["sampler"]
    sampler["jump_z_schedule"] = tuple(sampler["jump_z_schedule"])
    sampler["update"] = tuple(sampler["update"])
    config = SamplerConfig(**sampler)
    prior = PriorConfig(**cfg["prior"])
    ledger = AcceptanceLedger(tuple(cfg["blocks"]))
    with open(d / "acceptance.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            ledger.history.append((int(row["iteration"]), row["phase"], row["block"], int(row["proposals"]),
                                   int(row["acceptances"]), float(row["jump_sd"])))
    for _, _, b, prop, acc, _ in ledger.history:
        ledger.proposals[b] += prop
        ledger.acceptances[b] += acc
    return ChainOutput(arrays["beta"], arrays["theta"], arrays["sigma_z_sq"], arrays["z"],
                       arrays["log_posterior"], arrays["iterations"], ledger, config, prior,
                       cfg["final_jumps"], np.asarray(cfg["buckets"], dtype=np.int64))


def git_blob_hash(path) -> str:
    """SHA-1 of the file as git would store it (``blob <size>\\0`` + content)."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
