"""Self-contained binary checkpoint container.

Layout: 4-byte magic ``UJSC``, little-endian u32 format version,
little-endian u64 header length, a UTF-8 JSON header, then the
payload. The header carries run metadata plus a manifest of named
entries (name, dtype, shape, byte offset into the payload); every
entry is stored as little-endian float64. JSON keys are sorted and
separators fixed, so save -> load -> save is byte-identical.
"""

import json
from pathlib import Path

import numpy as np

from ujscc.channel import ModulationPlan, SnrPolicy
from ujscc.codec import ArchitectureConfig, Codec
from ujscc.pipeline import System
from ujscc.vq import Codebook

MAGIC = b"UJSC"
VERSION = 1
_DTYPE = "<f8"


def save_checkpoint(
    path: str | Path, entries: list[tuple[str, np.ndarray]], meta: dict
) -> None:
    manifest = []
    offset = 0
    blobs = []
    for name, arr in entries:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        blob = arr.astype(_DTYPE, copy=False).tobytes()
        manifest.append(
            {"name": name, "dtype": _DTYPE, "shape": list(arr.shape), "offset": offset}
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"meta": meta, "entries": manifest},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(VERSION.to_bytes(4, "little"))
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict, list[str]]:
    """Returns (entries by name, meta, entry order)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (magic {raw[:4]!r})")
    version = int.from_bytes(raw[4:8], "little")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header_len = int.from_bytes(raw[8:16], "little")
    header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    payload = raw[16 + header_len :]
    entries = {}
    order = []
    for item in header["entries"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = item["offset"]
        arr = np.frombuffer(
            payload, dtype=item["dtype"], count=count, offset=start
        ).reshape(shape)
        entries[item["name"]] = arr.astype(np.float64)
        order.append(item["name"])
    return entries, header["meta"], order


# -- system-level wrappers ----------------------------------------------------


def _arch_meta(arch: ArchitectureConfig) -> dict:
    return {
        "name": arch.name,
        "c1": arch.c1,
        "c2": arch.c2,
        "dims": list(arch.dims),
        "n_symbols": arch.n_symbols,
        "kernel": arch.kernel,
        "image_shape": list(arch.image_shape),
    }


def _arch_from_meta(d: dict) -> ArchitectureConfig:
    return ArchitectureConfig(
        d["name"],
        d["c1"],
        d["c2"],
        tuple(d["dims"]),
        d["n_symbols"],
        d["kernel"],
        tuple(d["image_shape"]),
    )


def _plan_meta(plan: ModulationPlan) -> dict:
    return {
        "orders": list(plan.orders),
        "dims": list(plan.dims),
        "boundaries": list(plan.policy.boundaries),
        "train_bounds": list(plan.policy.train_bounds),
    }


def _plan_from_meta(d: dict) -> ModulationPlan:
    return ModulationPlan(
        tuple(d["orders"]),
        tuple(d["dims"]),
        SnrPolicy(tuple(d["boundaries"]), tuple(d["train_bounds"])),
    )


def save_system(path: str | Path, system: System, extra: dict | None = None) -> None:
    """One file for a single-codec system; use save_te_checkpoints for the
    per-order bundle."""
    if len(system.codecs) != 1:
        raise ValueError("multi-codec systems are saved one checkpoint per order")
    meta = {
        "scheme": system.scheme,
        "arch": _arch_meta(system.arch),
        "plan": _plan_meta(system.plan),
        "extra": extra or {},
    }
    save_checkpoint(path, system.state_entries(), meta)


def save_te_checkpoints(
    out_dir: str | Path, system: System, extra: dict | None = None
) -> list[Path]:
    """K independent checkpoints, one per modulation order."""
    if system.scheme != "te":
        raise ValueError("expected a task-effective bundle")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, (codec, book) in enumerate(zip(system.codecs, system.codebooks), start=1):
        meta = {
            "scheme": "te",
            "te_index": k,
            "arch": _arch_meta(system.arch),
            "plan": _plan_meta(system.plan),
            "extra": extra or {},
        }
        entries = list(codec.state_entries())
        entries.append((f"codebook{k}", book.values))
        path = out_dir / f"te_k{k}.ujsc"
        save_checkpoint(path, entries, meta)
        paths.append(path)
    return paths


def load_system(path: str | Path) -> tuple[System, dict]:
    """Rebuild a runnable system from one checkpoint file."""
    entries, meta, _ = load_checkpoint(path)
    arch = _arch_from_meta(meta["arch"])
    plan = _plan_from_meta(meta["plan"])
    rng = np.random.default_rng(0)  # weights are overwritten below
    if meta["scheme"] == "te":
        k = meta["te_index"]
        codec = Codec(arch, "te", rng, te_index=k)
        codec.load_state(entries)
        book = Codebook(k, entries[f"codebook{k}"])
        return System("te", arch, plan, [codec], [book], te_index=k), meta
    codec = Codec(arch, meta["scheme"], rng)
    codec.load_state(entries)
    books = [
        Codebook(k, entries[f"codebook{k}"]) for k in range(1, plan.K + 1)
    ]
    return System(meta["scheme"], arch, plan, [codec], books), meta


def load_te_bundle(paths: list[str | Path]) -> tuple[System, dict]:
    """Assemble the full task-effective system from its K checkpoints."""
    codecs: dict[int, Codec] = {}
    books: dict[int, Codebook] = {}
    arch = plan = meta_out = None
    for path in paths:
        entries, meta, _ = load_checkpoint(path)
        if meta["scheme"] != "te":
            raise ValueError(f"{path}: not a per-order checkpoint")
        k = meta["te_index"]
        arch = _arch_from_meta(meta["arch"])
        plan = _plan_from_meta(meta["plan"])
        codec = Codec(arch, "te", np.random.default_rng(0), te_index=k)
        codec.load_state(entries)
        codecs[k] = codec
        books[k] = Codebook(k, entries[f"codebook{k}"])
        meta_out = meta
    ks = sorted(codecs)
    if ks != list(range(1, plan.K + 1)):
        raise ValueError(f"bundle incomplete: have orders {ks}, need 1..{plan.K}")
    system = System(
        "te", arch, plan, [codecs[k] for k in ks], [books[k] for k in ks]
    )
    return system, meta_out
