"""Binary checkpoint format.

Layout (all little-endian)::

    b"GRF1"
    u32  parameter count
    per parameter:
        u32  name length, UTF-8 name
        u32  rank, rank x u64 dims
        prod(dims) x f64 values
"""

import struct

import numpy as np

MAGIC = b"GRF1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(named_params, path):
    """Write ``(name, tensor)`` pairs (or a dict) to ``path``."""
    items = list(named_params.items() if isinstance(named_params, dict) else named_params)
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate parameter names")
    chunks = [MAGIC, struct.pack("<I", len(items))]
    for name, t in items:
        data = np.asarray(getattr(t, "data", t), dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        chunks.append(np.ascontiguousarray(data).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path):
    """Parse a checkpoint into an ordered ``{name: ndarray}``; nothing is mutated on error."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = buf[pos:pos + n]
        pos += n
        return out

    (count,) = struct.unpack("<I", take(4))
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(dims)
        if name in out:
            raise CheckpointError(f"{path}: duplicate parameter {name!r}")
        out[name] = arr
    if pos != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after {count} parameters")
    return out


def load_into(module, path, prefix=None, strict=True):
    """Copy checkpoint values into ``module``'s parameters.

    ``prefix`` restricts both sides to names starting with it (e.g. ``"enh."``).
    With ``strict``, any name present on only one side is an error. All checks
    run before the first write.
    """
    stored = load_checkpoint(path)
    params = dict(module.named_parameters())
    if prefix is not None:
        stored = {k: v for k, v in stored.items() if k.startswith(prefix)}
        params = {k: v for k, v in params.items() if k.startswith(prefix)}
    missing = [k for k in params if k not in stored]
    if missing and strict:
        raise CheckpointError(f"checkpoint lacks parameter {missing[0]!r}")
    extra = [k for k in stored if k not in params]
    if extra and strict:
        raise CheckpointError(f"model has no parameter {extra[0]!r}")
    for k, v in stored.items():
        if k in params and params[k].shape != v.shape:
            raise CheckpointError(f"shape mismatch for {k!r}: model {params[k].shape}, file {v.shape}")
    for k, v in stored.items():
        if k in params:
            params[k].data = v.copy()
    return sorted(k for k in stored if k in params)
