"""File formats: RTTM, DKM1 matrices, DKMD model containers.

DKM1 layout (little endian)::

    b"DKM1" | rows:u32 | cols:u32 | has_times:u8 | [rows x f64 times] | rows*cols x f32

DKMD model container: ``b"DKMD" | meta_len:u32 | meta JSON (utf-8) | count:u32`` followed
by ``count`` entries of ``name_len:u16 | name | rows:u32 | cols:u32 | rows*cols x f64``.
"""

from __future__ import annotations

import io as _io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

MATRIX_MAGIC = b"DKM1"
MODEL_MAGIC = b"DKMD"
_HEADER = struct.Struct("<4sIIB")


# ---------------------------------------------------------------- RTTM

def format_rttm_line(file_id: str, onset: float, duration: float, label: str) -> str:
    return f"SPEAKER {file_id} 1 {onset:.3f} {duration:.3f} <NA> <NA> {label} <NA> <NA>"


def write_rttm(diarization, sink) -> None:
    """Write one SPEAKER line per segment to a path or text stream."""
    lines = [format_rttm_line(diarization.utterance_id, s.onset, s.duration, s.label)
             for s in diarization.segments]
    text = "".join(line + "\n" for line in lines)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text)


def parse_rttm(text: str, source: str = "<rttm>") -> dict:
    """Parse RTTM text into ``{file_id: [(onset, duration, label), ...]}``."""
    out: dict[str, list] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        where = f"{source}:{lineno}"
        if len(fields) != 10:
            raise FormatError(f"expected 10 fields, got {len(fields)}", where)
        if fields[0] != "SPEAKER":
            raise FormatError(f"unsupported record type {fields[0]!r}", where)
        try:
            onset, dur = float(fields[3]), float(fields[4])
        except ValueError as exc:
            raise FormatError(f"bad time field ({exc})", where) from None
        if not (np.isfinite(onset) and np.isfinite(dur)):
            raise FormatError("non-finite time", where)
        if dur < 0:
            raise FormatError(f"negative duration {dur}", where)
        if onset < 0:
            raise FormatError(f"negative onset {onset}", where)
        out.setdefault(fields[1], []).append((onset, dur, fields[7]))
    return out


def read_rttm(source, utterance_id: str | None = None):
    """Read an RTTM file or stream into a :class:`~langdiar.diarize.Diarization`.

    With several file ids present, ``utterance_id`` selects one.
    """
    from .diarize import Diarization, Segment

    if hasattr(source, "read"):
        text, name = source.read(), getattr(source, "name", "<stream>")
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise DataError(f"{source}: {exc.strerror}") from exc
        name = str(source)
    records = parse_rttm(text, name)
    if not records:
        return Diarization(utterance_id or Path(name).stem, [])
    if utterance_id is None:
        if len(records) > 1:
            raise FormatError(f"several file ids {sorted(records)}; pass utterance_id", name)
        utterance_id = next(iter(records))
    if utterance_id not in records:
        raise FormatError(f"file id {utterance_id!r} not present", name)
    segs = [Segment(o, d, lab) for o, d, lab in records[utterance_id] if d > 0]
    return Diarization(utterance_id, segs)


# ---------------------------------------------------------------- DKM1 matrices

def matrix_bytes(matrix, times=None) -> bytes:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise DataError("matrix must be 2-D")
    if not np.all(np.isfinite(m)):
        raise DataError("refusing to write non-finite matrix values")
    m32 = m.astype("<f4")
    if not np.all(np.isfinite(m32)):
        raise DataError("matrix values overflow float32")
    buf = bytearray(_HEADER.pack(MATRIX_MAGIC, m.shape[0], m.shape[1], 1 if times is not None else 0))
    if times is not None:
        t = np.asarray(times, dtype="<f8").ravel()
        if len(t) != m.shape[0]:
            raise DataError(f"{len(t)} times for {m.shape[0]} rows")
        if not np.all(np.isfinite(t)):
            raise DataError("refusing to write non-finite times")
        buf += t.tobytes()
    buf += np.ascontiguousarray(m32).tobytes()
    return bytes(buf)


def parse_matrix(data: bytes, source: str = "<matrix>") -> tuple[np.ndarray, np.ndarray | None]:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", f"{source}@0")
    magic, rows, cols, flag = _HEADER.unpack_from(data, 0)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"bad magic {magic!r}", f"{source}@0")
    if flag not in (0, 1):
        raise FormatError(f"bad times flag {flag}", f"{source}@12")
    need = _HEADER.size + (8 * rows if flag else 0) + 4 * rows * cols
    if len(data) < need:
        raise FormatError(f"truncated payload: {len(data)} bytes, header implies {need}", f"{source}@{len(data)}")
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes", f"{source}@{need}")
    off = _HEADER.size
    times = None
    if flag:
        times = np.frombuffer(data, "<f8", rows, off).astype(np.float64)
        off += 8 * rows
    mat = np.frombuffer(data, "<f4", rows * cols, off).reshape(rows, cols).astype(np.float32)
    return mat, times


def write_matrix(path, matrix, times=None) -> None:
    Path(path).write_bytes(matrix_bytes(matrix, times))


def read_matrix(path) -> tuple[np.ndarray, np.ndarray | None]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    return parse_matrix(data, str(path))


def write_embeddings(path, seq) -> None:
    write_matrix(path, seq.embeddings, seq.starts)


# ---------------------------------------------------------------- model container

def write_arrays(path, arrays: dict, meta: dict) -> None:
    blob = json.dumps(meta, sort_keys=True).encode()
    buf = _io.BytesIO()
    buf.write(MODEL_MAGIC + struct.pack("<I", len(blob)) + blob)
    buf.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8")
        if a.ndim == 1:
            a = a[None, :]
        if not np.all(np.isfinite(a)):
            raise DataError(f"array {name!r} has non-finite values")
        key = name.encode()
        buf.write(struct.pack("<H", len(key)) + key + struct.pack("<II", *a.shape))
        buf.write(np.ascontiguousarray(a).tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_arrays(path) -> tuple[dict, dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    src = str(path)

    def take(off, n):
        if off + n > len(data):
            raise FormatError("truncated model file", f"{src}@{off}")
        return data[off:off + n], off + n

    magic, off = take(0, 4)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}", f"{src}@0")
    raw, off = take(off, 4)
    blob, off = take(off, struct.unpack("<I", raw)[0])
    try:
        meta = json.loads(blob)
    except ValueError as exc:
        raise FormatError(f"bad metadata ({exc})", f"{src}@8") from None
    raw, off = take(off, 4)
    arrays = {}
    for _ in range(struct.unpack("<I", raw)[0]):
        raw, off = take(off, 2)
        key, off = take(off, struct.unpack("<H", raw)[0])
        raw, off = take(off, 8)
        rows, cols = struct.unpack("<II", raw)
        payload, off = take(off, 8 * rows * cols)
        arrays[key.decode()] = np.frombuffer(payload, "<f8").reshape(rows, cols).astype(np.float64)
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes", f"{src}@{off}")
    return arrays, meta


def save_backend(path, backend) -> None:
    p = backend.projection
    arrays = {"mean": p.mean}
    for name in ("lda", "wccn", "whitener", "whiten_mean"):
        val = getattr(p, name)
        if val is not None:
            arrays[name] = val
    if backend.gplda is not None:
        arrays["sigma_w"] = backend.gplda.sigma_w
        arrays["sigma_b"] = backend.gplda.sigma_b
        arrays["mu"] = backend.gplda.mu
    meta = dict(backend.meta, scorer=backend.scorer, apply_length_norm=p.apply_length_norm)
    write_arrays(path, arrays, meta)


def load_backend(path):
    from .backend import Backend, GpldaModel, ProjectionSet

    arrays, meta = read_arrays(path)
    if "mean" not in arrays or "scorer" not in meta:
        raise FormatError("not a back-end model", str(path))

    def vec(name):
        return arrays[name][0] if name in arrays else None

    proj = ProjectionSet(
        mean=vec("mean"),
        lda=arrays.get("lda"),
        wccn=arrays.get("wccn"),
        whitener=arrays.get("whitener"),
        apply_length_norm=bool(meta.get("apply_length_norm")),
        whiten_mean=vec("whiten_mean"),
    )
    gp = None
    if "sigma_w" in arrays:
        gp = GpldaModel(arrays["sigma_w"], arrays["sigma_b"], vec("mu"))
    scorer = meta["scorer"]
    meta = {k: v for k, v in meta.items() if k not in ("scorer", "apply_length_norm")}
    return Backend(proj, scorer, gp, meta)
