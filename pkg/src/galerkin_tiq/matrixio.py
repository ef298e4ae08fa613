"""Versioned container files for :class:`FormMatrices`.

Text variant (``.txt``/``.gtq``)::

    GTIQ-MATRICES text 1
    dim <n>
    perturbation <0|1>
    space_id <label>
    T
    <n lines, each: re im re im ... (2n numbers, row-major)>
    M
    <n lines>
    A                       # only when perturbation is 1
    <n lines>

Binary variant (``.bin``): little-endian header ``b"GTQM"``, ``uint16``
version, ``uint16`` flags (bit 0: perturbation present), ``uint32`` dim,
``uint32`` label length, the UTF-8 label, then ``complex128`` row-major
blocks ``T``, ``M`` and optionally ``A``.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .problems import FormMatrices, ProblemError

TEXT_MAGIC = "GTIQ-MATRICES"
BIN_MAGIC = b"GTQM"
VERSION = 1
_HEADER = struct.Struct("<4sHHII")


class MatrixFileError(ValueError):
    pass


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_text(fm: FormMatrices, path) -> None:
    n = fm.dim
    lines = [f"{TEXT_MAGIC} text {VERSION}", f"dim {n}",
             f"perturbation {int(fm.a_hat is not None)}", f"space_id {fm.space_id}"]
    blocks = [("T", fm.t_hat), ("M", fm.mass)]
    if fm.a_hat is not None:
        blocks.append(("A", fm.a_hat))
    for name, mat in blocks:
        lines.append(name)
        for row in mat:
            lines.append(" ".join(f"{_fmt(v.real)} {_fmt(v.imag)}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_binary(fm: FormMatrices, path) -> None:
    label = fm.space_id.encode("utf-8")
    flags = int(fm.a_hat is not None)
    parts = [_HEADER.pack(BIN_MAGIC, VERSION, flags, fm.dim, len(label)), label]
    for mat in (fm.t_hat, fm.mass) + ((fm.a_hat,) if fm.a_hat is not None else ()):
        parts.append(np.ascontiguousarray(mat, dtype="<c16").tobytes())
    Path(path).write_bytes(b"".join(parts))


def export_matrices(fm: FormMatrices, path, binary=None) -> None:
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    (write_binary if binary else write_text)(fm, path)


def _read_text(text: str) -> FormMatrices:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith(TEXT_MAGIC):
        raise MatrixFileError("bad magic: not a matrix container")
    head = lines[0].split()
    if len(head) != 3 or head[1] != "text" or head[2] != str(VERSION):
        raise MatrixFileError(f"unsupported header {lines[0]!r}")
    meta = {}
    pos = 1
    while pos < len(lines) and lines[pos].split()[0] in ("dim", "perturbation", "space_id"):
        key, _, val = lines[pos].partition(" ")
        meta[key] = val.strip()
        pos += 1
    try:
        n = int(meta["dim"])
        has_a = bool(int(meta.get("perturbation", "0")))
    except (KeyError, ValueError) as exc:
        raise MatrixFileError(f"malformed header: {exc}") from exc
    if n <= 0:
        raise MatrixFileError("dimension mismatch: dim must be positive")
    names = ["T", "M"] + (["A"] if has_a else [])
    mats = {}
    for name in names:
        if pos >= len(lines) or lines[pos] != name:
            raise MatrixFileError(f"dimension mismatch: expected block {name!r} at line {pos + 1}")
        rows = lines[pos + 1:pos + 1 + n]
        if len(rows) != n:
            raise MatrixFileError(f"dimension mismatch: block {name} has {len(rows)} rows, dim {n}")
        data = []
        for r in rows:
            try:
                nums = [float(t) for t in r.split()]
            except ValueError as exc:
                raise MatrixFileError(f"non-numeric entry in block {name}: {exc}") from exc
            if len(nums) != 2 * n:
                raise MatrixFileError(
                    f"dimension mismatch: block {name} row has {len(nums) // 2} entries, dim {n}")
            data.append(nums)
        arr = np.array(data)
        mats[name] = arr[:, 0::2] + 1j * arr[:, 1::2]
        pos += 1 + n
    if pos != len(lines):
        raise MatrixFileError("dimension mismatch: trailing data after last block")
    return FormMatrices(mats["T"], mats["M"], mats.get("A"), meta.get("space_id", ""))


def _read_binary(raw: bytes) -> FormMatrices:
    if len(raw) < _HEADER.size or raw[:4] != BIN_MAGIC:
        raise MatrixFileError("bad magic: not a matrix container")
    magic, version, flags, n, lab = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise MatrixFileError(f"unsupported version {version}")
    nblocks = 3 if flags & 1 else 2
    off = _HEADER.size + lab
    if n == 0 or len(raw) != off + nblocks * n * n * 16:
        raise MatrixFileError(f"dimension mismatch: header dim {n} does not match payload size")
    label = raw[_HEADER.size:off].decode("utf-8")
    data = np.frombuffer(raw, dtype="<c16", offset=off).reshape(nblocks, n, n).astype(complex)
    return FormMatrices(data[0].copy(), data[1].copy(),
                        data[2].copy() if nblocks == 3 else None, label)


def import_matrices(path, validate: bool = True) -> FormMatrices:
    """Load a container file (text or binary, detected from the magic bytes)."""
    raw = Path(path).read_bytes()
    if raw[:4] == BIN_MAGIC:
        fm = _read_binary(raw)
    else:
        try:
            fm = _read_text(raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise MatrixFileError("bad magic: not a matrix container") from exc
    if validate:
        try:
            fm.validate()
        except ProblemError as exc:
            raise MatrixFileError(str(exc)) from exc
    return fm
