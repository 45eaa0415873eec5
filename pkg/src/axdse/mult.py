"""Approximate multipliers as exhaustive lookup tables.

A multiplier of bit width ``w`` is stored as a ``(2**w, 2**w)`` table whose
entry ``[a, b]`` is the circuit output for operands ``a`` and ``b``. The
second operand is the one that carries network weights.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"AXML"
VERSION = 1
MIN_BITS = 2
MAX_BITS = 12

_HEADER = struct.Struct("<4sBBH")


class LutFormatError(ValueError):
    """Malformed LUT file or text dump."""


class LutValidationError(ValueError):
    """LUT contents violate the multiplier invariants."""


@dataclass(frozen=True, eq=False)
class MultiplierModel:
    name: str
    bit_width: int
    lut: np.ndarray = field(repr=False)
    energy_pj: float = 1.0

    def __post_init__(self):
        if not MIN_BITS <= self.bit_width <= MAX_BITS:
            raise ValueError(f"bit_width must be in [{MIN_BITS}, {MAX_BITS}], got {self.bit_width}")
        n = 1 << self.bit_width
        lut = np.asarray(self.lut)
        if lut.shape == (n * n,):
            lut = lut.reshape(n, n)
        if lut.shape != (n, n):
            raise LutValidationError(f"lut shape {lut.shape} != ({n}, {n})")
        if lut.size and (lut.min() < 0 or int(lut.max()) >= n * n):
            raise LutValidationError(f"lut entries must lie in [0, {n * n})")
        if self.energy_pj < 0:
            raise ValueError("energy_pj must be >= 0")
        lut = np.ascontiguousarray(lut, dtype=np.uint32)
        lut.setflags(write=False)
        object.__setattr__(self, "lut", lut)
        object.__setattr__(self, "energy_pj", float(self.energy_pj))

    @property
    def size(self) -> int:
        return 1 << self.bit_width

    def __call__(self, a, b):
        return self.lut[a, b]

    def __eq__(self, other):
        if not isinstance(other, MultiplierModel):
            return NotImplemented
        return (
            self.name == other.name
            and self.bit_width == other.bit_width
            and self.energy_pj == other.energy_pj
            and np.array_equal(self.lut, other.lut)
        )

    def __hash__(self):
        return hash((self.name, self.bit_width, self.energy_pj, self.lut.tobytes()))

    def with_energy(self, energy_pj: float) -> MultiplierModel:
        return MultiplierModel(self.name, self.bit_width, self.lut, energy_pj)

    def is_exact(self) -> bool:
        return bool(np.array_equal(self.lut, exact_products(self.bit_width)))


@dataclass(frozen=True)
class ErrorMetrics:
    med: float
    error_probability: float
    mean_relative_error: float
    worst_case_ed: int
    mismatches: int


def exact_products(bit_width: int) -> np.ndarray:
    ops = np.arange(1 << bit_width, dtype=np.int64)
    return np.multiply.outer(ops, ops)


def _check_width(bit_width: int) -> None:
    if not isinstance(bit_width, (int, np.integer)) or not MIN_BITS <= bit_width <= MAX_BITS:
        raise ValueError(f"bit_width must be in [{MIN_BITS}, {MAX_BITS}], got {bit_width!r}")


def make_exact(bit_width: int = 8, energy_pj: float = 1.0, name: str | None = None) -> MultiplierModel:
    _check_width(bit_width)
    return MultiplierModel(name or f"exact{bit_width}", bit_width, exact_products(bit_width), energy_pj)


def make_truncated(
    bit_width: int, dropped_operand_lsbs: int, energy_pj: float = 1.0, name: str | None = None
) -> MultiplierModel:
    """Multiplier that ignores the low bits of the second (weight) operand."""
    _check_width(bit_width)
    if not 0 <= dropped_operand_lsbs < bit_width:
        raise ValueError(f"dropped_operand_lsbs must be in [0, {bit_width}), got {dropped_operand_lsbs}")
    ops = np.arange(1 << bit_width, dtype=np.int64)
    mask = ~((1 << dropped_operand_lsbs) - 1)
    lut = np.multiply.outer(ops, ops & mask)
    return MultiplierModel(name or f"trunc{bit_width}_op{dropped_operand_lsbs}", bit_width, lut, energy_pj)


def make_product_truncated(
    bit_width: int, dropped_product_lsbs: int, energy_pj: float = 1.0, name: str | None = None
) -> MultiplierModel:
    """Multiplier whose exact product has its low bits cleared."""
    _check_width(bit_width)
    if not 0 <= dropped_product_lsbs < 2 * bit_width:
        raise ValueError(f"dropped_product_lsbs must be in [0, {2 * bit_width}), got {dropped_product_lsbs}")
    mask = ~((1 << dropped_product_lsbs) - 1)
    lut = exact_products(bit_width) & mask
    return MultiplierModel(name or f"trunc{bit_width}_prod{dropped_product_lsbs}", bit_width, lut, energy_pj)


def make_constant(bit_width: int, value: int = 0, energy_pj: float = 0.0, name: str | None = None) -> MultiplierModel:
    _check_width(bit_width)
    lut = np.full((1 << bit_width, 1 << bit_width), value, dtype=np.int64)
    return MultiplierModel(name or f"const{bit_width}_{value}", bit_width, lut, energy_pj)


def characterize(m: MultiplierModel) -> ErrorMetrics:
    """Error metrics by exhaustive enumeration of every operand pair.

    The relative error skips pairs whose exact product is zero.
    """
    exact = exact_products(m.bit_width)
    ed = np.abs(m.lut.astype(np.int64) - exact)
    total = ed.size
    mismatches = int(np.count_nonzero(ed))
    nz = exact != 0
    mre = float(np.mean(ed[nz] / exact[nz])) if nz.any() else 0.0
    return ErrorMetrics(
        med=int(ed.sum()) / total,
        error_probability=mismatches / total,
        mean_relative_error=mre,
        worst_case_ed=int(ed.max()),
        mismatches=mismatches,
    )


def med(m: MultiplierModel) -> float:
    return characterize(m).med


# -- file formats ----------------------------------------------------------

def store_lut(m: MultiplierModel, path) -> None:
    meta = json.dumps({"name": m.name, "energy_pj": m.energy_pj}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, m.bit_width, 0))
        fh.write(m.lut.astype("<u4").tobytes())
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def load_lut(path) -> MultiplierModel:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise LutFormatError(f"{path}: file too short for header")
    magic, version, bits, reserved = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise LutFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise LutFormatError(f"{path}: unsupported version {version}")
    if reserved != 0:
        raise LutFormatError(f"{path}: reserved header field is {reserved}, expected 0")
    if not MIN_BITS <= bits <= MAX_BITS:
        raise LutFormatError(f"{path}: unsupported bit width {bits}")
    n_entries = 1 << (2 * bits)
    body_end = _HEADER.size + 4 * n_entries
    if len(raw) < body_end + 4:
        raise LutFormatError(f"{path}: expected {n_entries} entries plus metadata, file has {len(raw)} bytes")
    lut = np.frombuffer(raw, dtype="<u4", count=n_entries, offset=_HEADER.size)
    (meta_len,) = struct.unpack_from("<I", raw, body_end)
    if len(raw) != body_end + 4 + meta_len:
        raise LutFormatError(f"{path}: metadata length {meta_len} does not match file size")
    try:
        meta = json.loads(raw[body_end + 4:].decode("utf-8"))
        name, energy = str(meta["name"]), float(meta["energy_pj"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise LutFormatError(f"{path}: bad metadata block ({exc})") from exc
    return MultiplierModel(name, bits, lut.astype(np.int64), energy)


def lut_from_triples(lines, bit_width: int, name: str, energy_pj: float) -> MultiplierModel:
    """Build a model from exhaustive ``a b product`` text lines.

    Every operand pair must appear exactly once; blank lines and ``#``
    comments are ignored.
    """
    _check_width(bit_width)
    n = 1 << bit_width
    lut = np.full((n, n), -1, dtype=np.int64)
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 3:
            raise LutFormatError(f"line {lineno}: expected 'a b product', got {line!r}")
        try:
            a, b, p = (int(x) for x in parts)
        except ValueError as exc:
            raise LutFormatError(f"line {lineno}: {exc}") from exc
        if not (0 <= a < n and 0 <= b < n):
            raise LutFormatError(f"line {lineno}: operand out of range for {bit_width}-bit multiplier")
        if lut[a, b] >= 0:
            raise LutFormatError(f"line {lineno}: duplicate pair ({a}, {b})")
        lut[a, b] = p
    missing = int(np.count_nonzero(lut < 0))
    if missing:
        raise LutFormatError(f"dump is not exhaustive: {missing} operand pairs missing")
    return MultiplierModel(name, bit_width, lut, energy_pj)


_BUILTINS = {
    "exact": lambda spec, w: make_exact(w),
    "truncated": lambda spec, w: make_truncated(w, int(spec["dropped"])),
    "product_truncated": lambda spec, w: make_product_truncated(w, int(spec["dropped"])),
    "constant": lambda spec, w: make_constant(w, int(spec.get("value", 0))),
}


def _library_entry(entry, base: Path) -> MultiplierModel:
    if isinstance(entry, str):
        return load_lut(base / entry)
    if "path" in entry:
        m = load_lut(base / entry["path"])
    elif "builtin" in entry:
        kind = entry["builtin"]
        if kind not in _BUILTINS:
            raise LutFormatError(f"unknown builtin multiplier {kind!r}")
        m = _BUILTINS[kind](entry, int(entry.get("bit_width", 8)))
    else:
        raise LutFormatError(f"library entry needs 'path' or 'builtin': {entry!r}")
    if "name" in entry or "energy_pj" in entry:
        m = MultiplierModel(entry.get("name", m.name), m.bit_width, m.lut, entry.get("energy_pj", m.energy_pj))
    return m


def load_library(manifest_path) -> list[MultiplierModel]:
    """Load multipliers listed in a library manifest, in index order.

    Entries are LUT paths relative to the manifest, or objects with ``path``
    or ``builtin`` keys and optional ``name``/``energy_pj`` overrides.
    """
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    entries = doc["multipliers"] if isinstance(doc, dict) else doc
    lib = [_library_entry(e, manifest_path.parent) for e in entries]
    names = [m.name for m in lib]
    if len(set(names)) != len(names):
        raise LutValidationError(f"duplicate multiplier names in {manifest_path}")
    return lib
