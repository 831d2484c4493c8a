# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Exact arithmetic in a prime field and a fixed-point codec for real payloads.

Field elements and vectors are ``galois`` field arrays. A scalar element is a
0-d array, a vector a 1-d array. All arrays of one protocol instance belong to
the same field class, which identifies the modulus.
"""

import contextlib
import enum
import functools
import hashlib
import struct
from collections import Counter
from collections.abc import Iterator
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import TypeAlias

import galois
import numpy as np
from numpy.typing import ArrayLike

MERSENNE_61 = 2**61 - 1
"""Default modulus, the Mersenne prime :math:`2^{61} - 1`."""

ELEMENT_BYTES = 8
"""Size of the canonical little-endian encoding of one element."""

LENGTH_PREFIX_BYTES = 4

FieldElement: TypeAlias = galois.FieldArray
"""0-d element of :math:`\\mathbb{F}_p`."""

FieldVector: TypeAlias = galois.FieldArray
"""1-d vector over :math:`\\mathbb{F}_p` of length ``D >= 1``."""


class ZeroInverseError(ZeroDivisionError):
    """Zero has no multiplicative inverse."""


class FieldMismatchError(ValueError):
    """Operands belong to different fields or have different lengths."""


class CodecRangeError(ValueError):
    """A real payload value lies outside ``[0, 1]``."""


@functools.cache
def prime_field(modulus: int = MERSENNE_61) -> type[galois.FieldArray]:
    """Return the field array class for :math:`\\mathbb{F}_p`.

    Parameters
    ----------
    modulus:
        A prime below 2^63, so representatives fit in int64.

    Returns
    -------
    :
        The ``galois`` field array class, cached per modulus.
    """
    if modulus >= 2**63 or not galois.is_prime(modulus):
        raise ValueError(f"Modulus must be a prime below 2^63, got {modulus}")
    return galois.GF(modulus)


def modulus_of(x: galois.FieldArray) -> int:
    return int(type(x).order)


def element(value: int, modulus: int = MERSENNE_61) -> FieldElement:
    """Construct an element from its canonical representative."""
    return prime_field(modulus)(value)


def vector(values: ArrayLike, modulus: int = MERSENNE_61) -> FieldVector:
    """Construct a read-only vector from canonical representatives."""
    v = prime_field(modulus)(np.asarray(values, dtype=np.int64).reshape(-1))
    if v.size == 0:
        raise FieldMismatchError("A field vector needs at least one element")
    v.flags.writeable = False
    return v


def zeros(dim: int, modulus: int = MERSENNE_61) -> FieldVector:
    return vector(np.zeros(dim, dtype=np.int64), modulus)


def _check_compatible(a: galois.FieldArray, b: galois.FieldArray) -> None:
    if type(a) is not type(b):
        raise FieldMismatchError(
            f"Operands live in different fields: p={modulus_of(a)} and "
            f"p={modulus_of(b)}"
        )
    if a.shape != b.shape:
        raise FieldMismatchError(
            f"Operands have different shapes: {a.shape} and {b.shape}"
        )


@dataclass
class FieldOpTally:
    """Logical field-operation counts, keyed by protocol phase and kind.

    Kinds are ``add`` (additions and subtractions), ``mul``, ``div`` and
    ``inv``. A vector operation of length ``D`` counts ``D`` operations.
    """

    counts: Counter = field(default_factory=Counter)

    def record(self, phase: str, kind: str, n: int) -> None:
        self.counts[phase, kind] += n

    def phase_total(self, phase: str) -> int:
        return sum(n for (p, _), n in self.counts.items() if p == phase)

    def kind_total(self, kind: str) -> int:
        return sum(n for (_, k), n in self.counts.items() if k == kind)

    def total(self, phases: tuple[str, ...] | None = None) -> int:
        return sum(
            n for (p, _), n in self.counts.items() if phases is None or p in phases
        )

    def phases(self) -> list[str]:
        return sorted({p for p, _ in self.counts})


_ACTIVE_TALLY: ContextVar[FieldOpTally | None] = ContextVar(
    "field_op_tally", default=None
)
_ACTIVE_PHASE: ContextVar[str] = ContextVar("field_op_phase", default="other")


@contextlib.contextmanager
def counting(tally: FieldOpTally | None = None) -> Iterator[FieldOpTally]:
    """Count field operations executed inside the context."""
    tally = FieldOpTally() if tally is None else tally
    token = _ACTIVE_TALLY.set(tally)
    try:
        yield tally
    finally:
        _ACTIVE_TALLY.reset(token)


@contextlib.contextmanager
def phase(name: str) -> Iterator[None]:
    """Attribute field operations inside the context to a protocol phase."""
    token = _ACTIVE_PHASE.set(name)
    try:
        yield
    finally:
        _ACTIVE_PHASE.reset(token)


@contextlib.contextmanager
def uncounted() -> Iterator[None]:
    """Suspend counting, for consistency checks that are not protocol work."""
    token = _ACTIVE_TALLY.set(None)
    try:
        yield
    finally:
        _ACTIVE_TALLY.reset(token)


def _record(kind: str, n: int) -> None:
    tally = _ACTIVE_TALLY.get()
    if tally is not None:
        tally.record(_ACTIVE_PHASE.get(), kind, n)


class OpCode(enum.Enum):
    """Element-wise field operation used by a chain layer."""

    ADD = "+"
    SUB = "-"
    MUL = "*"
    DIV = "/"

    @property
    def code(self) -> int:
        """Wire code, 0..3 for ``+ - * /``."""
        return _OP_ORDER.index(self)

    @classmethod
    def from_code(cls, code: int) -> "OpCode":
        try:
            return _OP_ORDER[code]
        except IndexError:
            raise ValueError(f"Unknown operation code {code}") from None

    @property
    def complement(self) -> "OpCode":
        return _COMPLEMENTS[self]

    @property
    def is_multiplicative(self) -> bool:
        return self in (OpCode.MUL, OpCode.DIV)


_OP_ORDER = (OpCode.ADD, OpCode.SUB, OpCode.MUL, OpCode.DIV)
_COMPLEMENTS = {
    OpCode.ADD: OpCode.SUB,
    OpCode.SUB: OpCode.ADD,
    OpCode.MUL: OpCode.DIV,
    OpCode.DIV: OpCode.MUL,
}
_UFUNCS = {
    OpCode.ADD: np.add,
    OpCode.SUB: np.subtract,
    OpCode.MUL: np.multiply,
    OpCode.DIV: np.divide,
}
_TALLY_KINDS = {
    OpCode.ADD: "add",
    OpCode.SUB: "add",
    OpCode.MUL: "mul",
    OpCode.DIV: "div",
}


def f_add(a: FieldElement, b: FieldElement) -> FieldElement:
    _check_compatible(a, b)
    _record("add", 1)
    return a + b


def f_sub(a: FieldElement, b: FieldElement) -> FieldElement:
    _check_compatible(a, b)
    _record("add", 1)
    return a - b


def f_mul(a: FieldElement, b: FieldElement) -> FieldElement:
    _check_compatible(a, b)
    _record("mul", 1)
    return a * b


def f_inv(a: FieldElement) -> FieldElement:
    """Multiplicative inverse, :math:`a \\cdot a^{-1} \\equiv 1 \\pmod p`."""
    if int(a) == 0:
        raise ZeroInverseError(f"0 has no inverse modulo {modulus_of(a)}")
    _record("inv", 1)
    return np.reciprocal(a)


def vec_apply(v: FieldVector, k: FieldVector, op: OpCode) -> FieldVector:
    """Apply ``op`` element-wise to ``v`` with key ``k``.

    ``/`` multiplies by the modular inverse of each key element.

    Parameters
    ----------
    v:
        Chain state or payload.
    k:
        Key vector with the same length and field as ``v``.
    op:
        Operation to apply.

    Returns
    -------
    :
        A new vector ``v op k``.
    """
    _check_compatible(v, k)
    if op is OpCode.DIV and np.count_nonzero(k) != k.size:
        raise ZeroInverseError("Division by a key vector with zero elements")
    _record(_TALLY_KINDS[op], v.size)
    return _UFUNCS[op](v, k)


def vec_scale(v: FieldVector, scalar: FieldElement) -> FieldVector:
    """Multiply every element of ``v`` by ``scalar``."""
    if type(v) is not type(scalar):
        raise FieldMismatchError("Scalar and vector live in different fields")
    _record("mul", v.size)
    return v * scalar


def vec_sum(v: FieldVector) -> FieldElement:
    """Sum of all elements of ``v`` in the field."""
    _record("add", v.size)
    return np.add.reduce(v)


def vec_total(vectors: list[FieldVector]) -> FieldVector:
    """Element-wise sum of vectors, accumulated from the zero vector."""
    first = vectors[0]
    total = type(first).Zeros(first.shape)
    for v in vectors:
        total = vec_apply(total, v, OpCode.ADD)
    return total


def encode_element(a: FieldElement) -> bytes:
    """Canonical 8-byte little-endian encoding."""
    return int(a).to_bytes(ELEMENT_BYTES, "little")


def encode_vector(v: FieldVector) -> bytes:
    """Length-prefixed concatenation of canonical element encodings."""
    body = v.view(np.ndarray).astype("<u8").tobytes()
    return struct.pack("<I", v.size) + body


def decode_vector(
    data: bytes, offset: int = 0, modulus: int = MERSENNE_61
) -> tuple[FieldVector, int]:
    """Inverse of :func:`encode_vector`, returns the vector and the next offset."""
    if len(data) < offset + LENGTH_PREFIX_BYTES:
        raise ValueError("Truncated vector: missing length prefix")
    (n,) = struct.unpack_from("<I", data, offset)
    offset += LENGTH_PREFIX_BYTES
    end = offset + n * ELEMENT_BYTES
    if end > len(data):
        raise ValueError(f"Truncated vector: need {end} bytes, have {len(data)}")
    raw = np.frombuffer(data[offset:end], dtype="<u8")
    if np.any(raw >= modulus):
        raise ValueError("Vector element is not a canonical representative")
    return vector(raw.astype(np.int64), modulus), end


def encoded_vector_size(dim: int) -> int:
    return LENGTH_PREFIX_BYTES + ELEMENT_BYTES * dim


class SeededGenerator:
    """Deterministic counter-mode generator built from SHA3-256.

    Block ``c`` is ``SHA3-256(key || c)`` with ``c`` as 8 little-endian bytes.
    The byte stream, and therefore every draw, depends only on the seed and
    the label, so sequences are identical across runs and platforms.
    """

    def __init__(self, seed: int | bytes, label: str = "") -> None:
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "little", signed=True)
        self._key = hashlib.sha3_256(
            b"cppdd-generator" + seed + label.encode()
        ).digest()
        self._counter = 0
        self._buffer = b""

    def spawn(self, label: str) -> "SeededGenerator":
        """Independent child generator, unaffected by draws from this one."""
        return SeededGenerator(self._key, label)

    def random_bytes(self, n: int) -> bytes:
        blocks = [self._buffer]
        available = len(self._buffer)
        while available < n:
            blocks.append(
                hashlib.sha3_256(
                    self._key + self._counter.to_bytes(8, "little")
                ).digest()
            )
            self._counter += 1
            available += 32
        stream = b"".join(blocks)
        self._buffer = stream[n:]
        return stream[:n]

    def draws(self, n: int) -> np.ndarray:
        """``n`` uniform 64-bit unsigned integers."""
        return np.frombuffer(self.random_bytes(8 * n), dtype="<u8")

    def next_u64(self) -> int:
        return int(self.draws(1)[0])


def _accepted(raw: np.ndarray, modulus: int, nonzero: bool) -> np.ndarray:
    candidates = raw >> np.uint64(64 - modulus.bit_length())
    keep = candidates < np.uint64(modulus)
    if nonzero:
        keep &= candidates != 0
    return candidates[keep]


def sample_element(
    rng: SeededGenerator, nonzero: bool = False, modulus: int = MERSENNE_61
) -> FieldElement:
    """Uniform element of ``[0, p)``, or ``[1, p)`` if ``nonzero``.

    Rejection sampling on the top ``bit_length(p)`` bits of 64-bit draws.
    """
    while True:
        accepted = _accepted(rng.draws(1), modulus, nonzero)
        if accepted.size:
            return element(int(accepted[0]), modulus)


def sample_vector(
    rng: SeededGenerator, dim: int, nonzero: bool = False, modulus: int = MERSENNE_61
) -> FieldVector:
    """``dim`` independent draws with the semantics of :func:`sample_element`.

    Draws are consumed in order, so the result equals ``dim`` successive calls
    of :func:`sample_element` on the same generator.
    """
    pieces = []
    needed = dim
    while needed > 0:
        accepted = _accepted(rng.draws(needed), modulus, nonzero)
        pieces.append(accepted[:needed])
        needed -= min(needed, accepted.size)
    return vector(np.concatenate(pieces).astype(np.int64), modulus)


@dataclass(frozen=True)
class FixedPointCodec:
    """Maps reals in ``[0, 1]`` to field elements with step ``2**-scale_bits``."""

    scale_bits: int = 20
    modulus: int = MERSENNE_61

    def __post_init__(self) -> None:
        if self.scale_bits < 0 or 2**self.scale_bits >= self.modulus:
            raise ValueError(
                f"scale_bits={self.scale_bits} requires 2^s < p={self.modulus}"
            )

    @property
    def scale(self) -> int:
        return 2**self.scale_bits

    def encode(self, values: ArrayLike) -> FieldVector:
        """Encode an array of any shape, flattened element-wise."""
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise CodecRangeError("Payload values must lie in [0, 1]")
        return vector(np.rint(arr * self.scale).astype(np.int64), self.modulus)

    def decode(self, v: FieldVector) -> np.ndarray:
        return v.view(np.ndarray).astype(np.float64) / self.scale


def encode_real(x: float, codec: FixedPointCodec) -> FieldElement:
    return element(int(codec.encode([x])[0]), codec.modulus)


def decode_real(a: FieldElement, codec: FixedPointCodec) -> float:
    return int(a) / codec.scale
