# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
import logging
import uuid
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike

from ..protocol.core import CciMatrix, CciRecord
from ..protocol.field import CodecRangeError, FixedPointCodec
from ..protocol.types import SetupSeed
from .types import SYNTHETIC, Dimension, NClients, PayloadSource

logger = logging.getLogger(__name__)

_CLIENT_NAMESPACE = uuid.UUID("5f0c6f2e-2b59-4d8e-9a57-0d8f0c6c1a3e")


class IngestError(ValueError):
    """A payload row is malformed or out of range."""


def client_uuid(index: int) -> uuid.UUID:
    """Stable uuid of the client holding the ``index``-th payload."""
    return uuid.uuid5(_CLIENT_NAMESPACE, f"client-{index}")


def read_payload_csv(path: str | Path, dim: int | None = None) -> np.ndarray:
    """Read one payload per row, values in ``[0, 1]``, no header.

    Raises
    ------
    IngestError
        Naming the 1-based row of the first malformed or out-of-range value.
    """
    try:
        table = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise IngestError(f"Malformed payload file {path}: {err}") from err
    values = table.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    for row, (raw, parsed) in enumerate(
        zip(table.to_numpy(), values, strict=True), start=1
    ):
        width = int(np.count_nonzero(raw != ""))
        if dim is not None and width != dim:
            raise IngestError(f"Row {row} has {width} values, expected {dim}")
        if np.isnan(parsed[:width]).any():
            raise IngestError(f"Row {row} contains a non-numeric value")
        if not np.all((parsed[:width] >= 0.0) & (parsed[:width] <= 1.0)):
            raise IngestError(f"Row {row} has a value outside [0, 1]")
    logger.info("Read %d payload rows from %s", len(values), path)
    return values


def synthetic_payloads(n_clients: int, dim: int, seed: int) -> np.ndarray:
    """Uniform ``[0, 1]`` payloads, identical for identical arguments."""
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n_clients, dim))


def cci_from_arrays(
    payloads: Sequence[ArrayLike],
    codec: FixedPointCodec,
    uuids: Sequence[uuid.UUID] | None = None,
) -> CciMatrix:
    """Encode one payload per client. Scalars and matrices are flattened."""
    if uuids is None:
        uuids = [client_uuid(i) for i in range(len(payloads))]
    records = []
    for row, (u, payload) in enumerate(zip(uuids, payloads, strict=True), start=1):
        try:
            records.append(CciRecord(uuid=u, payload=codec.encode(payload)))
        except CodecRangeError as err:
            raise IngestError(f"Row {row}: {err}") from err
    return CciMatrix(tuple(records))


def payload_values(
    source: str | Path, n_clients: int, dim: int, seed: int
) -> np.ndarray:
    """Real payloads of ``n_clients`` clients, one row each."""
    if n_clients < 1 or dim < 1:
        raise IngestError(f"Need N >= 1 and D >= 1, got N={n_clients}, D={dim}")
    if str(source) == SYNTHETIC:
        return synthetic_payloads(n_clients, dim, seed)
    values = read_payload_csv(source, dim)
    if len(values) < n_clients:
        raise IngestError(
            f"{source} has {len(values)} rows, {n_clients} clients need one each"
        )
    return values[:n_clients]


def load_payloads(
    source: PayloadSource,
    n_clients: NClients,
    dim: Dimension,
    codec: FixedPointCodec,
    seed: SetupSeed,
) -> CciMatrix:
    """Encoded payloads of ``n_clients`` clients from a CSV file or synthetic."""
    return cci_from_arrays(list(payload_values(source, n_clients, dim, seed)), codec)


providers = (load_payloads,)
