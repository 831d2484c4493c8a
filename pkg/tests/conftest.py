# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
from collections.abc import Callable, Mapping

import numpy as np
import pytest

from cppdd.harness import cci_from_arrays
from cppdd.protocol import (
    CciMatrix,
    FixedPointCodec,
    SetupOutput,
    SetupSeed,
    SetupWorkflow,
)


def random_cci(n_clients: int, dim: int, seed: int = 0) -> CciMatrix:
    payloads = np.random.default_rng(seed).uniform(0.0, 1.0, size=(n_clients, dim))
    return cci_from_arrays(list(payloads), FixedPointCodec())


@pytest.fixture
def make_setup() -> Callable[..., SetupOutput]:
    """Run the coordinator on random payloads, optionally overriding params."""

    def make(
        n_clients: int,
        dim: int,
        seed: int = 0,
        params: Mapping[type, object] | None = None,
    ) -> SetupOutput:
        wf = SetupWorkflow()
        wf[CciMatrix] = random_cci(n_clients, dim, seed)
        wf[SetupSeed] = seed
        for key, value in (params or {}).items():
            wf[key] = value
        return wf.compute(SetupOutput)

    return make
