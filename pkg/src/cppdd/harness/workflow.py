# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
from collections.abc import Sequence

import pandas as pd
import sciline
from sciline.scheduler import NaiveScheduler

from ..protocol import default_parameters as protocol_parameters
from ..protocol import providers as protocol_providers
from ..protocol.coordinator import SetupOutput
from ..protocol.types import SetupSeed
from ..simnet import FaultPlan, RunTranscript, SimClock, run
from . import load
from .types import SYNTHETIC, Dimension, NClients, PayloadSource, TrialTranscripts


def run_protocol(setup: SetupOutput, plan: FaultPlan, clock: SimClock) -> RunTranscript:
    return run(setup, plan, clock)


def _collect(*transcripts: RunTranscript) -> TrialTranscripts:
    return TrialTranscripts(transcripts)


def with_seeds(workflow: sciline.Pipeline, seeds: Sequence[int]) -> sciline.Pipeline:
    '''Repeat the run once per setup seed.

    Arguments
    ----------
    workflow:
        the workflow to copy and map over the seeds
    seeds:
        one setup seed per trial

    Returns
    ---------
        A copy of the workflow computing :class:`TrialTranscripts`, in seed order.
    '''
    df = pd.DataFrame({SetupSeed: list(seeds)}).rename_axis("trial")
    wf = workflow.copy()
    mapped = wf.map(df)
    wf[TrialTranscripts] = mapped[RunTranscript].reduce(index="trial", func=_collect)
    return wf


def compute(workflow: sciline.Pipeline, key: type):
    """Compute in the calling thread, so field-operation counting sees the work."""
    return workflow.get(key, scheduler=NaiveScheduler()).compute()


providers = (*protocol_providers, *load.providers, run_protocol)


def default_parameters() -> dict:
    return {
        **protocol_parameters(),
        NClients: 10,
        Dimension: 784,
        PayloadSource: SYNTHETIC,
        FaultPlan: FaultPlan.honest(),
        SimClock: SimClock(),
    }


def HarnessWorkflow() -> sciline.Pipeline:
    """
    Workflow from payload source to run transcript, with default parameters.
    """
    return sciline.Pipeline(providers=providers, params=default_parameters())
