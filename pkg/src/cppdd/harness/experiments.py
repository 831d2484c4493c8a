# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Experiment drivers. Each returns ``pandas`` tables with a fixed column schema."""

import dataclasses
import logging
from collections.abc import Callable, Iterable

import dask
import numpy as np
import pandas as pd
import sciline

from ..protocol import wire
from ..protocol.coordinator import SetupOutput
from ..protocol.core import CciMatrix, PriorityMap, step_digest
from ..protocol.field import (
    FieldOpTally,
    FixedPointCodec,
    SeededGenerator,
    counting,
    vec_total,
)
from ..protocol.types import (
    AuditMode,
    BroadcastLO,
    HashFullVector,
    Modulus,
    RequestedPriorities,
    RetryBound,
    ScaleBits,
    SetupSeed,
)
from ..protocol.wire import MessageKind
from ..simnet import Accept, FaultPlan, RunTranscript, TamperState, run
from . import tools
from .config import ExperimentConfig
from .load import payload_values
from .types import Dimension, NClients, PayloadSource, TrialTranscripts
from .workflow import HarnessWorkflow, compute, with_seeds

logger = logging.getLogger(__name__)

CORE_PHASES = ("obfuscation", "aggregation", "encryption", "decryption", "deobfuscation")
"""Phases compared against the ``4 N D`` reference. Digests and board checks
are reported separately."""

COLUMNS = {
    "correctness": [
        "n_clients",
        "trial",
        "chain_equals_sum",
        "step_checksums_match",
        "data_checksum_ones",
        "payloads_recovered",
        "passed",
    ],
    "detection": [
        "n_clients",
        "trial",
        "control",
        "tamper_position",
        "detected",
        "detector",
        "expected_detector",
        "reason",
    ],
    "scalability": [
        "n_clients",
        "total_ms",
        "per_client_ms",
        "bytes_per_link",
        "rounds",
    ],
    "accounting": [
        "n_clients",
        "dim",
        *CORE_PHASES,
        "checksum",
        "verification",
        "total",
        "reference_4nd",
        "ratio",
        "bytes_per_link",
        "storage_bytes_per_client",
    ],
    "recovery": ["client", "max_abs_error", "mean_abs_error"],
    "recovery_values": ["client", "index", "original", "recovered"],
}


def trial_seed(seed: int, *labels: object) -> int:
    """Setup seed of one trial, derived from the configured seed."""
    label = "/".join(str(x) for x in labels)
    return SeededGenerator(seed, label).next_u64() >> 1


def configured_workflow(cfg: ExperimentConfig, n_clients: int) -> sciline.Pipeline:
    wf = HarnessWorkflow()
    wf[NClients] = n_clients
    wf[Dimension] = cfg.dim
    wf[PayloadSource] = cfg.payloads
    wf[ScaleBits] = cfg.scale_bits
    wf[RetryBound] = cfg.tau
    wf[BroadcastLO] = cfg.broadcast_lo
    wf[HashFullVector] = cfg.hash_full_vector
    return wf


def _gather(cfg: ExperimentConfig, func: Callable, args: Iterable[tuple]) -> list:
    tasks = [dask.delayed(func)(cfg, *a) for a in args]
    if cfg.workers == 1:
        return list(dask.compute(*tasks, scheduler="synchronous"))
    return list(
        dask.compute(*tasks, scheduler="processes", num_workers=cfg.workers)
    )


def _frame(name: str, rows: list[dict], by: list[str]) -> pd.DataFrame:
    df = pd.DataFrame(rows, columns=COLUMNS[name])
    return df.sort_values(by, kind="stable").reset_index(drop=True)


def _correctness_trial(cfg: ExperimentConfig, n: int, trial: int) -> dict:
    wf = configured_workflow(cfg, n)
    wf[SetupSeed] = trial_seed(cfg.seed, "correctness", n, trial)
    wf[AuditMode] = True
    cci = compute(wf, CciMatrix)
    setup = compute(wf, SetupOutput)
    transcript = run(setup)
    packet = setup.packet
    o_sum = vec_total([e.obfuscated for e in setup.envelopes])
    released = transcript.released
    chain = bool(
        np.array_equal(setup.audit[n], o_sum)
        and released is not None
        and np.array_equal(released, o_sum)
    )
    checksums = all(
        step_digest(setup.audit[i], packet.params.hash_full_vector) == packet.sigma(i)
        for i in range(1, n + 1)
    )
    accept = next(
        (r.entry for r in transcript.board if isinstance(r.entry, Accept)), None
    )
    ones = accept is not None and accept.data_checksum.is_exact()
    recovered = transcript.succeeded and all(
        np.array_equal(
            transcript.recovered[i],
            cci.payload_of(packet.priority_map.uuid_for(i)),
        )
        for i in range(1, n + 1)
    )
    return {
        "n_clients": n,
        "trial": trial,
        "chain_equals_sum": chain,
        "step_checksums_match": checksums,
        "data_checksum_ones": ones,
        "payloads_recovered": recovered,
        "passed": chain and checksums and ones and recovered,
    }


def run_correctness_experiment(cfg: ExperimentConfig) -> pd.DataFrame:
    """Check chain output, step checksums, data checksum and recovery per trial."""
    args = [(n, t) for n in cfg.n_values for t in range(cfg.trials)]
    rows = _gather(cfg, _correctness_trial, args)
    return _frame("correctness", rows, ["n_clients", "trial"])


def _detection_trial(cfg: ExperimentConfig, n: int, trial: int, control: bool) -> dict:
    wf = configured_workflow(cfg, n)
    wf[SetupSeed] = trial_seed(cfg.seed, "detection", n, trial, control)
    position = 0
    if not control:
        plan = FaultPlan.random_tamper(
            n, cfg.dim, compute(wf, Modulus), trial_seed(cfg.seed, "tamper", n, trial)
        )
        (position,) = plan.behaviors
        wf[FaultPlan] = plan
    transcript = compute(wf, RunTranscript)
    notice = transcript.notice
    return {
        "n_clients": n,
        "trial": trial,
        "control": control,
        "tamper_position": position,
        "detected": not transcript.succeeded,
        "detector": "" if notice is None else notice.issuer_name,
        "expected_detector": expected_detector(position, n) if position else "",
        "reason": "" if notice is None else notice.reason.value,
    }


def expected_detector(position: int, n_clients: int) -> str:
    """Issuer expected to catch a lone tamperer at ``position``."""
    return "board" if position == n_clients else f"client-{position + 1}"


def run_detection_experiment(cfg: ExperimentConfig) -> pd.DataFrame:
    """Single sum-changing tamper at a uniform position, plus honest controls."""
    args = [
        (n, t, control)
        for n in cfg.n_values
        for t in range(cfg.trials)
        for control in (False, True)
    ]
    rows = _gather(cfg, _detection_trial, args)
    return _frame("detection", rows, ["n_clients", "control", "trial"])


def _relay_link_bytes(transcript: RunTranscript, dim: int) -> int:
    sizes = transcript.frame_sizes(MessageKind.RELAY_STATE)
    return max(sizes) if sizes else wire.relay_frame_size(dim)


def run_scalability_experiment(cfg: ExperimentConfig) -> pd.DataFrame:
    """Median wall-clock time of honest runs for every client count.

    Trials of one client count run in the calling thread, so they do not
    compete for the interpreter while being timed.
    """
    rows = []
    for n in cfg.n_values:
        wf = with_seeds(
            configured_workflow(cfg, n),
            [trial_seed(cfg.seed, "scalability", n, t) for t in range(cfg.trials)],
        )
        transcripts: TrialTranscripts = compute(wf, TrialTranscripts)
        totals = [t.counters.wall_seconds for t in transcripts]
        per_client = [
            float(np.median(list(t.counters.client_seconds.values())))
            for t in transcripts
        ]
        rows.append(
            {
                "n_clients": n,
                "total_ms": 1e3 * float(np.median(totals)),
                "per_client_ms": 1e3 * float(np.median(per_client)),
                "bytes_per_link": _relay_link_bytes(transcripts[0], cfg.dim),
                "rounds": max(t.rounds for t in transcripts),
            }
        )
        logger.info("N=%d: %.2f ms median total", n, rows[-1]["total_ms"])
    return _frame("scalability", rows, ["n_clients"])


def _accounting_row(cfg: ExperimentConfig, n: int) -> dict:
    wf = configured_workflow(cfg, n)
    wf[SetupSeed] = trial_seed(cfg.seed, "accounting", n)
    with counting() as tally:
        setup = compute(wf, SetupOutput)
    transcript = run(setup)
    merged = FieldOpTally(tally.counts + transcript.counters.tally.counts)
    total = merged.total(CORE_PHASES)
    reference = 4 * n * cfg.dim
    return {
        "n_clients": n,
        "dim": cfg.dim,
        **{p: merged.phase_total(p) for p in CORE_PHASES},
        "checksum": merged.phase_total("checksum"),
        "verification": merged.phase_total("verification"),
        "total": total,
        "reference_4nd": reference,
        "ratio": total / reference,
        "bytes_per_link": _relay_link_bytes(transcript, cfg.dim),
        "storage_bytes_per_client": max(transcript.storage.values()),
    }


def run_accounting_experiment(cfg: ExperimentConfig) -> pd.DataFrame:
    """Logical field operations per phase against the ``4 N D`` reference."""
    rows = _gather(cfg, _accounting_row, [(n,) for n in cfg.n_values])
    return _frame("accounting", rows, ["n_clients"])


def run_recovery_experiment(
    cfg: ExperimentConfig,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Reconstruction error of every client, and the values side by side.

    An aborted run yields empty tables.
    """
    n = cfg.n_clients
    seed = trial_seed(cfg.seed, "recovery", n)
    wf = configured_workflow(cfg, n)
    wf[SetupSeed] = seed
    transcript = compute(wf, RunTranscript)
    summary, values = [], []
    if transcript.succeeded:
        originals = payload_values(cfg.payloads, n, cfg.dim, seed)
        codec = FixedPointCodec(scale_bits=cfg.scale_bits)
        # identity priorities: client i holds row i - 1
        for i, recovered in sorted(transcript.recovered.items()):
            decoded = codec.decode(recovered)
            error = np.abs(decoded - originals[i - 1])
            summary.append(
                {
                    "client": i,
                    "max_abs_error": float(error.max()),
                    "mean_abs_error": float(error.mean()),
                }
            )
            values.extend(
                {"client": i, "index": d, "original": o, "recovered": r}
                for d, (o, r) in enumerate(zip(originals[i - 1], decoded, strict=True))
            )
    return (
        _frame("recovery", summary, ["client"]),
        _frame("recovery_values", values, ["client", "index"]),
    )


def _without(plan: FaultPlan, excluded: int) -> FaultPlan:
    """Drop one client and move the behaviors of later clients up one priority."""
    shifted = {}
    for p, behavior in plan.behaviors.items():
        if p == excluded:
            continue
        if isinstance(behavior, TamperState):
            behavior = dataclasses.replace(behavior, target_step=None)
        shifted[p if p < excluded else p - 1] = behavior
    return FaultPlan(shifted, seed=plan.seed)


def run_with_restart(
    workflow: sciline.Pipeline, plan: FaultPlan, max_restarts: int = 3
) -> list[RunTranscript]:
    """Run, and after an abort that names a suspect rerun without that client.

    Every restart repeats the complete setup with a freshly derived seed. The
    remaining clients keep their relative order, and the behaviors in ``plan``
    follow their clients to the new priorities.

    Returns
    -------
    :
        The transcripts of all attempts, the last one successful unless the
        restart budget ran out or no suspect could be isolated.
    """
    wf = workflow.copy()
    wf[FaultPlan] = plan
    cci = compute(wf, CciMatrix)
    order = compute(wf, PriorityMap).order
    base_seed = compute(wf, SetupSeed)
    transcripts = []
    for attempt in range(max_restarts + 1):
        transcript = compute(wf, RunTranscript)
        transcripts.append(transcript)
        suspect = None if transcript.notice is None else transcript.notice.suspect
        if transcript.succeeded or suspect is None or len(order) == 1:
            break
        logger.warning("Restarting without client %d", suspect)
        order = order[: suspect - 1] + order[suspect:]
        plan = _without(plan, suspect)
        wf[CciMatrix] = CciMatrix(
            tuple(next(r for r in cci.records if r.uuid == u) for u in order)
        )
        wf[RequestedPriorities] = ()
        wf[SetupSeed] = trial_seed(base_seed, "restart", attempt + 1)
        wf[FaultPlan] = plan
    return transcripts


def check_results(cfg: ExperimentConfig, tables: dict[str, pd.DataFrame]) -> list[str]:
    """Assertions of an experiment. Returns one message per violation."""
    failures = []
    match cfg.experiment:
        case "correctness":
            df = tables["correctness"]
            for _, row in df[~df["passed"]].iterrows():
                failures.append(
                    f"Trial {row['trial']} with N={row['n_clients']} failed a "
                    "correctness clause"
                )
        case "detection":
            df = tables["detection"]
            tampered, honest = df[~df["control"]], df[df["control"]]
            if not tampered["detected"].all():
                failures.append(f"{(~tampered['detected']).sum()} tampers undetected")
            if honest["detected"].any():
                failures.append(f"{honest['detected'].sum()} honest runs aborted")
            misplaced = tampered["detector"] != tampered["expected_detector"]
            if misplaced.any():
                failures.append(f"{misplaced.sum()} tampers caught by the wrong party")
        case "scalability":
            df = tables["scalability"]
            if len(df) >= 3:
                r2 = tools.linear_r2(df["n_clients"], df["total_ms"])
                if r2 < 0.98:
                    failures.append(f"Total time is not linear in N: R^2 = {r2:.4f}")
            if len(df) >= 2 and tools.spread(df["per_client_ms"]) >= 2.0:
                failures.append("Per-client step time varies by 2x or more")
            if df["bytes_per_link"].nunique() > 1:
                failures.append("Relay frame size depends on N")
        case "accounting":
            df = tables["accounting"]
            if (df["obfuscation"] != 2 * df["n_clients"] * df["dim"]).any():
                failures.append("Obfuscation does not cost exactly 2 N D operations")
            if not df["ratio"].between(1.0, 2.0).all():
                failures.append("Field-operation total outside [1, 2] x 4 N D")
        case "recovery":
            df = tables["recovery"]
            bound = 2.0 ** -cfg.scale_bits
            if df.empty:
                failures.append("Run aborted, nothing recovered")
            elif (df["max_abs_error"] > bound).any():
                failures.append(f"Reconstruction error above {bound}")
    return failures


def run_experiment(cfg: ExperimentConfig) -> dict[str, pd.DataFrame]:
    """Run the configured experiment. Keys name the CSV files to write."""
    logger.info("Running %s experiment: %s", cfg.experiment, dataclasses.asdict(cfg))
    match cfg.experiment:
        case "correctness":
            return {"correctness": run_correctness_experiment(cfg)}
        case "detection":
            return {"detection": run_detection_experiment(cfg)}
        case "scalability":
            return {"scalability": run_scalability_experiment(cfg)}
        case "accounting":
            return {"accounting": run_accounting_experiment(cfg)}
        case "recovery":
            summary, values = run_recovery_experiment(cfg)
            return {"recovery": summary, "recovery_values": values}
    raise ValueError(f"Unknown experiment {cfg.experiment!r}")
