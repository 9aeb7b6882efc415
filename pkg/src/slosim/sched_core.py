"""Shared scheduler substrate: queue entries and remaining-time accounting.

Every schedulable unit (fresh prompt, partially processed prompt, returned
or preempted decode task) is a QueueEntry. Priority is "remaining time":
how long the entry can still wait before its deadline becomes unmeetable
given its estimated residual execution time. Offline (JCT-SLO) entries get
a per-iteration waiting allowance with over/under-use carried forward as
debt so the whole-job waiting budget is conserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .workload import RequestSpec, SLOKind

DEFAULT_URGENCY_SLACK = 0.1
CHUNK_LEN_EMA_ALPHA = 0.1


class Phase(Enum):
    PROMPT_PENDING = "prompt_pending"
    TG_READY = "tg_ready"
    PREEMPTED = "preempted"


@dataclass
class ChunkStats:
    """Running statistics the remaining-time estimates depend on.

    avg_chunk_len: EMA over emitted prompt-chunk lengths, initialized to the
    pivot forward size. t_max: worst-case batch time (pivot time plus fixed
    overhead; budgets never exceed the pivot). preempt_prob / preempt_max_s
    are updated from observed engine events.
    """

    avg_chunk_len: float
    t_max: float
    preempt_prob: float = 0.0
    preempt_max_s: float = 0.0
    _tg_steps: int = 0
    _preemptions: int = 0

    def observe_chunk(self, chunk_len: int) -> None:
        self.avg_chunk_len += CHUNK_LEN_EMA_ALPHA * (chunk_len - self.avg_chunk_len)

    def observe_tg_step(self) -> None:
        self._tg_steps += 1
        if self._tg_steps:
            self.preempt_prob = self._preemptions / self._tg_steps

    def observe_preemption(self) -> None:
        self._preemptions += 1
        if self._tg_steps:
            self.preempt_prob = min(1.0, self._preemptions / self._tg_steps)

    def observe_preemption_duration(self, duration: float) -> None:
        self.preempt_max_s = max(self.preempt_max_s, duration)


@dataclass
class QueueEntry:
    """One schedulable unit in the waiting queue."""

    request: RequestSpec
    phase: Phase
    remaining_prompt_tokens: int
    seq_len: int
    enqueue_time: float
    is_long: bool
    seq: int = 0  # enqueue order stamp; FIFO tie-break on equal remaining time
    iter_allowance: float = 0.0  # offline only
    debt: float = 0.0  # offline only

    @property
    def request_id(self) -> int:
        return self.request.id

    @property
    def is_offline(self) -> bool:
        return self.request.slo.kind is SLOKind.OFFLINE

    def effective_allowance(self) -> float:
        return self.iter_allowance - self.debt


def remaining_chunks(remaining_tokens: int, stats: ChunkStats) -> int:
    """Estimated chunks left to finish prompt processing; 1 for a decode task."""
    if remaining_tokens <= 0:
        return 1
    return math.ceil(remaining_tokens / stats.avg_chunk_len)


def iteration_slo(entry: QueueEntry) -> float:
    """Per-iteration deadline quantity used for ordering and budgeting."""
    slo = entry.request.slo
    if slo.kind is SLOKind.OFFLINE:
        return entry.effective_allowance()
    if entry.phase is Phase.PROMPT_PENDING:
        return slo.ttft_slo
    return slo.tbt_slo


def remaining_time(entry: QueueEntry, now: float, stats: ChunkStats) -> float:
    """Time the entry can still afford to wait; negative when already late."""
    waited = now - entry.enqueue_time
    n_chunks = remaining_chunks(
        entry.remaining_prompt_tokens if entry.phase is Phase.PROMPT_PENDING else 0,
        stats)
    execution = n_chunks * stats.t_max
    return iteration_slo(entry) - waited - execution


def jct_initial_estimate(spec: RequestSpec, stats: ChunkStats) -> float:
    """Execution-time estimate for a whole offline job at admission."""
    n_chunks = remaining_chunks(spec.prompt_len, stats)
    per_token = stats.t_max + stats.preempt_max_s * stats.preempt_prob
    return n_chunks * stats.t_max + spec.predicted_output_len * per_token


def jct_allowance(spec: RequestSpec, execution_estimate: float, stats: ChunkStats) -> float:
    """Waiting time an offline job can spend per iteration.

    May be negative for an infeasible deadline; kept as-is so late jobs sort
    first.
    """
    n_chunks = remaining_chunks(spec.prompt_len, stats)
    return (spec.slo.jct_slo - execution_estimate) / (n_chunks + spec.predicted_output_len)


def propagate_debt(entry: QueueEntry, actual_wait: float) -> None:
    """Carry over/under-used waiting time into the next iteration's allowance."""
    entry.debt += actual_wait - entry.iter_allowance


def order_queue(queue: list[QueueEntry], now: float, stats: ChunkStats) -> list[QueueEntry]:
    """Ascending remaining time; FIFO by enqueue stamp on ties."""
    return sorted(queue, key=lambda e: (remaining_time(e, now, stats), e.seq))


def is_urgent(t_r: float, stats: ChunkStats,
              urgency_slack: float = DEFAULT_URGENCY_SLACK) -> bool:
    """Entry must run in the next iteration to have a chance at its deadline."""
    return t_r <= stats.t_max * (1.0 + urgency_slack)
