"""Paged KV-cache block manager.

Blocks hold ``block_size`` tokens each. Allocation is tracked per request;
a request's allocated capacity is always ``blocks_held * block_size`` and
covers ``tokens_stored`` of it. Preemption swaps a request's tokens out,
freeing its blocks until re-admission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AllocationError, StateError, ValidationError

DEFAULT_BLOCK_SIZE = 32


@dataclass(frozen=True)
class KvcDemand:
    """Blocks a request needs before it can run its next step."""

    tokens_needed: int
    blocks_needed: int


def blocks_for(tokens: int, block_size: int) -> int:
    return math.ceil(tokens / block_size)


class BlockPool:
    """Single-writer paged allocator; the engine serializes all mutations."""

    def __init__(self, total_blocks: int, block_size: int = DEFAULT_BLOCK_SIZE):
        if total_blocks < 1:
            raise ValidationError("total_blocks must be >= 1")
        if block_size < 1:
            raise ValidationError("block_size must be >= 1")
        self.total_blocks = total_blocks
        self.block_size = block_size
        self.free_blocks = total_blocks
        # request id -> [blocks_held, tokens_stored]
        self._held: dict[int, list[int]] = {}
        # request id -> token count saved at swap-out
        self.swapped_out: dict[int, int] = {}

    @classmethod
    def from_capacity_tokens(cls, capacity_tokens: int,
                             block_size: int = DEFAULT_BLOCK_SIZE) -> "BlockPool":
        return cls(total_blocks=capacity_tokens // block_size, block_size=block_size)

    # -- read-only views -------------------------------------------------

    def is_resident(self, request_id: int) -> bool:
        return request_id in self._held

    def blocks_held(self, request_id: int) -> int:
        return self._held[request_id][0] if request_id in self._held else 0

    def tokens_stored(self, request_id: int) -> int:
        return self._held[request_id][1] if request_id in self._held else 0

    def headroom(self, request_id: int) -> int:
        """Tokens that fit in the request's already-held blocks."""
        if request_id not in self._held:
            return 0
        blocks, tokens = self._held[request_id]
        return blocks * self.block_size - tokens

    @property
    def allocated_blocks(self) -> int:
        return self.total_blocks - self.free_blocks

    @property
    def allocated_tokens(self) -> int:
        """Allocated space in tokens, at block granularity."""
        return self.allocated_blocks * self.block_size

    @property
    def free_tokens(self) -> int:
        return self.free_blocks * self.block_size

    def resident_ids(self):
        return self._held.keys()

    # -- demand rules ----------------------------------------------------

    def demand_prompt_chunk(self, request_id: int, chunk_len: int) -> KvcDemand:
        """Blocks needed to store ``chunk_len`` new prompt tokens.

        A first chunk (or whole prompt) rounds the chunk up to blocks; a
        non-first chunk spills into existing headroom before new blocks.
        """
        if chunk_len < 1:
            raise ValidationError("chunk_len must be >= 1")
        if request_id in self._held:
            overflow = max(0, chunk_len - self.headroom(request_id))
            return KvcDemand(tokens_needed=chunk_len,
                             blocks_needed=blocks_for(overflow, self.block_size))
        return KvcDemand(tokens_needed=chunk_len,
                         blocks_needed=blocks_for(chunk_len, self.block_size))

    def demand_tg(self, request_id: int) -> KvcDemand:
        """One generated token: free if headroom exists, else one block."""
        if request_id not in self._held:
            raise StateError(f"request {request_id} is not resident")
        need = 0 if self.headroom(request_id) > 0 else 1
        return KvcDemand(tokens_needed=1, blocks_needed=need)

    def demand_readmit(self, request_id: int) -> KvcDemand:
        """Blocks needed to restore a swapped-out request's saved tokens."""
        if request_id not in self.swapped_out:
            raise StateError(f"request {request_id} is not swapped out")
        saved = self.swapped_out[request_id]
        return KvcDemand(tokens_needed=saved,
                         blocks_needed=blocks_for(saved, self.block_size))

    # -- mutations -------------------------------------------------------

    def allocate(self, request_id: int, demand: KvcDemand) -> None:
        """Apply a previously computed demand; caller guarantees it fits."""
        if demand.blocks_needed > self.free_blocks:
            raise AllocationError(
                f"request {request_id} needs {demand.blocks_needed} blocks, "
                f"only {self.free_blocks} free")
        if request_id in self.swapped_out:
            if self.swapped_out[request_id] != demand.tokens_needed:
                raise StateError(f"request {request_id}: readmit token count mismatch")
            del self.swapped_out[request_id]
            self._held[request_id] = [demand.blocks_needed, demand.tokens_needed]
        elif request_id in self._held:
            slot = self._held[request_id]
            slot[0] += demand.blocks_needed
            slot[1] += demand.tokens_needed
            if slot[1] > slot[0] * self.block_size:
                raise AllocationError(
                    f"request {request_id}: demand under-provisioned "
                    f"({slot[1]} tokens > {slot[0]} blocks)")
        else:
            if demand.tokens_needed > demand.blocks_needed * self.block_size:
                raise AllocationError(
                    f"request {request_id}: demand under-provisioned for first allocation")
            self._held[request_id] = [demand.blocks_needed, demand.tokens_needed]
        self.free_blocks -= demand.blocks_needed

    def release(self, request_id: int) -> None:
        """Return all of a request's blocks to the pool."""
        if request_id not in self._held:
            raise StateError(f"request {request_id} is not resident")
        blocks, _ = self._held.pop(request_id)
        self.free_blocks += blocks

    def preempt(self, request_id: int) -> int:
        """Swap a resident request out; returns its token count for latency accounting."""
        if request_id not in self._held:
            raise StateError(f"request {request_id} is not resident")
        blocks, tokens = self._held.pop(request_id)
        self.free_blocks += blocks
        self.swapped_out[request_id] = tokens
        return tokens

    def check_conservation(self) -> None:
        held = sum(slot[0] for slot in self._held.values())
        if self.free_blocks + held != self.total_blocks:
            raise StateError(
                f"block conservation violated: free={self.free_blocks} "
                f"held={held} total={self.total_blocks}")
        if self.free_blocks < 0:
            raise StateError("negative free blocks")
        for rid, (blocks, tokens) in self._held.items():
            if blocks != blocks_for(tokens, self.block_size) and tokens > 0:
                raise StateError(f"request {rid}: {blocks} blocks for {tokens} tokens")


def orca_reservation(batch_size: int, max_seq_len: int) -> int:
    """Tokens a max-length reservation scheme allocates for a whole batch."""
    if batch_size < 1 or max_seq_len < 1:
        raise ValidationError("batch_size and max_seq_len must be >= 1")
    return batch_size * max_seq_len
