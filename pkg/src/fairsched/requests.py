"""Core domain vocabulary: tokens, requests, clients, system parameters.

Token ids are abstract integers; prefix sharing is purely structural
(identical leading ids).  Requests deliberately do not carry their true
output length: the generator keeps it in a side table that only the worker
stepping code reads, so schedulers are output-length-oblivious by
construction.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from typing import Optional

from .engine import Time

TokenSeq = tuple[int, ...]


@dataclass(frozen=True)
class Request:
    rid: str
    client: str
    input_tokens: TokenSeq
    arrival: Time
    parent: Optional[str] = None

    @property
    def input_len(self) -> int:
        return len(self.input_tokens)


def extend_length(input_len: int, matched_prefix_len: int) -> int:
    """Input tokens that must actually be computed at prefill."""
    if not 0 <= matched_prefix_len <= input_len:
        raise ValueError(f"matched prefix {matched_prefix_len} outside [0, {input_len}]")
    return input_len - matched_prefix_len


@dataclass
class SystemParams:
    L_input: int = 4096
    L_output: int = 1024
    M: int = 16384
    D: int = 1
    w_e: int = 1
    w_q: int = 2

    def validate(self) -> None:
        for name in ("L_input", "L_output", "M", "D"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.w_e < 0 or self.w_q < 0:
            raise ValueError("cost weights must be non-negative")
        if self.M < self.L_input + 1:
            raise ValueError("M must fit at least one maximal request plus a generated token")


# --- trace records ---------------------------------------------------------
#
# Line-delimited trace format.  Input token sequences are reconstructed as
# (shared prefix expansion)[:prefix_len] ++ (unique suffix), so traces stay
# compact.  A shared_prefix_id of the form "req:<rid>" resolves to that
# request's full input token sequence (parent-chain sharing in programs);
# any other id names a standalone deterministic token universe.


@dataclass
class TraceRecord:
    rid: str
    client: str
    arrival_time: Time
    input_token_count: int
    shared_prefix_id: str
    prefix_len: int
    true_output_len: int
    parent_id: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "TraceRecord":
        return TraceRecord(**json.loads(line))


@lru_cache(maxsize=4096)
def _token_block(namespace: str, block: int) -> tuple[int, ...]:
    digest = hashlib.sha256(f"{namespace}#{block}".encode()).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "big") % (1 << 31) for i in range(0, 32, 4))


def expand_tokens(namespace: str, length: int) -> TokenSeq:
    """Deterministic token sequence for a namespace (cheap, reproducible)."""
    out: list[int] = []
    block = 0
    while len(out) < length:
        out.extend(_token_block(namespace, block))
        block += 1
    return tuple(out[:length])


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)

    def validate(self, params: SystemParams) -> None:
        seen: set[str] = set()
        last_t = 0
        for rec in self.records:
            if rec.arrival_time < last_t:
                raise ValueError("trace arrivals must be sorted")
            last_t = rec.arrival_time
            if rec.parent_id is not None and rec.parent_id not in seen:
                raise ValueError(f"parent {rec.parent_id} of {rec.rid} not seen earlier")
            if not 1 <= rec.input_token_count <= params.L_input:
                raise ValueError(f"{rec.rid}: input length outside [1, L_input]")
            if not 1 <= rec.true_output_len:
                raise ValueError(f"{rec.rid}: true_output_len must be positive")
            seen.add(rec.rid)

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(rec.to_json() + "\n")

    @staticmethod
    def load(path: str) -> "Trace":
        with open(path) as fh:
            return Trace([TraceRecord.from_json(line) for line in fh if line.strip()])

    def materialize(self) -> tuple[list[Request], dict[str, int]]:
        """Expand records into Requests plus the hidden output-length table."""
        requests: list[Request] = []
        inputs: dict[str, TokenSeq] = {}
        output_lens: dict[str, int] = {}
        for rec in self.records:
            if rec.shared_prefix_id.startswith("req:"):
                base = inputs[rec.shared_prefix_id[4:]]
                if rec.prefix_len > len(base):
                    raise ValueError(f"{rec.rid}: prefix_len exceeds parent input")
                prefix = base[: rec.prefix_len]
            else:
                prefix = expand_tokens(rec.shared_prefix_id, rec.prefix_len)
            suffix_len = rec.input_token_count - rec.prefix_len
            if suffix_len < 0:
                raise ValueError(f"{rec.rid}: prefix_len exceeds input_token_count")
            tokens = prefix + expand_tokens(f"sfx:{rec.rid}", suffix_len)
            req = Request(
                rid=rec.rid,
                client=rec.client,
                input_tokens=tokens,
                arrival=rec.arrival_time,
                parent=rec.parent_id,
            )
            requests.append(req)
            inputs[rec.rid] = tokens
            output_lens[rec.rid] = rec.true_output_len
        return requests, output_lens
