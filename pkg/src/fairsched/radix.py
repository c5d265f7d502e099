"""Token-level radix tree modeling the KV prefix cache.

One class covers both variants:

* local (per worker): token budget, reference-count pinning, LRU eviction
  at whole-leaf grain (splitting an edge when a partial eviction is enough);
* global (routing index): no budget, per-node worker tags with insertion
  timestamps so stale eviction notices replay idempotently.
"""
from __future__ import annotations

from typing import Callable, Optional

from .engine import Time
from .requests import TokenSeq
from .speedups import common_prefix_len


class CacheFull(Exception):
    """The budget cannot admit the tokens even after evicting everything unpinned."""


class RadixNode:
    __slots__ = ("edge", "children", "parent", "ref_count", "last_access", "seq", "workers")

    def __init__(self, edge: TokenSeq, parent: Optional["RadixNode"], seq: int):
        self.edge = edge
        self.children: dict[int, RadixNode] = {}
        self.parent = parent
        self.ref_count = 0
        self.last_access: Time = 0
        self.seq = seq
        self.workers: dict[int, Time] = {}

    def path_tokens(self) -> TokenSeq:
        parts = []
        node: Optional[RadixNode] = self
        while node is not None and node.parent is not None:
            parts.append(node.edge)
            node = node.parent
        return tuple(t for edge in reversed(parts) for t in edge)


# Eviction callback: (full path of evicted leaf, surviving length, worker-visible count)
EvictHook = Callable[[TokenSeq, int, int], None]


class RadixTree:
    def __init__(self, capacity: Optional[int] = None, track_workers: bool = False):
        self.capacity = capacity
        self.track_workers = track_workers
        self.root = RadixNode((), None, 0)
        self.used_tokens = 0
        self.pinned_tokens = 0
        self._seq = 1
        self.on_evict: Optional[EvictHook] = None

    # -- traversal -----------------------------------------------------

    def _walk(self, tokens: TokenSeq):
        """Follow tokens as far as cached.

        Returns (full_nodes, partial_child, partial_len, match_len): nodes
        whose whole edge matched, plus an optional child matched only for
        its first partial_len edge tokens.
        """
        node = self.root
        idx = 0
        full: list[RadixNode] = []
        while idx < len(tokens):
            child = node.children.get(tokens[idx])
            if child is None:
                break
            k = common_prefix_len(child.edge, 0, tokens, idx)
            idx += k
            if k == len(child.edge):
                full.append(child)
                node = child
            else:
                return full, child, k, idx
        return full, None, 0, idx

    def match_prefix(self, tokens: TokenSeq, now: Time = 0, update_access: bool = True):
        """Longest cached prefix length and the fully matched node path."""
        full, partial, partial_len, mlen = self._walk(tokens)
        if update_access:
            for n in full:
                n.last_access = now
            if partial is not None:
                partial.last_access = now
        return mlen, full

    def probe(self, tokens: TokenSeq) -> tuple[int, int]:
        """(match_len, matched tokens currently unpinned) without side effects."""
        full, partial, partial_len, mlen = self._walk(tokens)
        unpinned = sum(len(n.edge) for n in full if n.ref_count == 0)
        if partial is not None and partial.ref_count == 0:
            unpinned += partial_len
        return mlen, unpinned

    def longest_match_workers(self, tokens: TokenSeq, now: Time = 0) -> tuple[int, set[int]]:
        """Worker set on the deepest matched node (global variant)."""
        full, partial, partial_len, mlen = self._walk(tokens)
        deepest = partial if partial_len > 0 else (full[-1] if full else None)
        if deepest is None:
            return 0, set()
        deepest.last_access = now
        for n in full:
            n.last_access = now
        return mlen, set(deepest.workers)

    # -- structure edits -----------------------------------------------

    def _split(self, node: RadixNode, k: int) -> RadixNode:
        """Split node's edge at k; returns the surviving top node."""
        assert 0 < k < len(node.edge)
        top = RadixNode(node.edge[:k], node.parent, self._seq)
        self._seq += 1
        top.ref_count = node.ref_count
        top.last_access = node.last_access
        top.workers = dict(node.workers)
        node.parent.children[top.edge[0]] = top
        node.edge = node.edge[k:]
        node.parent = top
        top.children[node.edge[0]] = node
        return top

    def insert(self, tokens: TokenSeq, now: Time = 0, worker: Optional[int] = None):
        """Ensure the full token path exists; returns (newly_cached, path).

        Raises CacheFull if the budget cannot fit the new tokens after
        evicting every unpinned node off the matched path.
        """
        node = self.root
        idx = 0
        path: list[RadixNode] = []
        while idx < len(tokens):
            child = node.children.get(tokens[idx])
            if child is None:
                break
            k = common_prefix_len(child.edge, 0, tokens, idx)
            if k < len(child.edge):
                child = self._split(child, k)
            idx += k
            path.append(child)
            node = child
        new_len = len(tokens) - idx
        if self.capacity is not None and self.used_tokens + new_len > self.capacity:
            self.evict_lru(self.used_tokens + new_len - self.capacity, protect=path)
            if self.used_tokens + new_len > self.capacity:
                raise CacheFull(f"cannot free {new_len} tokens")
        if new_len:
            leaf = RadixNode(tokens[idx:], node, self._seq)
            self._seq += 1
            node.children[tokens[idx]] = leaf
            self.used_tokens += new_len
            path.append(leaf)
        for n in path:
            n.last_access = now
            if self.track_workers and worker is not None:
                n.workers[worker] = now
        return new_len, path

    def _chain(self, path: list[RadixNode]):
        # Walk from the deepest node to the root.  Splits keep the deepest
        # object alive (the original becomes the bottom half), so this chain
        # always covers every node currently holding part of the pinned path,
        # even if the path list predates the splits.
        node = path[-1] if path else None
        while node is not None and node.parent is not None:
            yield node
            node = node.parent

    def pin(self, path: list[RadixNode]) -> None:
        for n in self._chain(path):
            if n.ref_count == 0:
                self.pinned_tokens += len(n.edge)
            n.ref_count += 1

    def unpin(self, path: list[RadixNode]) -> None:
        for n in self._chain(path):
            n.ref_count -= 1
            assert n.ref_count >= 0
            if n.ref_count == 0:
                self.pinned_tokens -= len(n.edge)

    def admit(self, tokens: TokenSeq, now: Time = 0) -> tuple[int, list[RadixNode]]:
        """Insert and pin the full path; returns (match_len_before, path)."""
        mlen, _ = self.probe(tokens)
        _, path = self.insert(tokens, now=now)
        self.pin(path)
        return mlen, path

    # -- eviction --------------------------------------------------------

    def _evictable_leaves(self, protect_ids: set[int]) -> list[RadixNode]:
        out = []
        stack = [self.root]
        while stack:
            n = stack.pop()
            stack.extend(n.children.values())
            if n is not self.root and not n.children and n.ref_count == 0 and id(n) not in protect_ids:
                out.append(n)
        return out

    def _detach(self, node: RadixNode) -> None:
        del node.parent.children[node.edge[0]]
        self.used_tokens -= len(node.edge)

    def evict_lru(self, needed: int, protect: Optional[list[RadixNode]] = None):
        """Free at least `needed` tokens, least-recently-accessed leaves first.

        Returns the evicted records (full leaf path, surviving length); a
        partial result if not enough is evictable.
        """
        protect_ids = {id(n) for n in (protect or ())}
        records: list[tuple[TokenSeq, int]] = []
        candidates = self._evictable_leaves(protect_ids)
        candidates.sort(key=lambda n: (n.last_access, n.seq))
        freed = 0
        while freed < needed and candidates:
            node = candidates.pop(0)
            full_path = node.path_tokens()
            remaining = needed - freed
            if len(node.edge) <= remaining:
                parent = node.parent
                edge_len = len(node.edge)
                self._detach(node)
                freed += edge_len
                records.append((full_path, len(full_path) - edge_len))
                if (
                    parent is not self.root
                    and not parent.children
                    and parent.ref_count == 0
                    and id(parent) not in protect_ids
                ):
                    # keep LRU order: re-insert in sorted position
                    candidates.append(parent)
                    candidates.sort(key=lambda n: (n.last_access, n.seq))
            else:
                # partial-edge eviction: drop the tail, keep the head cached
                keep = len(node.edge) - remaining
                node.edge = node.edge[:keep]
                self.used_tokens -= remaining
                freed += remaining
                records.append((full_path, len(full_path) - remaining))
        if self.on_evict is not None:
            for full_path, keep_len in records:
                self.on_evict(full_path, keep_len, len(full_path) - keep_len)
        return records

    # -- global-tree eviction notices ------------------------------------

    def evict_notify(self, path_tokens: TokenSeq, worker: int, keep_len: int, notice_time: Time) -> None:
        """Remove `worker` from nodes covering path offsets >= keep_len.

        Idempotent under stale replays: a tag re-inserted after the notice
        was emitted (workers[w] > notice_time) is left alone.  Unknown
        prefixes are a no-op.
        """
        node = self.root
        idx = 0
        found: list[tuple[RadixNode, int]] = []  # (node, start offset)
        while idx < len(path_tokens):
            child = node.children.get(path_tokens[idx])
            if child is None:
                break
            k = common_prefix_len(child.edge, 0, path_tokens, idx)
            if k < len(child.edge):
                if k > 0 and idx + k > keep_len:
                    found.append((child, idx))
                break
            found.append((child, idx))
            idx += k
            node = child
        touched: list[RadixNode] = []
        for n, start in found:
            end = start + len(n.edge)
            if end <= keep_len:
                continue
            if start < keep_len:
                self._split(n, keep_len - start)  # top survives with the tag
            if worker in n.workers and n.workers[worker] <= notice_time:
                del n.workers[worker]
                touched.append(n)
        for n in touched:
            self._prune_up(n)

    def _prune_up(self, node: RadixNode) -> None:
        while (
            node is not self.root
            and node.parent is not None
            and not node.children
            and not node.workers
            and node.ref_count == 0
        ):
            parent = node.parent
            if node.edge and node.edge[0] in parent.children and parent.children[node.edge[0]] is node:
                self._detach(node)
            else:
                break
            node = parent

    # -- diagnostics ------------------------------------------------------

    def dump(self) -> list[tuple[TokenSeq, int, tuple[int, ...], Time]]:
        """Deterministic pre-order serialization for golden tests."""
        out = []

        def rec(node: RadixNode, path: TokenSeq):
            if node is not self.root:
                out.append((path, node.ref_count, tuple(sorted(node.workers)), node.last_access))
            for key in sorted(node.children):
                child = node.children[key]
                rec(child, path + child.edge)

        rec(self.root, ())
        return out

    def check(self) -> None:
        """Structural invariants: budget conservation, sibling distinctness."""
        total = 0
        pinned = 0
        stack = [self.root]
        while stack:
            n = stack.pop()
            firsts = [c.edge[0] for c in n.children.values()]
            assert len(firsts) == len(set(firsts)), "sibling edges must start with distinct tokens"
            for key, c in n.children.items():
                assert c.edge[0] == key and c.parent is n
                assert c.ref_count >= 0
                stack.append(c)
            if n is not self.root:
                total += len(n.edge)
                if n.ref_count > 0:
                    pinned += len(n.edge)
        assert total == self.used_tokens, f"used_tokens {self.used_tokens} != sum of edges {total}"
        assert pinned == self.pinned_tokens
        if self.capacity is not None:
            assert self.used_tokens <= self.capacity
