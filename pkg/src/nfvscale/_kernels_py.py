"""Pure-Python packet queue; behaviourally identical to the compiled ``_kernels``."""

from __future__ import annotations

from collections import deque


class PacketQueue:
    """FIFO of packet batches ``[enqueue_tick, flow, count]``.

    ``serve`` appends one tick of arrivals, serves up to ``capacity`` packets
    from the head and then tail-drops until at most ``limit`` packets remain.
    ``outstanding`` is indexed by flow and decremented for every packet that
    leaves, served or dropped.
    """

    __slots__ = ("max_len", "_q", "_len")

    def __init__(self, max_len: int):
        self.max_len = int(max_len)
        self._q: deque[list[int]] = deque()
        self._len = 0

    def __len__(self) -> int:
        return self._len

    def push(self, tick: int, flow: int, count: int) -> None:
        if count > 0:
            self._q.append([int(tick), int(flow), int(count)])
            self._len += int(count)

    def batches(self) -> list[tuple[int, int, int]]:
        return [tuple(b) for b in self._q]

    def serve(self, now, flows, counts, capacity, limit, outstanding):
        q = self._q
        for i in range(len(flows)):
            c = int(counts[i])
            if c > 0:
                q.append([now, int(flows[i]), c])
                self._len += c

        served = 0
        latency = 0
        budget = int(capacity)
        while budget > 0 and q:
            b = q[0]
            take = b[2] if b[2] <= budget else budget
            latency += take * (now - b[0])
            outstanding[b[1]] -= take
            served += take
            budget -= take
            b[2] -= take
            if b[2] == 0:
                q.popleft()
        self._len -= served

        dropped = 0
        excess = self._len - max(int(limit), 0)
        while excess > 0:
            b = q[-1]
            take = b[2] if b[2] <= excess else excess
            outstanding[b[1]] -= take
            dropped += take
            excess -= take
            b[2] -= take
            if b[2] == 0:
                q.pop()
        self._len -= dropped
        return served, dropped, latency
