# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled packet queue; a ring buffer of (enqueue_tick, flow, count) batches."""

import numpy as np
cimport numpy as cnp

ctypedef cnp.int64_t i64


cdef class PacketQueue:
    cdef public long max_len
    cdef i64[::1] _tick
    cdef i64[::1] _flow
    cdef i64[::1] _count
    cdef Py_ssize_t _head, _size, _cap
    cdef i64 _len

    def __init__(self, long max_len):
        self.max_len = max_len
        self._cap = 16
        self._tick = np.zeros(self._cap, dtype=np.int64)
        self._flow = np.zeros(self._cap, dtype=np.int64)
        self._count = np.zeros(self._cap, dtype=np.int64)
        self._head = 0
        self._size = 0
        self._len = 0

    def __len__(self):
        return self._len

    cdef void _grow(self):
        cdef Py_ssize_t i, j, new_cap = self._cap * 2
        cdef i64[::1] t = np.zeros(new_cap, dtype=np.int64)
        cdef i64[::1] f = np.zeros(new_cap, dtype=np.int64)
        cdef i64[::1] c = np.zeros(new_cap, dtype=np.int64)
        for i in range(self._size):
            j = (self._head + i) % self._cap
            t[i] = self._tick[j]
            f[i] = self._flow[j]
            c[i] = self._count[j]
        self._tick, self._flow, self._count = t, f, c
        self._head = 0
        self._cap = new_cap

    cdef inline void _append(self, i64 tick, i64 flow, i64 count):
        cdef Py_ssize_t j
        if self._size == self._cap:
            self._grow()
        j = (self._head + self._size) % self._cap
        self._tick[j] = tick
        self._flow[j] = flow
        self._count[j] = count
        self._size += 1
        self._len += count

    def push(self, i64 tick, i64 flow, i64 count):
        if count > 0:
            self._append(tick, flow, count)

    def batches(self):
        cdef Py_ssize_t i, j
        out = []
        for i in range(self._size):
            j = (self._head + i) % self._cap
            out.append((int(self._tick[j]), int(self._flow[j]), int(self._count[j])))
        return out

    def serve(self, i64 now, i64[::1] flows, i64[::1] counts, i64 capacity, i64 limit,
              i64[::1] outstanding):
        cdef Py_ssize_t i, j
        cdef i64 c, take, served = 0, dropped = 0, latency = 0, budget = capacity, excess
        for i in range(flows.shape[0]):
            c = counts[i]
            if c > 0:
                self._append(now, flows[i], c)

        while budget > 0 and self._size > 0:
            j = self._head
            take = self._count[j] if self._count[j] <= budget else budget
            latency += take * (now - self._tick[j])
            outstanding[self._flow[j]] -= take
            served += take
            budget -= take
            self._count[j] -= take
            if self._count[j] == 0:
                self._head = (self._head + 1) % self._cap
                self._size -= 1
        self._len -= served

        if limit < 0:
            limit = 0
        excess = self._len - limit
        while excess > 0:
            j = (self._head + self._size - 1) % self._cap
            take = self._count[j] if self._count[j] <= excess else excess
            outstanding[self._flow[j]] -= take
            dropped += take
            excess -= take
            self._count[j] -= take
            if self._count[j] == 0:
                self._size -= 1
        self._len -= dropped
        return served, dropped, latency
