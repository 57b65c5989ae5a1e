# cython: language_level=3
"""Compiled Metropolis chain; mirrors ``_chain_py.run_chain`` step for step."""

from libc.math cimport exp

cdef int NEIGHBOR_STEP = 0


cdef inline Py_ssize_t _propose(Py_ssize_t i, Py_ssize_t n, int kind, double u) noexcept nogil:
    cdef Py_ssize_t j
    if kind == NEIGHBOR_STEP:
        if u < 0.5:
            j = i - 1
        else:
            j = i + 1
        if j < 0 or j >= n:
            j = i
        return j
    if n == 1:
        return i
    j = <Py_ssize_t>(u * (n - 1))
    if j > n - 2:
        j = n - 2
    if j >= i:
        j += 1
    return j


def run_chain(const double[::1] actions, Py_ssize_t start, int kind,
              const double[::1] temperatures, const double[:, ::1] uniforms,
              long long[::1] states_out, unsigned char[::1] accepted_out):
    """Run ``len(temperatures)`` steps in place; returns the best-action index ever visited."""
    cdef Py_ssize_t n = actions.shape[0]
    cdef Py_ssize_t n_steps = temperatures.shape[0]
    cdef Py_ssize_t i = start, j, t
    cdef Py_ssize_t best = start
    cdef double delta
    with nogil:
        for t in range(n_steps):
            j = _propose(i, n, kind, uniforms[t, 0])
            delta = actions[j] - actions[i]
            if delta <= 0.0 or uniforms[t, 1] < exp(-delta / temperatures[t]):
                i = j
                accepted_out[t] = 1
                if actions[i] < actions[best]:
                    best = i
            else:
                accepted_out[t] = 0
            states_out[t] = i
    return best
