"""Pure-Python Metropolis chain; the fallback when the compiled kernel is absent.

Must stay step-for-step identical to ``_chain_ext.pyx``.
"""

import math

NEIGHBOR_STEP = 0
UNIFORM_JUMP = 1


def propose(i, n, kind, u):
    if kind == NEIGHBOR_STEP:
        j = i - 1 if u < 0.5 else i + 1
        # off the end: reflect as a self-loop so Q stays symmetric
        if j < 0 or j >= n:
            j = i
        return j
    if n == 1:
        return i
    j = int(u * (n - 1))
    if j > n - 2:
        j = n - 2
    if j >= i:
        j += 1
    return j


def step(actions, i, kind, temperature, u_prop, u_acc):
    """One Metropolis update; returns ``(next_index, accepted)``."""
    j = propose(i, len(actions), kind, u_prop)
    delta = actions[j] - actions[i]
    if delta <= 0.0 or u_acc < math.exp(-delta / temperature):
        return j, True
    return i, False


def run_chain(actions, start, kind, temperatures, uniforms, states_out, accepted_out):
    """Run ``len(temperatures)`` steps in place; returns the best-action index ever visited."""
    a = [float(v) for v in actions]
    n = len(a)
    temps = [float(v) for v in temperatures]
    u = [tuple(r) for r in uniforms.tolist()]
    states = [0] * len(temps)
    acc = [0] * len(temps)
    exp = math.exp
    i = int(start)
    best = i
    for t, temp in enumerate(temps):
        u_prop, u_acc = u[t]
        j = propose(i, n, kind, u_prop)
        delta = a[j] - a[i]
        if delta <= 0.0 or u_acc < exp(-delta / temp):
            i = j
            acc[t] = 1
            if a[i] < a[best]:
                best = i
        states[t] = i
    states_out[:] = states
    accepted_out[:] = acc
    return best
