"""Shared helpers for the test suite."""
import numpy as np


def step_events(trace):
    """Per-step sorted (src, dst, nbytes) lists: the tag- and level-free view
    of a trace used for structural comparisons."""
    out = []
    order = np.lexsort((trace.dst, trace.src, trace.step))
    step = trace.step[order]
    src = trace.src[order]
    dst = trace.dst[order]
    nb = trace.nbytes[order]
    bounds = np.searchsorted(step, np.arange(trace.n_steps + 1))
    for si in range(trace.n_steps):
        lo, hi = bounds[si], bounds[si + 1]
        out.append([(int(src[i]), int(dst[i]), int(nb[i]))
                    for i in range(lo, hi)])
    return out


def divisors(n):
    return [d for d in range(1, n + 1) if n % d == 0]
