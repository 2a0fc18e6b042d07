"""Reference simulations written independently of the package internals.

These exist so statistical tests compare the implementation against a
second, separately written realization of the same process rather than
against itself. The resampling oracle deliberately uses python's Mersenne
Twister (random.Random) instead of numpy's PCG64 and draws one uniform at
a time instead of a pre-drawn batch.
"""

import bisect
import itertools
import random


def resample_by_hand(weights, identities, draw_count, max_copies, seed):
    """Sequential capped multinomial: draw, count copies per identity,
    remove an identity once it reaches the cap, renormalize, repeat.

    Returns the list of drawn pool indices (short if the pool empties).
    """
    rnd = random.Random(seed)
    live = list(weights)
    index_of = {}
    for j, ident in enumerate(identities):
        index_of.setdefault(ident, []).append(j)
    cum = list(itertools.accumulate(live))
    copies = {}
    drawn = []
    for _ in range(draw_count):
        total = cum[-1]
        if total <= 0.0:
            break
        idx = bisect.bisect_right(cum, rnd.random() * total)
        if idx >= len(live):
            idx = len(live) - 1
        while live[idx] == 0.0:
            idx -= 1
        drawn.append(idx)
        ident = identities[idx]
        seen = copies.get(ident, 0) + 1
        copies[ident] = seen
        if seen >= max_copies:
            for j in index_of[ident]:
                live[j] = 0.0
            cum = list(itertools.accumulate(live))
    return drawn
