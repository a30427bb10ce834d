"""Temporal smoothing message kernels (forward delta, backward phi).

Both messages share one closed form: given the net evidence ``v`` arriving
from the neighbouring time step, the outgoing message saturates at
``-gamma + omega`` below and at ``gamma`` (consensus column) or
``gamma - omega`` (data column) above.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

# branch order used by the counters: (d1,d2) = (1,1), (1,0), (0,1), (0,0)
BRANCHES = ("saturate_low", "linear", "unreachable", "saturate_high")


def temporal_message(
    v: np.ndarray,
    gamma: float,
    omega: float,
    consensus,
    counts: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Four-branch evaluation of the delta/phi update for evidence ``v``.

    ``consensus`` marks whether the column node j is a consensus node and must
    broadcast against ``v``. ``counts`` (length 4) accumulates how often each
    branch fired.
    """
    v = np.asarray(v, dtype=float)
    c = np.asarray(consensus, dtype=bool)
    not_c = ~c
    d1 = (gamma - omega) >= v
    d2 = (-gamma + omega * not_c) >= v
    low = d1 & d2
    linear = d1 & ~d2
    odd = ~d1 & d2
    out = np.where(not_c, gamma - omega, gamma) + np.zeros_like(v)
    out = np.where(linear, omega * c + v, out)
    out = np.where(low, -gamma + omega, out)
    if odd.any():
        # only reachable with omega > gamma, which configs reject
        assert not (gamma >= omega >= 0), "unreachable temporal branch fired"
        out = np.where(odd, -v, out)
    if counts is not None:
        n = [np.count_nonzero(np.broadcast_to(b, out.shape)) for b in (low, linear, odd)]
        counts[0] += n[0]
        counts[1] += n[1]
        counts[2] += n[2]
        counts[3] += out.size - sum(n)
    return out


def temporal_message_clamped(v, gamma: float, omega: float, consensus) -> np.ndarray:
    """Same message as :func:`temporal_message`, written as a clamp."""
    c = np.asarray(consensus, dtype=bool)
    hi = gamma - omega * ~c
    return np.minimum(np.maximum(omega * c + np.asarray(v, dtype=float), -gamma + omega), hi)
