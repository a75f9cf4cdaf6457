"""Counter-based uniforms keyed by (seed, episode, agent, stage, draw kind).

Each draw is a pure function of its key, so results do not depend on how
episodes are scheduled across workers.  The mixer is the SplitMix64
finalizer applied to a chained combination of the key fields.
"""

from __future__ import annotations

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_FIELD = (np.uint64(0xD6E8FEB86659FD93), np.uint64(0xA0761D6478BD642F),
          np.uint64(0xE7037ED1A0B428DB), np.uint64(0x8EBC6AF09C88C6E3))
_S30, _S27, _S31, _S11 = (np.uint64(k) for k in (30, 27, 31, 11))
_INV53 = 1.0 / 9007199254740992.0

# draw kinds
INIT, OBS, TRANS = 0, 1, 2


def _mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _S30)
    z = z * _M1
    z = z ^ (z >> _S27)
    z = z * _M2
    return z ^ (z >> _S31)


def stream_keys(seed: int, episodes: np.ndarray, agents: np.ndarray) -> np.ndarray:
    """Per-(episode, agent) base keys, shape [len(episodes), len(agents)]."""
    with np.errstate(over="ignore"):
        s = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)
        e = _mix(s ^ (np.asarray(episodes, dtype=np.uint64) * _FIELD[0]))
        return _mix(e[:, None] ^ (np.asarray(agents, dtype=np.uint64)[None, :] * _FIELD[1]))


def uniforms(keys: np.ndarray, stage: int, kind: int) -> np.ndarray:
    """Uniforms in [0, 1) for every base key at (stage, kind)."""
    with np.errstate(over="ignore"):
        tag = np.uint64(stage) * _FIELD[2] + np.uint64(kind) * _FIELD[3]
        h = _mix(keys ^ tag)
    return (h >> _S11).astype(np.float64) * _INV53


def categorical(u: np.ndarray, cdf: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling; ``cdf`` has the category axis last and broadcasts with ``u``."""
    # count of interior cut points at or below u; the last cut is excluded so
    # rounding in cumsum can never yield an out-of-range index
    return (u[..., None] >= cdf[..., :-1]).sum(axis=-1)
