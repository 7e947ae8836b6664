"""Two experiments in a row."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from ..linalg import expm_skew_herm
from ..master import ChannelMatrix
from .povm import KrausMap, Povm, PovmError, choi_kraus


def gap_kraus(gap, dim: int) -> KrausMap:
    """Normalize a gap specification to a Kraus map.

    Accepts ``None`` (no gap), a :class:`KrausMap`, a :class:`ChannelMatrix`,
    or ``("unitary", H, duration)``.
    """
    if gap is None:
        return KrausMap(np.eye(dim, dtype=np.complex128))
    if isinstance(gap, KrausMap):
        k = gap
    elif isinstance(gap, ChannelMatrix):
        k = choi_kraus(gap)
    elif isinstance(gap, tuple) and gap and gap[0] == "unitary":
        _, h, duration = gap
        k = KrausMap(expm_skew_herm(np.asarray(h, dtype=np.complex128), float(duration)))
    else:
        raise PovmError(f"unsupported gap specification {gap!r}")
    if k.d_in != dim or k.d_out != dim:
        raise PovmError("gap dimension does not match the experiments")
    return k


def compose_experiments(first: tuple[Povm, Mapping], second: tuple[Povm, Mapping], gap=None
                        ) -> tuple[Povm, dict]:
    """Joint law of two consecutive experiments on the same object.

    Effects use the Heisenberg route ``E_{(z1,z2)} = C₁†(G†(E₂(z2)))``;
    operations use ``C_{(z1,z2)} = C₂(z2) ∘ G ∘ C₁(z1)``.
    """
    p1, c1 = first
    p2, c2 = second
    if p1.dim != p2.dim:
        raise PovmError("dimension mismatch between experiments")
    g = gap_kraus(gap, p1.dim)
    outcomes, effects, maps = [], [], {}
    for z1 in p1.outcomes:
        for z2 in p2.outcomes:
            key = (z1, z2)
            outcomes.append(key)
            effects.append(c1[z1].dual(g.dual(p2[z2])))
            maps[key] = c1[z1].then(g).then(c2[z2])
    meta = {"composed": True}
    return Povm(outcomes, np.array(effects), meta), maps
