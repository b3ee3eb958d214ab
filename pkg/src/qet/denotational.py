"""Density-map denotations and the strong-adequacy cross-check against the
forward semantics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import DensityMap
from .pars import Running, expand
from .state import MachineState
from .syntax import Stmt
from .transformer import (FixpointCfg, classical_key, denot_continuation, denot_structure,
                          wp_denotational, wp_step_indexed)


def forward_mixture(cfg, n: int, dim: int) -> tuple:
    """``(Σ_τ p_τ·h(τ) over nf^[n], residual running mass after n − 1 steps)``."""
    if n == 0:
        return DensityMap(dim), 1.0
    rep = expand(cfg, n - 1)
    out: dict = {}
    for w, st in rep.terminal:
        key = classical_key(st)
        m = w * np.outer(st.amps, st.amps.conj())
        out[key] = out[key] + m if key in out else m
    return DensityMap(dim, out), rep.residual_mass + rep.dropped_mass


@dataclass
class DenotReport:
    steps: int
    denotation: DensityMap
    mixture: DensityMap
    stepped: DensityMap
    residual: float
    gap: float
    stepped_gap: float
    loewner_ok: bool
    status: str
    tol: float

    @property
    def passed(self) -> bool:
        return self.gap <= self.residual + self.tol and self.stepped_gap <= self.tol and self.loewner_ok

    def to_json(self) -> dict:
        return {"steps": self.steps,
                "denotation": density_map_json(self.denotation),
                "mixture": density_map_json(self.mixture),
                "residual_mass": self.residual,
                "max_gap": self.gap,
                "step_indexed_gap": self.stepped_gap,
                "loewner_dominated": self.loewner_ok,
                "denotation_status": self.status,
                "verdict": "Pass" if self.passed else "Fail"}


def density_map_json(m: DensityMap) -> list:
    out = []
    for key in sorted(m.keys()):
        mat = m.get(key)
        out.append({"bools": list(key[0]), "ints": list(key[1]),
                    "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in mat]})
    return out


def strong_adequacy_check(stm: Stmt, st: MachineState, n: int, tol: float = 1e-6,
                          cfg: FixpointCfg | None = None) -> DenotReport:
    """Compare the denotation of ``(stm, st)`` with the forward mixture over
    ``nf^[n]``.

    Three quantities are reported: the Kleene denotation, the forward
    mixture (whose gap to the denotation must be within the residual running
    mass), and the step-indexed denotation at depth ``n``, which must equal
    the forward mixture up to rounding.
    """
    cs = denot_structure(st)
    cfg0 = Running.of(stm, st)
    den = wp_denotational(stm, st, cfg)
    mix, residual = forward_mixture(cfg0, n, cs.dim)
    stepped = wp_step_indexed(cfg0, denot_continuation, n, cs)
    gap = cs.distance(den.value, mix)
    stepped_gap = cs.distance(stepped, mix)
    # forward mixture at finite depth is below the denotation
    loewner_ok = cs.leq(mix, den.value, 1e-9)
    return DenotReport(n, den.value, mix, stepped, residual, gap, stepped_gap, loewner_ok,
                       den.status.value, tol)
