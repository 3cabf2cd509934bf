"""Physical parameters of the driven Kerr oscillator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping


class TruncationError(ValueError):
    """Fock-space cutoff too small for the classical high-amplitude orbits."""

    def __init__(self, n_max: int, suggested: int):
        self.n_max = n_max
        self.suggested = suggested
        super().__init__(
            f"n_max={n_max} cannot represent the high-amplitude branch; "
            f"use n_max >= {suggested}"
        )


@dataclass(frozen=True)
class ModelParams:
    """Parameters of ``H = -delta n + alpha/2 n^2 + sum_q alpha_q n^q + drive (a + a^+)``
    and of the thermal bath (``gamma``, ``n_thermal``).

    ``alpha_q`` maps the power ``q >= 3`` to its coefficient.
    """

    delta: float
    alpha: float = 1.0
    drive: float = 0.0
    gamma: float = 0.0
    n_thermal: float = 0.0
    alpha_q: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.gamma < 0 or self.n_thermal < 0 or self.drive < 0:
            raise ValueError("gamma, n_thermal and drive must be non-negative")
        for q in self.alpha_q:
            if int(q) != q or q < 3:
                raise ValueError(f"alpha_q keys must be integers >= 3, got {q!r}")
        # freeze the mapping so instances stay hashable and safe to share
        object.__setattr__(self, "alpha_q", dict(sorted((int(q), float(v)) for q, v in self.alpha_q.items())))

    def __hash__(self):
        return hash((self.delta, self.alpha, self.drive, self.gamma, self.n_thermal,
                     tuple(self.alpha_q.items())))

    @property
    def noise_q(self) -> float:
        """Noise intensity ``gamma (N + 1/2)``."""
        return self.gamma * (self.n_thermal + 0.5)

    @property
    def alpha3(self) -> float:
        return self.alpha_q.get(3, 0.0)

    def f_crit(self) -> float:
        """Bistability threshold of the drive for the pure Kerr oscillator."""
        if self.delta <= 0:
            return math.nan
        return math.sqrt(4 * self.delta**3 / (27 * self.alpha))

    @property
    def m_nearest(self) -> int:
        """Integer ``m0`` closest to ``2 delta / alpha`` (ties go to the even one)."""
        return int(round(2 * self.delta / self.alpha))

    @property
    def delta_offset(self) -> float:
        """Detuning measured from the nearest multiphoton resonance ``m0 alpha / 2``."""
        return self.delta - self.m_nearest * self.alpha / 2

    def default_n_max(self) -> int:
        return max(2, math.ceil(4 * self.delta / self.alpha))

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @classmethod
    def from_ratios(cls, m: float, f_ratio: float, alpha: float = 1.0, alpha3_ratio: float = 0.0,
                    gamma: float = 0.0, n_thermal: float = 0.0, f_ref_m: float | None = None) -> "ModelParams":
        """Build parameters from ``2 delta/alpha = m``, ``drive/f_crit`` and ``alpha3/alpha``.

        ``f_ref_m`` fixes the detuning used to evaluate ``f_crit`` so that the drive
        stays constant along a detuning sweep.
        """
        delta = m * alpha / 2
        d_ref = (f_ref_m if f_ref_m is not None else m) * alpha / 2
        drive = f_ratio * math.sqrt(4 * d_ref**3 / (27 * alpha))
        aq = {3: alpha3_ratio * alpha} if alpha3_ratio else {}
        return cls(delta=delta, alpha=alpha, drive=drive, gamma=gamma, n_thermal=n_thermal, alpha_q=aq)
