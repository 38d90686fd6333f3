"""Privacy-cost bookkeeping with basic and advanced composition."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Charge:
    epsilon: float
    delta: float
    label: str = ""


@dataclass(frozen=True)
class Composition:
    epsilon: float
    delta: float
    method: str
    basic_epsilon: float
    basic_delta: float
    advanced_epsilon: float
    advanced_delta: float


def basic_composition(charges: list[Charge]) -> tuple[float, float]:
    return math.fsum(c.epsilon for c in charges), min(1.0, math.fsum(c.delta for c in charges))


def advanced_composition_bound(charges: list[Charge], delta_prime: float) -> tuple[float, float]:
    """Heterogeneous advanced composition.

    ``eps_tot = sqrt(2 ln(1/delta') sum eps_i^2) + sum eps_i (e^eps_i - 1)``,
    ``delta_tot = delta' + sum delta_i``. For ``k`` equal charges this is the
    familiar ``sqrt(2k ln(1/delta')) eps + k eps (e^eps - 1)``.
    """
    if not 0.0 < delta_prime < 1.0:
        raise ValueError(f"delta_prime must be in (0, 1), got {delta_prime}")
    if not charges:
        return 0.0, 0.0
    sq = math.fsum(c.epsilon**2 for c in charges)
    drift = math.fsum(c.epsilon * math.expm1(c.epsilon) for c in charges)
    eps = math.sqrt(2.0 * math.log(1.0 / delta_prime) * sq) + drift
    return eps, min(1.0, delta_prime + math.fsum(c.delta for c in charges))


@dataclass
class PrivacyLedger:
    """Ordered privacy charges. Appends are serialised by a lock."""

    target_delta_prime: float = 1e-6
    charges: list[Charge] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 < self.target_delta_prime < 1.0:
            raise ValueError(f"target_delta_prime must be in (0, 1), got {self.target_delta_prime}")

    def charge(self, epsilon: float, delta: float = 0.0, label: str = "") -> None:
        if not epsilon >= 0.0 or not math.isfinite(epsilon):
            raise ValueError(f"epsilon must be finite and >= 0, got {epsilon}")
        if not 0.0 <= delta <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {delta}")
        with self._lock:
            self.charges.append(Charge(float(epsilon), float(delta), label))

    def __len__(self) -> int:
        return len(self.charges)

    def compose(self) -> Composition:
        return advanced_composition(self)

    def to_dict(self) -> dict:
        comp = self.compose()
        return {
            "charges": [{"epsilon": c.epsilon, "delta": c.delta, "label": c.label} for c in self.charges],
            "epsilon_total": comp.epsilon,
            "delta_total": comp.delta,
            "method": comp.method,
            "basic_epsilon": comp.basic_epsilon,
            "advanced_epsilon": comp.advanced_epsilon,
            "delta_prime": self.target_delta_prime,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def advanced_composition(ledger: PrivacyLedger) -> Composition:
    """Compose the ledger, reporting whichever of basic/advanced gives the smaller epsilon."""
    charges = list(ledger.charges)
    if not charges:
        return Composition(0.0, 0.0, "empty", 0.0, 0.0, 0.0, 0.0)
    b_eps, b_delta = basic_composition(charges)
    a_eps, a_delta = advanced_composition_bound(charges, ledger.target_delta_prime)
    if a_eps < b_eps:
        return Composition(a_eps, a_delta, "advanced", b_eps, b_delta, a_eps, a_delta)
    return Composition(b_eps, b_delta, "basic", b_eps, b_delta, a_eps, a_delta)
