"""Composition of privacy loss: basic, advanced (k-fold), Renyi, and per-analyst ledgers."""

from __future__ import annotations

import json
import math
import threading
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog
from scipy import special

from dp_provenance.categories import CompositionMode
from dp_provenance.errors import (
    CalibrationError,
    ParamValidationError,
    UnknownAnalystError,
    ensure,
)
from dp_provenance.model.query import PrivacyBudget
from dp_provenance.privacy.gauss import sigma_for

logger = structlog.get_logger(__name__)

DEFAULT_ALPHAS: tuple[float, ...] = (1.5, 2.0, 3.0, 4.0, 8.0, 16.0, 32.0, 64.0)
MAX_ADVANCED_K = 10**4
# Slack delta spent by advanced and Renyi reporting on top of the charged deltas.
DEFAULT_REPORT_DELTA = 1e-6


def compose_basic(charges: Iterable[PrivacyBudget]) -> PrivacyBudget:
    epsilon = 0.0
    delta = 0.0
    for charge in charges:
        epsilon += charge.epsilon
        delta += charge.delta
    return PrivacyBudget(epsilon, min(delta, math.nextafter(1.0, 0.0)))


def _log_delta_i(epsilon: float, k: int, i: int) -> float:
    """log of the binomial slack term of the k-fold optimal composition bound."""
    if i == 0:
        return -math.inf
    ells = np.arange(i)
    log_comb = special.gammaln(k + 1) - special.gammaln(ells + 1) - special.gammaln(k - ells + 1)
    # e^{(k-l)eps} - e^{(k-2i+l)eps} = e^{(k-l)eps} (1 - e^{(2l-2i)eps})
    log_terms = log_comb + (k - ells) * epsilon + np.log1p(-np.exp((2 * ells - 2 * i) * epsilon))
    return float(special.logsumexp(log_terms) - k * np.logaddexp(0.0, epsilon))


def compose_advanced(epsilon: float, delta: float, k: int, i: int) -> PrivacyBudget:
    """
    The i-th point of the optimal k-fold composition of (epsilon, delta)-DP mechanisms.

    Returns ((k - 2i) epsilon, 1 - (1 - delta)^k (1 - delta_i)), evaluated in log space.
    """
    ensure(k >= 1, 'k must be a positive integer')
    ensure(0 <= i <= k // 2, f'i must be in [0, {k // 2}], got {i}')
    ensure(epsilon > 0 or i == 0, 'epsilon must be positive')
    if k > MAX_ADVANCED_K:
        raise CalibrationError(f'k={k} exceeds the supported {MAX_ADVANCED_K}')
    log_delta_i = _log_delta_i(epsilon, k, i)
    delta_i = math.exp(log_delta_i) if log_delta_i > -math.inf else 0.0
    if not math.isfinite(delta_i) or delta_i >= 1.0:
        raise CalibrationError(f'advanced composition overflow at k={k}, i={i}')
    log_keep = k * math.log1p(-delta) + math.log1p(-delta_i)
    total_delta = -math.expm1(log_keep)
    if not math.isfinite(total_delta):
        raise CalibrationError(f'advanced composition overflow at k={k}, i={i}')
    return PrivacyBudget((k - 2 * i) * epsilon, min(total_delta, math.nextafter(1.0, 0.0)))


def best_advanced(
    epsilon: float, delta: float, k: int, target_delta: float
) -> PrivacyBudget:
    """Smallest-epsilon point of the k-fold bound whose delta stays within ``target_delta``."""
    best = compose_advanced(epsilon, delta, k, 0)
    for i in range(1, k // 2 + 1):
        candidate = compose_advanced(epsilon, delta, k, i)
        if candidate.delta > target_delta:
            break
        best = candidate
    return best


@dataclass(frozen=True)
class RdpCurve:
    alphas: tuple[float, ...]
    epsilons: tuple[float, ...]

    def __post_init__(self) -> None:
        ensure(len(self.alphas) > 0, 'empty alpha grid')
        ensure(len(self.alphas) == len(self.epsilons), 'alpha grid and curve lengths differ')
        ensure(all(a > 1 for a in self.alphas), 'Renyi orders must exceed 1')


def gaussian_rdp_curve(
    sigma: float, sensitivity: float = 1.0, alphas: Sequence[float] = DEFAULT_ALPHAS
) -> RdpCurve:
    """Renyi curve alpha * Delta^2 / (2 sigma^2) of the Gaussian mechanism."""
    return RdpCurve(
        tuple(alphas), tuple(a * sensitivity**2 / (2 * sigma**2) for a in alphas)
    )


def compose_rdp_and_convert(
    charges: Sequence[RdpCurve], target_delta: float
) -> PrivacyBudget:
    """Sum Renyi curves pointwise, then convert to (epsilon, target_delta)-DP."""
    ensure(0 < target_delta < 1, 'target delta must be in (0, 1)')
    if not charges:
        return PrivacyBudget(0.0, target_delta)
    alphas = charges[0].alphas
    ensure(len(alphas) > 0, 'empty alpha grid')
    for curve in charges[1:]:
        ensure(curve.alphas == alphas, 'all charges must share the alpha grid')
    total = np.sum([curve.epsilons for curve in charges], axis=0)
    grid = np.asarray(alphas)
    converted = total + math.log(1.0 / target_delta) / (grid - 1.0)
    return PrivacyBudget(float(np.min(converted)), target_delta)


class PrivacyLedger:
    """
    Per-analyst record of every (epsilon, delta) charge.

    Totals are computed under the ledger's reporting mode. Charges are Gaussian
    releases; their Renyi curves are recovered from the calibrated sigma.
    Writes are serialized behind a lock; reads work on a snapshot.
    """

    def __init__(
        self,
        mode: CompositionMode = CompositionMode.BASIC,
        alphas: Sequence[float] = DEFAULT_ALPHAS,
        target_delta: float = DEFAULT_REPORT_DELTA,
    ):
        self.mode = CompositionMode(mode)
        self.alphas = tuple(alphas)
        self.target_delta = target_delta
        self._entries: dict[str, list[PrivacyBudget]] = {}
        self._lock = threading.Lock()

    def register(self, analyst_id: str) -> None:
        with self._lock:
            self._entries.setdefault(analyst_id, [])

    def charge(self, analyst_id: str, budget: PrivacyBudget) -> None:
        with self._lock:
            self._entries.setdefault(analyst_id, []).append(budget)

    @property
    def analysts(self) -> list[str]:
        return list(self._entries)

    def charges(self, analyst_id: str) -> list[PrivacyBudget]:
        with self._lock:
            try:
                return list(self._entries[analyst_id])
            except KeyError:
                raise UnknownAnalystError(analyst_id) from None

    def total(self, analyst_id: str, mode: CompositionMode | None = None) -> PrivacyBudget:
        return multi_analyst_total(self, analyst_id, mode)

    def report(self) -> dict[str, dict[str, dict[str, float]]]:
        return {
            analyst_id: {
                mode.value: multi_analyst_total(self, analyst_id, mode).to_dict()
                for mode in CompositionMode
            }
            for analyst_id in self.analysts
        }

    def export_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.report(), indent=2, sort_keys=True))
        logger.info('PrivacyLedger.export_json', path=str(path))


def _advanced_total(charges: list[PrivacyBudget], target_delta: float) -> PrivacyBudget:
    basic = compose_basic(charges)
    positive = [c for c in charges if c.epsilon > 0]
    if not positive:
        return basic
    # Heterogeneous charges are bounded by k copies of the largest one.
    epsilon = max(c.epsilon for c in positive)
    delta = max(c.delta for c in positive)
    advanced = best_advanced(epsilon, delta, len(positive), basic.delta + target_delta)
    return advanced if advanced.epsilon < basic.epsilon else basic


def _rdp_total(
    charges: list[PrivacyBudget], alphas: tuple[float, ...], target_delta: float
) -> PrivacyBudget:
    curves = [
        gaussian_rdp_curve(sigma_for(c.epsilon, c.delta), alphas=alphas)
        for c in charges
        if c.epsilon > 0 and c.delta > 0
    ]
    return compose_rdp_and_convert(curves, target_delta)


def multi_analyst_total(
    ledger: PrivacyLedger,
    analyst_id: str,
    mode: CompositionMode | None = None,
) -> PrivacyBudget:
    """Composition of one analyst's own charges; other analysts never contribute."""
    mode = CompositionMode(mode or ledger.mode)
    charges = ledger.charges(analyst_id)
    if mode is CompositionMode.BASIC or not charges:
        return compose_basic(charges)
    if mode is CompositionMode.ADVANCED:
        return _advanced_total(charges, ledger.target_delta)
    if mode is CompositionMode.RDP:
        return _rdp_total(charges, ledger.alphas, ledger.target_delta)
    raise ParamValidationError(f'unsupported composition mode {mode}')
