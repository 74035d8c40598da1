from dp_provenance.privacy.accountant import (
    DEFAULT_ALPHAS,
    PrivacyLedger,
    RdpCurve,
    best_advanced,
    compose_advanced,
    compose_basic,
    compose_rdp_and_convert,
    gaussian_rdp_curve,
    multi_analyst_total,
)
from dp_provenance.privacy.gauss import (
    GaussianCalibration,
    additive_gm,
    classical_sigma,
    delta_at,
    gaussian_increment,
    make_rng,
    sigma_for,
    translate_vanilla,
    variance_increments,
)

__all__ = [
    'DEFAULT_ALPHAS',
    'GaussianCalibration',
    'PrivacyLedger',
    'RdpCurve',
    'additive_gm',
    'best_advanced',
    'classical_sigma',
    'compose_advanced',
    'compose_basic',
    'compose_rdp_and_convert',
    'delta_at',
    'gaussian_increment',
    'gaussian_rdp_curve',
    'make_rng',
    'multi_analyst_total',
    'sigma_for',
    'translate_vanilla',
    'variance_increments',
]
