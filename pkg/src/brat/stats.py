"""Quantile helpers used by the interval and hypothesis-test code.

Backed by scipy.special so no statistical tables are shipped; the normal
quantile is accurate well beyond 1e-8 and the chi-squared quantile is the
inverse of the regularized incomplete gamma function.
"""

import numpy as np
from scipy import special

from .errors import ConfigError


def normal_quantile(p: float) -> float:
    """Quantile of the standard normal distribution at probability p."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"normal quantile needs p in (0,1), got {p}")
    return float(special.ndtri(p))


def chi2_quantile(dof: int, p: float) -> float:
    """Quantile of the chi-squared distribution with `dof` degrees of freedom."""
    if dof < 1:
        raise ConfigError(f"chi-squared quantile needs dof >= 1, got {dof}")
    if not 0.0 < p < 1.0:
        raise ConfigError(f"chi-squared quantile needs p in (0,1), got {p}")
    return float(special.chdtri(dof, 1.0 - p))


def chi2_sf(dof: int, x: float) -> float:
    """Upper-tail probability P(X > x) for a chi-squared variable."""
    if x < 0:
        return 1.0
    return float(np.clip(special.chdtrc(dof, x), 0.0, 1.0))
