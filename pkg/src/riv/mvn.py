"""Gaussian draws with a lower Cholesky factor and escalating diagonal jitter."""

import numpy as np

from riv.errors import CovarianceError

_JITTERS = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


def cholesky_jittered(cov):
    """Lower Cholesky factor of ``cov``, adding ``eps * mean(diag)`` to the diagonal if needed.

    An all-zero matrix gets an all-zero factor.
    """
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-14):
        raise CovarianceError("covariance matrix is not symmetric")
    cov = (cov + cov.T) / 2
    if not np.any(cov):
        return np.zeros_like(cov)
    scale = float(np.mean(np.diag(cov)))
    eye = np.eye(cov.shape[0])
    for eps in _JITTERS:
        try:
            return np.linalg.cholesky(cov + eps * scale * eye)
        except np.linalg.LinAlgError:
            continue
    raise CovarianceError("covariance matrix is not positive semi-definite, even after jitter")


def draw(mean, cov, size, rng):
    """``size`` draws from ``N(mean, cov)`` as rows of a ``(size, d)`` array."""
    mean = np.asarray(mean, dtype=float)
    L = cholesky_jittered(cov)
    z = rng.standard_normal((size, mean.shape[0]))
    return mean[None, :] + z @ L.T
