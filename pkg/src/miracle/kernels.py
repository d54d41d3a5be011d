"""Elementwise numeric kernels used in the hot training/inference loops.

Each kernel has a pure-numpy implementation and a numba ``@njit`` version.
The numba path is used by default; set ``MIRACLE_NO_NUMBA=1`` to force the
numpy fallback (matrix products always go through BLAS either way).
"""
from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("MIRACLE_NO_NUMBA", "").strip() in {"1", "true", "yes"}

try:
    if _FORCE_NUMPY:
        raise ImportError("numba disabled by MIRACLE_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy implementations

def np_softplus(x):
    """log(1 + exp(x)), numerically stable for large |x|."""
    return np.logaddexp(0.0, x)


def np_sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def np_sample_gaussian(mu, rho, eps):
    """Reparameterized draw mu + softplus(rho) * eps."""
    return mu + np_softplus(rho) * eps


def np_rho_grad(d_w, eps, rho):
    """Chain d(loss)/d(sampled value) back to the pre-softplus scale rho."""
    return d_w * eps * np_sigmoid(rho)


def np_focal_terms(logits, ys, alpha, gamma):
    """Per-sample focal loss and its exact d/d(logit).

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the log; the
    gradient uses the clamped value consistently.
    """
    p = np.clip(np_sigmoid(logits), 1e-7, 1.0 - 1e-7)
    pos = ys == 1
    pt = np.where(pos, p, 1.0 - p)
    af = np.where(pos, alpha, 1.0 - alpha)
    one_m = 1.0 - pt
    loss = af * one_m**gamma * (-np.log(pt))
    if gamma == 0.0:
        d_pt = af * (-1.0 / pt)
    else:
        d_pt = af * (gamma * one_m ** (gamma - 1.0) * np.log(pt) - one_m**gamma / pt)
    sign = np.where(pos, 1.0, -1.0)
    grad = d_pt * sign * p * (1.0 - p)
    return loss, grad


# ---------------------------------------------------------------------------
# numba implementations (flat loops; same math, fused elementwise passes)

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_softplus(x):
        out = np.empty(x.size, dtype=np.float64)
        xf = x.ravel()
        for i in range(xf.size):
            v = xf[i]
            if v > 0.0:
                out[i] = v + np.log1p(np.exp(-v))
            else:
                out[i] = np.log1p(np.exp(v))
        return out.reshape(x.shape)

    @njit(cache=True)
    def _nb_sigmoid(x):
        out = np.empty(x.size, dtype=np.float64)
        xf = x.ravel()
        for i in range(xf.size):
            v = xf[i]
            if v >= 0.0:
                out[i] = 1.0 / (1.0 + np.exp(-v))
            else:
                e = np.exp(v)
                out[i] = e / (1.0 + e)
        return out.reshape(x.shape)

    @njit(cache=True)
    def _nb_sample_gaussian(mu, rho, eps):
        out = np.empty(mu.size, dtype=np.float64)
        mf, rf, ef = mu.ravel(), rho.ravel(), eps.ravel()
        for i in range(mf.size):
            r = rf[i]
            if r > 0.0:
                sp = r + np.log1p(np.exp(-r))
            else:
                sp = np.log1p(np.exp(r))
            out[i] = mf[i] + sp * ef[i]
        return out.reshape(mu.shape)

    @njit(cache=True)
    def _nb_rho_grad(d_w, eps, rho):
        out = np.empty(d_w.size, dtype=np.float64)
        df, ef, rf = d_w.ravel(), eps.ravel(), rho.ravel()
        for i in range(df.size):
            r = rf[i]
            if r >= 0.0:
                s = 1.0 / (1.0 + np.exp(-r))
            else:
                e = np.exp(r)
                s = e / (1.0 + e)
            out[i] = df[i] * ef[i] * s
        return out.reshape(d_w.shape)

    @njit(cache=True)
    def _nb_focal_terms(logits, ys, alpha, gamma):
        n = logits.size
        loss = np.empty(n, dtype=np.float64)
        grad = np.empty(n, dtype=np.float64)
        for i in range(n):
            v = logits[i]
            if v >= 0.0:
                p = 1.0 / (1.0 + np.exp(-v))
            else:
                e = np.exp(v)
                p = e / (1.0 + e)
            if p < 1e-7:
                p = 1e-7
            elif p > 1.0 - 1e-7:
                p = 1.0 - 1e-7
            if ys[i] == 1:
                pt = p
                af = alpha
                sign = 1.0
            else:
                pt = 1.0 - p
                af = 1.0 - alpha
                sign = -1.0
            one_m = 1.0 - pt
            loss[i] = af * one_m**gamma * (-np.log(pt))
            if gamma == 0.0:
                d_pt = af * (-1.0 / pt)
            else:
                d_pt = af * (gamma * one_m ** (gamma - 1.0) * np.log(pt) - one_m**gamma / pt)
            grad[i] = d_pt * sign * p * (1.0 - p)
        return loss, grad

    @njit(cache=True)
    def _nb_fma(mu, sigma, eps):
        out = np.empty(mu.size, dtype=np.float64)
        mf, sf, ef = mu.ravel(), sigma.ravel(), eps.ravel()
        for i in range(mf.size):
            out[i] = mf[i] + sf[i] * ef[i]
        return out.reshape(mu.shape)

    @njit(cache=True)
    def _nb_mul3(a, b, c):
        out = np.empty(a.size, dtype=np.float64)
        af, bf, cf = a.ravel(), b.ravel(), c.ravel()
        for i in range(af.size):
            out[i] = af[i] * bf[i] * cf[i]
        return out.reshape(a.shape)

    softplus = _nb_softplus
    sigmoid = _nb_sigmoid
    sample_gaussian = _nb_sample_gaussian
    rho_grad = _nb_rho_grad
    fma = _nb_fma
    mul3 = _nb_mul3

    def focal_terms(logits, ys, alpha, gamma):
        return _nb_focal_terms(
            np.ascontiguousarray(logits, dtype=np.float64),
            np.ascontiguousarray(ys, dtype=np.int64),
            float(alpha),
            float(gamma),
        )

    BACKEND = "numba"
else:
    softplus = np_softplus
    sigmoid = np_sigmoid
    sample_gaussian = np_sample_gaussian
    rho_grad = np_rho_grad

    def fma(mu, sigma, eps):
        return mu + sigma * eps

    def mul3(a, b, c):
        return a * b * c

    def focal_terms(logits, ys, alpha, gamma):
        return np_focal_terms(
            np.asarray(logits, dtype=np.float64),
            np.asarray(ys),
            float(alpha),
            float(gamma),
        )

    BACKEND = "numpy"
