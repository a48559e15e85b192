"""Elementary symmetric functions of spectra and symmetric matrices.

All routines accept a single spectrum/matrix or a batch (leading axes), so the
same kernel serves scalar checks and whole curvature fields.
"""
from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np


class SymFuncDomainError(ValueError):
    """Raised when k lies outside 0..d."""


def _check_k(k: int, d: int) -> None:
    if not 0 <= k <= d:
        raise SymFuncDomainError(f"k={k} outside 0..{d}")


def sigma(lam, k: int):
    """k-th elementary symmetric function of the last axis of ``lam``.

    Uses the incremental expansion of prod_i (1 + lam_i t); sigma_0 = 1.
    """
    lam = np.asarray(lam, dtype=float)
    d = lam.shape[-1]
    _check_k(k, d)
    e = [np.ones(lam.shape[:-1])] + [np.zeros(lam.shape[:-1]) for _ in range(k)]
    for i in range(d):
        li = lam[..., i]
        for j in range(min(k, i + 1), 0, -1):
            e[j] = e[j] + li * e[j - 1]
    out = e[k]
    return float(out) if out.ndim == 0 else out


def sigma_all(lam):
    """Return [sigma_0, ..., sigma_d] of the last axis of ``lam``."""
    lam = np.asarray(lam, dtype=float)
    d = lam.shape[-1]
    e = [np.ones(lam.shape[:-1])] + [np.zeros(lam.shape[:-1]) for _ in range(d)]
    for i in range(d):
        li = lam[..., i]
        for j in range(i + 1, 0, -1):
            e[j] = e[j] + li * e[j - 1]
    return e


def sigma_deleted(lam, k: int, i: int):
    """sigma_k(lam | i): lam with its i-th entry set to zero."""
    lam = np.array(lam, dtype=float, copy=True)
    lam[..., i] = 0.0
    return sigma(lam, k)


def sigma_matrix(A, k: int):
    """sigma_k of the eigenvalues of symmetric ``A`` as a sum of principal minors."""
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    _check_k(k, d)
    if k == 0:
        out = np.ones(A.shape[:-2])
    elif k == 1:
        out = np.trace(A, axis1=-2, axis2=-1)
    elif k == 2 and d == 2:
        out = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    else:
        out = np.zeros(A.shape[:-2])
        for idx in combinations(range(d), k):
            sub = A[..., idx, :][..., :, idx]
            out = out + np.linalg.det(sub)
    return float(out) if np.ndim(out) == 0 else out


def sigma_partial(A, k: int):
    """Matrix of derivatives d sigma_k / d A_ij.

    This is the Newton tensor sum_m (-1)^m sigma_{k-1-m}(A) A^m, which is
    diag(sigma_{k-1}(lam|i)) when A is diagonal.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    _check_k(k, d)
    eye = np.broadcast_to(np.eye(d), A.shape)
    if k == 0:
        return np.zeros_like(A)
    if k == 1:
        return np.array(eye)
    if k == 2 and d == 2:
        tr = A[..., 0, 0] + A[..., 1, 1]
        return tr[..., None, None] * eye - A
    out = np.zeros_like(A)
    power = np.array(eye)
    for m in range(k):
        s = sigma_matrix(A, k - 1 - m)
        out = out + ((-1) ** m) * np.asarray(s)[..., None, None] * power
        power = power @ A
    return out


def in_gamma_k(lam, k: int):
    """True where sigma_i(lam) > 0 for every 1 <= i <= k (strict, no tolerance)."""
    lam = np.asarray(lam, dtype=float)
    d = lam.shape[-1]
    _check_k(k, d)
    e = sigma_all(lam)
    ok = np.ones(lam.shape[:-1], dtype=bool)
    for i in range(1, k + 1):
        ok &= e[i] > 0
    return bool(ok) if ok.ndim == 0 else ok


def binom(d: int, k: int) -> int:
    return comb(d, k)
