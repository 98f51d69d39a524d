"""Curvature tensors of the derived connections and their structural identities.

Conventions: riemann returns R[l,k,i,j] with R(d_i, d_j) d_k = R^l_kij d_l,
built from R^l_kij = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im Gamma^m_jk
- Gamma^l_jm Gamma^m_ik. Everything runs on the symbolic jets; no finite
differences enter any curvature quantity.

The identities checked by curvature_relation_residuals are stated with the
signs that actually close numerically, which for eq5 means

    2 R_g = R + Rbar - 2 [K_X, K_Y]Z

(the bracket term enters eq4 and eq5 with opposite signs).
"""

import math

import numpy as np
import scipy.linalg

from .manifold import (
    _metric_jet_raw,
    _require,
    _sigma_jet_raw,
    christoffel_jet,
    hess_sigma,
    metric_at,
    sigma_at,
)
from .statstruct import ConnKind, connection_dcoeffs, difference_jet


class DegeneratePlaneError(ValueError):
    """The two given vectors do not span a 2-plane at the base point."""


def _riem_from(gam, dgam):
    A = dgam.transpose(1, 3, 0, 2) + np.einsum("lim,mjk->lkij", gam, gam)
    return A - A.transpose(0, 1, 3, 2)


def riemann(M, x, kind):
    """Curvature coefficients R[l,k,i,j] of the requested connection at x."""
    gam, dgam = connection_dcoeffs(M, x, kind)
    return _riem_from(gam, dgam)


def _gs_frame(g):
    # Gram-Schmidt on the coordinate frame, in index order; rows are the
    # frame vectors' coordinate components
    n = g.shape[0]
    basis = []
    for i in range(n):
        v = np.zeros(n)
        v[i] = 1.0
        for u in basis:
            v = v - float(u @ g @ v) * u
        basis.append(v / math.sqrt(v @ g @ v))
    return np.array(basis)


def ricci(M, x, kind):
    """Ric[j,k] = sum_i g(R(e_i, d_j) d_k, e_i) over a g-orthonormal frame."""
    x = _require(M, x)
    g = metric_at(M, x)
    R = riemann(M, x, kind)
    E = _gs_frame(g)
    return np.einsum("ia,lkaj,lm,im->jk", E, R, g, E)


def statistical_curvature(M, x):
    """S = (R + Rbar)/2, coefficientwise."""
    return 0.5 * (
        riemann(M, x, ConnKind.NABLA) + riemann(M, x, ConnKind.NABLA_BAR)
    )


def _plane_basis(g, plane):
    u, v = (np.asarray(w, dtype=float) for w in plane)
    nu2 = float(u @ g @ u)
    nv2 = float(v @ g @ v)
    uv = float(u @ g @ v)
    if nu2 <= 0.0 or nv2 <= 0.0 or nu2 * nv2 - uv * uv <= 1e-10 * nu2 * nv2:
        raise DegeneratePlaneError("vectors do not span a 2-plane")
    X = u / math.sqrt(nu2)
    w = v - float(X @ g @ v) * X
    return X, w / math.sqrt(w @ g @ w)


def sectional_tilde(M, x, plane):
    """Sectional curvature of gtilde = e^sigma g on the plane, two ways.

    Returns (direct, viaS): direct contracts riemann(LC_gTilde) against
    gtilde; viaS evaluates

        e^{-sigma} ( g(S(X,Y)Y,X) - (Hess(X,X) + Hess(Y,Y) + |dsigma|^2)/2 )

    on the g-orthonormalized pair. The two must agree; keeping both routes
    separate is the point of the check.
    """
    x = _require(M, x)
    g = metric_at(M, x)
    X, Y = _plane_basis(g, plane)
    es = math.exp(sigma_at(M, x))
    gt = es * g
    Rt = riemann(M, x, ConnKind.LC_G_TILDE)
    num = float(np.einsum("lm,mkij,i,j,k,l->", gt, Rt, X, Y, Y, X))
    den = float((X @ gt @ X) * (Y @ gt @ Y) - float(X @ gt @ Y) ** 2)
    direct = num / den

    S = statistical_curvature(M, x)
    H = hess_sigma(M, x)
    _, ds = _sigma_jet_raw(M, x, 1)
    n2 = float(ds @ np.linalg.solve(g, ds))
    sval = float(np.einsum("lm,mkij,i,j,k,l->", g, S, X, Y, Y, X))
    via = (sval - 0.5 * (float(X @ H @ X) + float(Y @ H @ Y) + n2)) / es
    return direct, via


def curvature_relation_residuals(M, x):
    """Max-norm residuals of the identities tying R, Rbar and R_g together.

    eq3: g(R(X,Y)Z, W) + g(Z, Rbar(X,Y)W) = 0
    eq4: R = R_g + alt(nabla_g K) + [K_X, K_Y]Z
    eq5: 2 R_g = R + Rbar - 2 [K_X, K_Y]Z
    """
    x = _require(M, x)
    (g,) = _metric_jet_raw(M, x, 0)
    gam, dgam = christoffel_jet(M, x)
    K, dK = difference_jet(M, x)
    Rg = _riem_from(gam, dgam)
    R = _riem_from(gam + K, dgam + dK)
    Rb = _riem_from(gam - K, dgam - dK)

    KK = np.einsum("lim,mjk->lkij", K, K)
    KK = KK - KK.transpose(0, 1, 3, 2)
    # (nabla_m K)^l_jk
    DK = (
        dK
        + np.einsum("lmi,ijk->mljk", gam, K)
        - np.einsum("imj,lik->mljk", gam, K)
        - np.einsum("imk,lji->mljk", gam, K)
    )
    B = DK.transpose(1, 3, 0, 2)
    alt = B - B.transpose(0, 1, 3, 2)

    low_R = np.einsum("lm,mkij->lkij", g, R)
    low_Rb_swapped = np.einsum("km,mlij->lkij", g, Rb)
    return {
        "eq3": float(np.abs(low_R + low_Rb_swapped).max()),
        "eq4": float(np.abs(R - Rg - alt - KK).max()),
        "eq5": float(np.abs(2.0 * Rg - R - Rb + 2.0 * KK).max()),
    }


def conjugate_symmetry_residual(M, x):
    """Eigenvalue spread of g^{-1} Hess sigma; 0 iff Hess sigma = f g at x.

    The spread is invariant under shifting by multiples of g, so this equals
    the deviation of Hess sigma from its best trace-fitted multiple of g
    measured through g itself, with no coordinate-dependent norm involved.
    """
    x = _require(M, x)
    g = metric_at(M, x)
    H = hess_sigma(M, x)
    w = scipy.linalg.eigh(H, g, eigvals_only=True)
    return float(w[-1] - w[0])


def constant_curvature_residual(M, x, lam, kind=ConnKind.NABLA):
    """max |g(R(di,dj)dk,dl) - lam (g_jk g_il - g_ik g_jl)| at x."""
    x = _require(M, x)
    g = metric_at(M, x)
    low = np.einsum("lm,mkij->lkij", g, riemann(M, x, kind))
    want = lam * (
        np.einsum("jk,il->lkij", g, g) - np.einsum("ik,jl->lkij", g, g)
    )
    return float(np.abs(low - want).max())


def closed_form_residuals(M, x):
    """Residuals of riemann/ricci of nabla against their Hessian closed forms.

    With a = dsigma, H = Hess sigma, G_X = nabla^g_X grad sigma:

      R(X,Y)Z = R_g(X,Y)Z - (H(X,Z)Y - H(Y,Z)X + g(Y,Z)G_X - g(X,Z)G_Y)/2
                + (a(Y)a(Z)X - a(X)a(Z)Y)/4
                + |a|^2 (g(Y,Z)X - g(X,Z)Y)/4
                + (g(Y,Z)a(X) - g(X,Z)a(Y)) grad sigma / 4

      Ric = Ric_g + (n H - (lap sigma) g)/2 + ((n-2) a (x) a + n |a|^2 g)/4

    These are cross-checks only; the primary computation stays with the
    connection jets.
    """
    x = _require(M, x)
    g, dg = _metric_jet_raw(M, x, 1)
    _, ds, d2s = _sigma_jet_raw(M, x, 2)
    gam, dgam = christoffel_jet(M, x)
    K, dK = difference_jet(M, x)
    n = M.n
    gi = np.linalg.inv(g)
    grad = gi @ ds
    dgi = -np.einsum("ka,mab,bl->mkl", gi, dg, gi)
    dgrad = np.einsum("mkl,l->mk", dgi, ds) + np.einsum("kl,ml->mk", gi, d2s)
    H = d2s - np.einsum("kij,k->ij", gam, ds)
    G = dgrad + np.einsum("lim,m->il", gam, grad)  # G[i,l] = (nabla_i grad)^l
    n2 = float(ds @ grad)
    lap = float(np.einsum("ij,ij->", gi, H))
    eye = np.eye(n)

    Rg = _riem_from(gam, dgam)
    R = _riem_from(gam + K, dgam + dK)
    block_h = (
        np.einsum("ik,lj->lkij", H, eye)
        - np.einsum("jk,li->lkij", H, eye)
        + np.einsum("jk,il->lkij", g, G)
        - np.einsum("ik,jl->lkij", g, G)
    )
    quad = 0.25 * (
        np.einsum("j,k,li->lkij", ds, ds, eye)
        - np.einsum("i,k,lj->lkij", ds, ds, eye)
        + n2 * (np.einsum("jk,li->lkij", g, eye) - np.einsum("ik,lj->lkij", g, eye))
        + np.einsum("jk,i,l->lkij", g, ds, grad)
        - np.einsum("ik,j,l->lkij", g, ds, grad)
    )
    want_R = Rg - 0.5 * block_h + quad

    ric = ricci(M, x, ConnKind.NABLA)
    ric_g = np.einsum("akaj->jk", Rg)
    want_ric = (
        ric_g
        + 0.5 * (n * H - lap * g)
        + 0.25 * ((n - 2) * np.outer(ds, ds) + n * n2 * g)
    )
    return {
        "riemann": float(np.abs(R - want_R).max()),
        "ricci": float(np.abs(ric - want_ric).max()),
    }