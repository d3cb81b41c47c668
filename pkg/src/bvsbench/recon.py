"""Gradient-domain grayscale reconstruction.

Convention: ``gradients`` uses forward differences ``gx[y, x] = I[y, x+1] - I[y, x]``
(zero in the last column; likewise ``gy`` in the last row).  ``divergence`` is
its negative adjoint, i.e. backward differences, so ``divergence(gradients(I))``
is exactly the 5-point Laplacian with reflecting (Neumann) borders and no
half-pixel shift is introduced.

Reconstruction is a least-squares fit of pixel differences along arbitrary
integer offsets, solved by Jacobi-preconditioned conjugate gradients.  The
fitted plane is defined up to one constant per connected component of the
difference graph: diagonal offsets split the grid into two parity lattices,
whose relative level is fixed by matching 4-neighbours.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import LinearOperator, cg
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ConfigurationError, ConvergenceError, check_plane

log = logging.getLogger(__name__)


@dataclass
class GradientField:
    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        self.gx = check_plane(self.gx, "gx")
        self.gy = check_plane(self.gy, "gy")
        if self.gx.shape != self.gy.shape:
            raise ValueError(f"gx and gy shapes differ: {self.gx.shape} vs {self.gy.shape}")

    @property
    def shape(self):
        return self.gx.shape


@dataclass(frozen=True)
class SolverInfo:
    iterations: int
    residual: float
    n_components: int


def gradients(image):
    """Forward-difference gradient field of `image` (zero in the last column / row)."""
    img = check_plane(image)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return GradientField(gx, gy)


def divergence(g):
    """Backward-difference divergence, the negative adjoint of `gradients`.

    Entries of ``gx`` in the last column and ``gy`` in the last row lie outside
    the forward-difference support and are ignored.
    """
    gx = g.gx.copy()
    gy = g.gy.copy()
    gx[:, -1] = 0.0
    gy[-1, :] = 0.0
    div = gx.copy()
    div[:, 1:] -= gx[:, :-1]
    div += gy
    div[1:, :] -= gy[:-1, :]
    return div


def laplacian(image):
    """5-point Laplacian with reflecting borders."""
    img = check_plane(image)
    p = np.pad(img, 1, mode="edge")
    return p[1:-1, 2:] + p[1:-1, :-2] + p[2:, 1:-1] + p[:-2, 1:-1] - 4.0 * img


def difference_matrix(shape, offset):
    """Sparse operator ``u(p) - u(p - d)`` over pixels p whose neighbour p - d is inside.

    Returns ``(D, rows)`` where ``rows`` are the flat indices of those pixels.
    """
    h, w = shape
    dx, dy = (int(v) for v in offset)
    yy, xx = np.mgrid[0:h, 0:w]
    ok = (xx - dx >= 0) & (xx - dx < w) & (yy - dy >= 0) & (yy - dy < h)
    rows = np.flatnonzero(ok)
    nbr = rows - (dy * w + dx)
    m = rows.size
    data = np.concatenate([np.ones(m), -np.ones(m)])
    ri = np.concatenate([np.arange(m), np.arange(m)])
    ci = np.concatenate([rows, nbr])
    return sparse.csr_matrix((data, (ri, ci)), shape=(m, h * w)), rows


def _align_components(u, labels, n_comp, shape):
    """Shift each component so that 4-neighbours across components agree in the least-squares sense."""
    if n_comp == 1:
        return u
    h, w = shape
    lab = labels.reshape(h, w)
    img = u.reshape(h, w)
    pairs = [(img[:, 1:], img[:, :-1], lab[:, 1:], lab[:, :-1]),
             (img[1:, :], img[:-1, :], lab[1:, :], lab[:-1, :])]
    a = np.zeros((n_comp, n_comp))
    b = np.zeros(n_comp)
    for up, uq, lp, lq in pairs:
        cross = lp != lq
        lp, lq, diff = lp[cross], lq[cross], (up - uq)[cross]
        # residual (u_p + s_lp) - (u_q + s_lq)
        np.add.at(a, (lp, lp), 1.0)
        np.add.at(a, (lq, lq), 1.0)
        np.add.at(a, (lp, lq), -1.0)
        np.add.at(a, (lq, lp), -1.0)
        np.add.at(b, lp, -diff)
        np.add.at(b, lq, diff)
    shift = np.linalg.lstsq(a, b, rcond=None)[0]
    return u + shift[labels]


def solve_differences(shape, offsets, observations, anchor_mean=0.5, rtol=1e-8, maxiter=None):
    """Least-squares plane whose differences along `offsets` match `observations`.

    ``observations[k]`` is a full plane; only entries at the valid rows of
    ``difference_matrix(shape, offsets[k])`` are used.  Returns (plane, SolverInfo).
    """
    h, w = shape
    if h < 3 or w < 3:
        raise ConfigurationError(f"reconstruction needs at least 3x3 pixels, got {h}x{w}")
    n = h * w
    a = sparse.csr_matrix((n, n))
    rhs = np.zeros(n)
    for off, obs in zip(offsets, observations):
        d, rows = difference_matrix(shape, off)
        a = a + d.T @ d
        rhs += d.T @ np.asarray(obs, dtype=np.float64).ravel()[rows]
    a = a.tocsr()
    n_comp, labels = csgraph.connected_components(a, directed=False)
    counts = np.bincount(labels, minlength=n_comp)
    # project the right-hand side onto the range (orthogonal to per-component constants)
    rhs -= (np.bincount(labels, weights=rhs, minlength=n_comp) / counts)[labels]
    bnorm = float(np.linalg.norm(rhs))
    iters = 0
    if bnorm == 0.0:
        u = np.zeros(n)
        resid = 0.0
    else:
        diag = a.diagonal()
        inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 0.0)
        precond = LinearOperator((n, n), matvec=lambda r: inv_diag * r, dtype=np.float64)
        cap = 10 * n if maxiter is None else int(maxiter)

        def count(_):
            nonlocal iters
            iters += 1

        u, status = cg(a, rhs, rtol=rtol, atol=0.0, maxiter=cap, M=precond, callback=count)
        resid = float(np.linalg.norm(rhs - a @ u)) / bnorm
        if status != 0 and resid > rtol:
            raise ConvergenceError(
                f"conjugate gradients stopped after {iters} iterations at relative residual {resid:.3g}",
                residual=resid, iterations=iters)
    u = _align_components(u, labels, n_comp, shape)
    u += anchor_mean - u.mean()
    log.debug("difference solve %dx%d: %d iterations, residual %.2e, %d components", h, w, iters, resid, n_comp)
    return u.reshape(h, w), SolverInfo(iters, resid, int(n_comp))


def poisson_reconstruct(g, anchor_mean=0.5, rtol=1e-8, maxiter=None, return_info=False):
    """Neumann Poisson solve ``laplacian(u) = divergence(g)`` with mean fixed to `anchor_mean`."""
    h, w = g.shape
    # forward difference gx[y, x] is the (1, 0) difference observed at pixel (x + 1, y)
    obs_x = np.zeros((h, w))
    obs_y = np.zeros((h, w))
    obs_x[:, 1:] = g.gx[:, :-1]
    obs_y[1:, :] = g.gy[:-1, :]
    u, info = solve_differences((h, w), [(1, 0), (0, 1)], [obs_x, obs_y], anchor_mean, rtol, maxiter)
    return (u, info) if return_info else u


def reconstruct_from_sd(frame, anchor_mean=0.5, rtol=1e-8, maxiter=None, return_info=False):
    """Intensity plane from an AOP frame's two spatial-difference planes (dequantized)."""
    sa = frame.sd_a.astype(np.float64) * frame.quant_step
    sb = frame.sd_b.astype(np.float64) * frame.quant_step
    u, info = solve_differences(frame.shape, list(frame.sd_directions), [sa, sb], anchor_mean, rtol, maxiter)
    return (u, info) if return_info else u


class PoissonReconstructor(TransformerMixin, BaseEstimator):
    """Stateless estimator wrapper: ``transform`` maps AOP frames or gradient fields to intensity planes."""

    def __init__(self, anchor_mean=0.5, rtol=1e-8, maxiter=None):
        self.anchor_mean = anchor_mean
        self.rtol = rtol
        self.maxiter = maxiter

    def fit(self, X=None, y=None):
        self.solver_info_ = []
        return self

    def transform(self, X):
        items = [X] if isinstance(X, GradientField) or hasattr(X, "sd_a") else list(X)
        out, infos = [], []
        for item in items:
            if isinstance(item, GradientField):
                u, info = poisson_reconstruct(item, self.anchor_mean, self.rtol, self.maxiter, return_info=True)
            else:
                u, info = reconstruct_from_sd(item, self.anchor_mean, self.rtol, self.maxiter, return_info=True)
            out.append(u)
            infos.append(info)
        self.solver_info_ = infos
        return np.stack(out)
