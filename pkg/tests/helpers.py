"""Shared instance builders for solver, barycenter and acceptance tests."""

import numpy as np

from qot.cost import euclidean_cost
from qot.measure import TensorMeasure


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def oriented_tensor(theta, lam1, lam2):
    r = rotation(theta)
    return r @ np.diag([lam1, lam2]) @ r.T


def random_psd(rng, d, n=None, lo=0.3, hi=1.7):
    shape = (d, d) if n is None else (n, d, d)
    q, _ = np.linalg.qr(rng.standard_normal(shape))
    lam = rng.uniform(lo, hi, size=q.shape[:-1])
    out = (q * lam[..., None, :]) @ np.swapaxes(q, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def random_measure(rng, n_atoms, d, ambient=2):
    points = rng.uniform(size=(n_atoms, ambient))
    return TensorMeasure(points, random_psd(rng, d, n=n_atoms))


def random_instance(rng, rows, cols, d, ambient=2, alpha=2.0):
    mu = random_measure(rng, rows, d, ambient)
    nu = random_measure(rng, cols, d, ambient)
    cost = euclidean_cost(mu.points, nu.points, alpha=alpha)
    return mu, nu, cost


def trace_balanced_instance(rng, rows, cols, d, ambient=2, alpha=2.0):
    """Random instance rescaled so total traces agree (required for the
    trace-constrained problem to be feasible)."""
    mu, nu, cost = random_instance(rng, rows, cols, d, ambient, alpha)
    total_mu = np.trace(mu.tensors, axis1=-2, axis2=-1).sum()
    total_nu = np.trace(nu.tensors, axis1=-2, axis2=-1).sum()
    nu = TensorMeasure(nu.points, nu.tensors * (total_mu / total_nu))
    return mu, nu, cost


def scalar_measure(masses, points=None):
    """A d=1 measure from positive scalar masses on a 1-D axis."""
    masses = np.asarray(masses, dtype=float)
    if points is None:
        points = np.linspace(0.0, 1.0, len(masses))[:, None]
    return TensorMeasure(np.asarray(points, float), masses[:, None, None])


def two_bump_line_instance(n=32, ratio=4.0):
    """1-D instance with two anisotropic d=2 bumps: mass concentrated at
    x=0.3 with horizontal ellipses, and at x=0.7 with rotating ones."""
    x = np.linspace(0.0, 1.0, n)
    points = x[:, None]

    mass_mu = np.exp(-((x - 0.3) ** 2) / (2 * 0.08**2)) + 0.05
    mass_nu = np.exp(-((x - 0.7) ** 2) / (2 * 0.08**2)) + 0.05
    mu_tensors = np.stack(
        [m * oriented_tensor(0.0, 1.0, 1.0 / ratio) for m in mass_mu]
    )
    nu_tensors = np.stack(
        [
            m * oriented_tensor(0.5 * np.pi * t, 1.0, 1.0 / ratio)
            for m, t in zip(mass_nu, x)
        ]
    )
    mu = TensorMeasure(points, mu_tensors)
    nu = TensorMeasure(points, nu_tensors)
    cost = euclidean_cost(points, points, alpha=2.0)
    return mu, nu, cost


def grid_points(n_side):
    axis = np.linspace(0.0, 1.0, n_side)
    gx, gy = np.meshgrid(axis, axis, indexing="xy")
    return np.stack([gx.ravel(), gy.ravel()], axis=-1)


def bump_grid_measure(n_side, center, theta, ratio=4.0, width=0.18, floor=0.05):
    """A 2-D grid field with one anisotropic Gaussian bump of mass."""
    pts = grid_points(n_side)
    dist2 = ((pts - np.asarray(center)) ** 2).sum(axis=1)
    mass = np.exp(-dist2 / (2 * width**2)) + floor
    base = oriented_tensor(theta, 1.0, 1.0 / ratio)
    return TensorMeasure(pts, np.stack([m * base for m in mass]))


def fit_log_slope(residuals, skip=10):
    """Least-squares slope and R^2 of log10(residuals) vs iteration."""
    r = np.asarray(residuals)[skip:]
    y = np.log10(r)
    t = np.arange(len(y), dtype=float)
    design = np.stack([t, np.ones_like(t)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2
