"""Tensor-valued measures, couplings, marginalization, quantum entropy
and the quantum Kullback-Leibler divergence.

A tensor-valued measure assigns a PSD matrix (rather than a scalar mass)
to each support point.  Solvers consume :class:`TensorMeasure`; the
entropy / divergence functions consume bare stacks of matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sym import KERNEL_TOL, PSD_TOL, _dense, _plog_parts, eig_sym

__all__ = [
    "TensorMeasure",
    "Coupling",
    "marginal_rows",
    "marginal_cols",
    "quantum_entropy",
    "quantum_kl",
    "inner",
    "primal_objective",
]


def _check_psd_stack(tensors: np.ndarray, psd_tol: float, what: str) -> None:
    if tensors.shape[0] == 0:
        return
    vals = eig_sym(tensors).values
    bound = -psd_tol * (1.0 + np.abs(vals).max(axis=-1))
    bad = np.nonzero(vals.min(axis=-1) < bound)[0]
    if bad.size:
        idx = int(bad[0])
        raise ValueError(
            f"{what} {idx} is not positive semidefinite "
            f"(min eigenvalue {vals[idx].min():g})"
        )


def _as_tensor_stack(tensors, what: str = "tensor") -> np.ndarray:
    arr = np.asarray(tensors, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != arr.shape[-2]:
        raise ValueError(f"expected a stack of square matrices, got {arr.shape}")
    asym = np.abs(arr - np.swapaxes(arr, -1, -2)).max(initial=0.0)
    scale = 1.0 + np.abs(arr).max(initial=0.0)
    if asym > 1e-9 * scale:
        raise ValueError(f"{what} stack contains a non-symmetric matrix")
    return arr


@dataclass(frozen=True)
class TensorMeasure:
    """A discrete tensor-valued measure: support points plus one PSD
    matrix per point.

    Parameters
    ----------
    points : ndarray, shape (n, ambient_dim)
        Support coordinates (conventionally inside the unit cube).
    tensors : ndarray, shape (n, d, d)
        One PSD matrix per point, validated within ``psd_tol``.
    """

    points: np.ndarray
    tensors: np.ndarray
    psd_tol: float = PSD_TOL

    def __post_init__(self):
        points = np.ascontiguousarray(self.points, dtype=float)
        tensors = np.ascontiguousarray(self.tensors, dtype=float)
        if points.ndim != 2:
            raise ValueError(f"points must be (n, ambient_dim), got {points.shape}")
        if tensors.ndim != 3 or tensors.shape[-1] != tensors.shape[-2]:
            raise ValueError(f"tensors must be (n, d, d), got {tensors.shape}")
        if len(points) != len(tensors):
            raise ValueError(
                f"{len(points)} points but {len(tensors)} tensors"
            )
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(tensors))):
            raise ValueError("points and tensors must be finite")
        if len(tensors):
            asym = np.abs(tensors - np.swapaxes(tensors, -1, -2)).max()
            if asym > 1e-9 * (1.0 + np.abs(tensors).max()):
                raise ValueError("tensors must be symmetric")
        _check_psd_stack(tensors, self.psd_tol, "tensor")
        points.flags.writeable = False
        tensors.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "tensors", tensors)

    @property
    def n_atoms(self) -> int:
        return len(self.points)

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def tensor_dim(self) -> int:
        return self.tensors.shape[-1]


@dataclass(frozen=True)
class Coupling:
    """A transport plan: a dense I x J array of PSD matrices, entry (i, j)
    describing how much matrix mass moves from atom i to atom j."""

    entries: np.ndarray
    psd_tol: float = PSD_TOL

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=float)
        if entries.ndim != 4 or entries.shape[-1] != entries.shape[-2]:
            raise ValueError(f"entries must be (I, J, d, d), got {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("entries must be finite")
        flat = entries.reshape(-1, entries.shape[-2], entries.shape[-1])
        if flat.shape[0]:
            vals = eig_sym(flat).values
            bound = -self.psd_tol * (1.0 + np.abs(vals).max(axis=-1))
            bad = np.nonzero(vals.min(axis=-1) < bound)[0]
            if bad.size:
                i, j = divmod(int(bad[0]), entries.shape[1])
                raise ValueError(f"coupling entry ({i}, {j}) is not PSD")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def tensor_dim(self) -> int:
        return self.entries.shape[-1]

    def transpose(self) -> "Coupling":
        return Coupling(np.swapaxes(self.entries, 0, 1), self.psd_tol)


def marginal_rows(g: Coupling) -> np.ndarray:
    """Row marginal ``(sum_j gamma_ij)_i``, shape (I, d, d)."""
    return g.entries.sum(axis=1)


def marginal_cols(g: Coupling) -> np.ndarray:
    """Column marginal ``(sum_i gamma_ij)_j``, shape (J, d, d)."""
    return g.entries.sum(axis=0)


def quantum_entropy(tensors, psd_tol: float = PSD_TOL) -> float:
    """Von Neumann entropy ``sum_i -tr(P_i log P_i - P_i)`` with the
    ``0 log 0 = 0`` convention.

    Returns ``-inf`` if any input matrix is not PSD (within ``psd_tol``).
    """
    arr = _as_tensor_stack(tensors)
    if arr.shape[0] == 0:
        return 0.0
    vals = eig_sym(arr).values
    bound = -psd_tol * (1.0 + np.abs(vals).max(axis=-1, keepdims=True))
    if np.any(vals < bound):
        return -math.inf
    lam = np.maximum(vals, 0.0)
    xlogx = np.where(lam > 0.0, lam * np.log(np.where(lam > 0.0, lam, 1.0)), 0.0)
    return float((lam - xlogx).sum())


def quantum_kl(
    a, b, kernel_tol: float = KERNEL_TOL, psd_tol: float = PSD_TOL
) -> float:
    """Quantum relative entropy ``sum_i tr(P log P - P log Q - P + Q)``.

    Uses the lower-semicontinuity convention for singular ``Q``: the value
    is finite when ``ker Q`` is contained in ``ker P`` (with ``0 log 0 = 0``)
    and ``+inf`` otherwise.  Non-PSD ``P`` also maps to ``+inf``.
    """
    p = _as_tensor_stack(a, "first")
    q = _as_tensor_stack(b, "second")
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    if p.shape[0] == 0:
        return 0.0

    p_vals = eig_sym(p).values
    bound = -psd_tol * (1.0 + np.abs(p_vals).max(axis=-1))
    if np.any(p_vals.min(axis=-1) < bound):
        return math.inf
    lam = np.maximum(p_vals, 0.0)
    tr_plogp = np.where(
        lam > 0.0, lam * np.log(np.where(lam > 0.0, lam, 1.0)), 0.0
    ).sum(axis=-1)

    _, p_tilde, log_vals, _, contained = _plog_parts(p, q, kernel_tol)
    if not np.all(contained):
        return math.inf
    diag = np.diagonal(p_tilde, axis1=-2, axis2=-1)
    tr_plogq = np.einsum("...s,...s->...", diag, log_vals)

    tr_p = np.trace(p, axis1=-2, axis2=-1)
    tr_q = np.trace(q, axis1=-2, axis2=-1)
    return float((tr_plogp - tr_plogq - tr_p + tr_q).sum())


def inner(a, b) -> float:
    """Inner product ``sum_i tr(a_i b_i^T)`` between collections of
    matrices of equal shape."""
    x = _dense(a)
    y = _dense(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float((x * y).sum())


def primal_objective(g: Coupling, mu: TensorMeasure, nu: TensorMeasure, cost, cfg) -> float:
    """Entropic-regularized transport objective of a coupling:

    ``<gamma, c> + rho1 KL(gamma 1 | mu) + rho2 KL(gamma^T 1 | nu)
    - eps H(gamma)``.

    A ``rho`` equal to ``inf`` marks a hard marginal constraint; its KL
    term is the constraint indicator and contributes zero here (the solver
    enforces the constraint itself).  ``+inf`` propagates from the KL
    terms when a kernel escapes.
    """
    if g.rows != mu.n_atoms or g.cols != nu.n_atoms:
        raise ValueError(
            f"coupling is {g.rows}x{g.cols} but measures have "
            f"{mu.n_atoms} and {nu.n_atoms} atoms"
        )
    d = g.tensor_dim
    total = cost.contract(g.entries)
    if math.isfinite(cfg.rho1):
        total += cfg.rho1 * quantum_kl(marginal_rows(g), mu.tensors)
    if math.isfinite(cfg.rho2):
        total += cfg.rho2 * quantum_kl(marginal_cols(g), nu.tensors)
    total -= cfg.eps * quantum_entropy(g.entries.reshape(-1, d, d))
    return float(total)
