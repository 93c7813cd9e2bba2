"""Quasilinear DAE models ``A(x, t) x' + b(x, t) = 0`` and their projector chain.

The projector chain follows the tractability-index construction for index <= 2:

    Q    kernel projector of A,            P  = I - Q
    B    d(A(x,t) y)/dx + db/dx
    A1   A + B Q                          (time-invariant kernel only)
    Q1   canonical kernel projector of A1, P1 = I - Q1
    G2   A1 + B P Q1
    T    projector onto im(Q Q1) with T P = 0,  U = I - T

``P P1`` extracts the differential (freely initialisable) components.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ContractViolation,
    EvaluationError,
    IndexMismatchError,
    NonUniformIndexError,
    UnsupportedStructureError,
)

DEFAULT_RANK_TOL = 1e-12
_SQRT_EPS = math.sqrt(np.finfo(float).eps)


class DaeModel:
    """Base class for quasilinear DAE models.

    Subclasses implement :meth:`eval_mass` and :meth:`eval_rhs`. Jacobians fall
    back to central finite differences. Capability flags:

    ``constant_mass``
        A does not depend on (x, t); the ``d(A y)/dx`` term of B vanishes.
    ``time_varying_kernel``
        ker A(t) moves with t. Unsupported, models setting it are rejected.
    ``linear_index2``
        The model has the structure ``A x' + b1(U x, t) + B2 T x = 0`` with a
        constant mass matrix, so two implicit Euler steps consistentialise.
    ``constant_q1``
        im Q1 is constant, so a single projector P P1* extracts the
        differential components everywhere.

    Optional hooks ``analytic_projectors(y, x, t)`` and
    ``analytic_consistentialize(x_hat, t)`` are looked up by attribute and
    default to ``None``.
    """

    n_dof: int = 0
    component_names: Sequence[str] = ()
    model_id: str = "dae"

    constant_mass = False
    time_varying_kernel = False
    linear_index2 = False
    constant_q1 = False

    analytic_projectors = None
    analytic_consistentialize = None

    # evaluation point used to freeze P P1* for constant_q1 models
    reference_point = None

    def eval_mass(self, x, t):
        raise NotImplementedError

    def eval_rhs(self, x, t):
        raise NotImplementedError

    def eval_rhs_jacobian(self, x, t):
        return fd_jacobian(lambda z: self.eval_rhs(z, t), x)

    def eval_mass_directional_jacobian(self, y, x, t):
        """Return ``d(A(x, t) y)/dx``."""
        if self.constant_mass:
            return np.zeros((self.n_dof, self.n_dof))
        y = np.asarray(y, dtype=float)
        return fd_jacobian(lambda z: self.eval_mass(z, t) @ y, x)

    def eval_rhs_time_derivative(self, x, t):
        """Return ``db/dt`` at fixed x (central difference unless overridden)."""
        dt = _SQRT_EPS * (1.0 + abs(t))
        return (np.asarray(self.eval_rhs(x, t + dt)) - np.asarray(self.eval_rhs(x, t - dt))) / (2 * dt)

    def algebraic_residual(self, x, t):
        """Residual of the explicit algebraic constraints, ``W b(x, t)`` with ``W A = 0``."""
        W = left_null_basis(self.eval_mass(x, t))
        return W @ np.asarray(self.eval_rhs(x, t), dtype=float)

    def __repr__(self):
        return f"{type(self).__name__}(n_dof={self.n_dof})"


def fd_jacobian(func, x):
    """Central-difference Jacobian with step ``sqrt(eps) * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(func(x), dtype=float)
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = _SQRT_EPS * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2 * h)
    return J


def _check_dims(model, *vectors):
    for v in vectors:
        if np.shape(v) != (model.n_dof,):
            raise ContractViolation(
                f"expected vector of length {model.n_dof}, got shape {np.shape(v)}"
            )


def eval_residual(model: DaeModel, x, xdot, t: float) -> np.ndarray:
    """Evaluate ``A(x, t) xdot + b(x, t)``."""
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    _check_dims(model, x, xdot)
    try:
        with np.errstate(over="raise", invalid="raise"):
            r = model.eval_mass(x, t) @ xdot + np.asarray(model.eval_rhs(x, t), dtype=float)
    except (FloatingPointError, OverflowError) as exc:
        raise EvaluationError(f"model evaluation failed: {exc}", x=x, t=t) from exc
    if not np.all(np.isfinite(r)):
        raise EvaluationError("non-finite residual", x=x, t=t)
    return r


# ---------------------------------------------------------------------------
# rank-revealing helpers
# ---------------------------------------------------------------------------

def _svd(M, rank_tolerance):
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise EvaluationError("matrix has non-finite entries")
    U, s, Vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    thr = rank_tolerance * smax
    rank = int(np.sum(s > thr)) if smax > 0 else 0
    # a singular value within a factor 10 of the threshold makes the decision fragile
    unstable = bool(smax > 0 and np.any((s > thr / 10) & (s < thr * 10)))
    return U, s, Vt, rank, unstable


def numerical_rank(M, rank_tolerance=DEFAULT_RANK_TOL) -> int:
    return _svd(M, rank_tolerance)[3]


def kernel_projector(M, rank_tolerance: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthogonal projector onto ker M.

    Rank is decided from the singular values against
    ``rank_tolerance * sigma_max``. An all-zero matrix gives the identity.
    """
    if rank_tolerance <= 0:
        raise ContractViolation("rank_tolerance must be positive")
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {M.shape}")
    _, _, Vt, rank, _ = _svd(M, rank_tolerance)
    N = Vt[rank:].T
    return N @ N.T


def range_basis(M, rank_tolerance=DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of im M."""
    U, _, _, rank, _ = _svd(M, rank_tolerance)
    return U[:, :rank]


def left_null_basis(M, rank_tolerance=DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal rows W with ``W M = 0``."""
    U, _, _, rank, _ = _svd(M, rank_tolerance)
    return U[:, rank:].T


# ---------------------------------------------------------------------------
# projector chain
# ---------------------------------------------------------------------------

@dataclass
class ProjectorChain:
    A: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    B: np.ndarray
    A1: np.ndarray
    Q1: np.ndarray
    P1: np.ndarray
    G2: np.ndarray
    T: np.ndarray
    U: np.ndarray
    PP1: np.ndarray
    eval_point: tuple = ()
    rank_tolerance: float = DEFAULT_RANK_TOL
    unstable: bool = False
    source: str = "numeric"
    ranks: dict = field(default_factory=dict)

    @property
    def index(self) -> int:
        """Tractability index implied by the ranks of A and A1."""
        n = self.A.shape[0]
        if self.ranks.get("A", n) == n:
            return 0
        if self.ranks.get("A1", n) == n:
            return 1
        return 2

    def residual_checks(self) -> dict:
        """Max-abs defects of the projector identities, scaled by matrix size."""
        I = np.eye(self.A.shape[0])
        return {
            "Q^2-Q": _maxabs(self.Q @ self.Q - self.Q),
            "PQ": _maxabs(self.P @ self.Q),
            "AQ": _maxabs(self.A @ self.Q) / max(1.0, _maxabs(self.A)),
            "Q1^2-Q1": _maxabs(self.Q1 @ self.Q1 - self.Q1) / max(1.0, _maxabs(self.Q1)),
            "Q1Q": _maxabs(self.Q1 @ self.Q) / max(1.0, _maxabs(self.Q1)),
            "T^2-T": _maxabs(self.T @ self.T - self.T) / max(1.0, _maxabs(self.T)),
            "TU": _maxabs(self.T @ self.U) / max(1.0, _maxabs(self.T)),
            "TP": _maxabs(self.T @ self.P) / max(1.0, _maxabs(self.T)),
            "P1": _maxabs(self.P1 - (I - self.Q1)),
        }


def _maxabs(M):
    return float(np.max(np.abs(M))) if np.size(M) else 0.0


def _check_supported(model):
    if model.time_varying_kernel:
        raise UnsupportedStructureError(
            "models with a time-varying kernel of A are not supported"
        )


def index2_projector(Q, Q1, P, rank_tolerance=DEFAULT_RANK_TOL) -> np.ndarray:
    """Projector T onto im(Q Q1) whose kernel contains im P.

    The remaining kernel directions are the orthogonal complement of im(Q Q1)
    inside im Q.
    """
    n = Q.shape[0]
    V = range_basis(Q @ Q1, rank_tolerance) if _maxabs(Q @ Q1) > 0 else np.zeros((n, 0))
    if V.shape[1] == 0:
        return np.zeros((n, n))
    Pb = range_basis(P, rank_tolerance) if _maxabs(P) > 0 else np.zeros((n, 0))
    Qb = range_basis(Q, rank_tolerance)
    rest = Qb - V @ (V.T @ Qb)
    Wc = range_basis(rest, 1e-8) if _maxabs(rest) > 1e-12 else np.zeros((n, 0))
    M = np.hstack([V, Pb, Wc])
    if M.shape[1] != n:
        raise IndexMismatchError("could not complete a basis for the index-2 splitting")
    rhs = np.hstack([V, np.zeros((n, n - V.shape[1]))])
    # T M = rhs  <=>  M^T T^T = rhs^T
    return np.linalg.solve(M.T, rhs.T).T


def projector_chain(
    model: DaeModel,
    y,
    x,
    t: float,
    rank_tolerance: float = DEFAULT_RANK_TOL,
    numeric: bool = False,
    verify: bool = False,
) -> ProjectorChain:
    """Compute the projector chain at ``(y, x, t)``.

    When the model provides ``analytic_projectors`` that hook is used unless
    ``numeric`` is set. With ``verify`` both paths run and must agree to 1e-8
    relative.
    """
    _check_supported(model)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dims(model, x, y)
    if model.analytic_projectors is not None and not numeric:
        chain = model.analytic_projectors(y, x, t)
        if verify:
            ref = _numeric_chain(model, y, x, t, rank_tolerance)
            compare_chains(chain, ref)
        return chain
    return _numeric_chain(model, y, x, t, rank_tolerance)


def compare_chains(a: ProjectorChain, b: ProjectorChain, rtol=1e-8):
    for name in ("Q", "P", "Q1", "P1", "G2", "T", "U", "PP1"):
        ma, mb = getattr(a, name), getattr(b, name)
        scale = max(1.0, _maxabs(mb))
        err = _maxabs(ma - mb) / scale
        if err > rtol:
            raise AssertionError(f"analytic and numeric {name} differ by {err:.3e}")


def _numeric_chain(model, y, x, t, rank_tolerance):
    n = model.n_dof
    I = np.eye(n)
    A = np.asarray(model.eval_mass(x, t), dtype=float)
    _, _, VtA, rankA, unstA = _svd(A, rank_tolerance)
    NA = VtA[rankA:].T
    Q = NA @ NA.T
    P = I - Q
    B = np.asarray(model.eval_rhs_jacobian(x, t), dtype=float)
    if not model.constant_mass:
        B = B + np.asarray(model.eval_mass_directional_jacobian(y, x, t), dtype=float)
    A1 = A + B @ Q
    _, _, Vt1, rank1, unst1 = _svd(A1, rank_tolerance)
    N1 = Vt1[rank1:].T
    Q1t = N1 @ N1.T
    G2t = A1 + B @ P @ Q1t
    _, _, _, rank2, unst2 = _svd(G2t, rank_tolerance)
    if rank2 < n:
        raise IndexMismatchError(
            f"G2 is singular at t={t}: the DAE is not of index <= 2 here"
        )
    # canonical choice: Q1 = Q1~ G2^{-1} B P
    Q1 = Q1t @ np.linalg.solve(G2t, B @ P)
    P1 = I - Q1
    G2 = A1 + B @ P @ Q1
    T = index2_projector(Q, Q1, P, rank_tolerance)
    unstable = unstA or unst1 or unst2
    if unstable:
        warnings.warn(f"rank decision close to tolerance at t={t}", RuntimeWarning, stacklevel=3)
    return ProjectorChain(
        A=A, Q=Q, P=P, B=B, A1=A1, Q1=Q1, P1=P1, G2=G2, T=T, U=I - T,
        PP1=P @ P1, eval_point=(y.copy(), x.copy(), t),
        rank_tolerance=rank_tolerance, unstable=unstable, source="numeric",
        ranks={"A": rankA, "A1": rank1, "G2": rank2},
    )


def classify_index(
    model: DaeModel, sample_points, rank_tolerance: float = DEFAULT_RANK_TOL
) -> int:
    """Tractability index (0, 1 or 2), required to agree across all samples."""
    sample_points = list(sample_points)
    if not sample_points:
        raise ContractViolation("at least one sample point is required")
    found = []
    for y, x, t in sample_points:
        try:
            chain = projector_chain(model, y, x, t, rank_tolerance, numeric=True)
        except IndexMismatchError as exc:
            raise IndexMismatchError(
                f"index > 2 or structurally inconsistent at t={t}"
            ) from exc
        found.append(chain.index)
    if len(set(found)) > 1:
        raise NonUniformIndexError(f"index differs across samples: {found}")
    return found[0]


def default_samples(model: DaeModel, count=5, seed=0, scale=1.0, t_range=(0.0, 1.0)):
    """Random ``(y, x, t)`` samples for index classification."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        x = scale * rng.standard_normal(model.n_dof)
        y = scale * rng.standard_normal(model.n_dof)
        out.append((y, x, float(rng.uniform(*t_range))))
    return out


def constant_differential_projector(model: DaeModel, rank_tolerance=DEFAULT_RANK_TOL) -> np.ndarray:
    """Return the frozen ``P P1*`` of a ``constant_q1`` model.

    Q1* is the canonical Q1 at the model's reference point; only its range
    matters for the identities used downstream.
    """
    if not model.constant_q1:
        raise UnsupportedStructureError("model does not declare a constant im Q1")
    cached = getattr(model, "_pp1_star", None)
    if cached is not None:
        return cached
    ref = model.reference_point
    if ref is None:
        z = np.zeros(model.n_dof)
        ref = (z, z, 0.0)
    y, x, t = ref
    chain = projector_chain(model, y, x, t, rank_tolerance, numeric=True)
    pp1 = chain.PP1
    pp1.setflags(write=False)
    model._pp1_star = pp1
    return pp1


def differential_projector(model: DaeModel, x, t, rank_tolerance=DEFAULT_RANK_TOL) -> np.ndarray:
    """``P P1`` at ``(x, t)``, with the directional argument taken as x itself.

    Falls back to the frozen ``P P1*`` for models declaring a constant im Q1.
    """
    if model.constant_q1:
        return constant_differential_projector(model, rank_tolerance)
    x = np.asarray(x, dtype=float)
    return projector_chain(model, x, x, t, rank_tolerance).PP1
