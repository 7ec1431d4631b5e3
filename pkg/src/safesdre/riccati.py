"""Dense solvers for continuous algebraic Riccati and Lyapunov equations.

The point-wise feedback synthesis in this package reduces every control
evaluation to one continuous algebraic Riccati equation (CARE)

    P A + A' P - P G P + Q = 0,    G = g R^{-1} g'

and every certificate evaluation to one Lyapunov equation

    X A + A' X + C = 0.

Both are solved densely: the systems here are small (state dimension below
~15) and the solves sit inside tight simulation loops, so robustness and
diagnosability matter more than asymptotic complexity.

References
----------
.. [1] A. J. Laub, "A Schur method for solving algebraic Riccati
       equations", IEEE TAC 24(6), 1979.
.. [2] R. H. Bartels and G. W. Stewart, "Solution of the matrix equation
       AX + XB = C", Comm. ACM 15(9), 1972.
.. [3] D. Kleinman, "On an iterative technique for Riccati equation
       computations", IEEE TAC 13(1), 1968.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import IllConditioned, NoStabilizingSolution, SingularOperator

__all__ = [
    "RiccatiSolution",
    "LyapunovSolution",
    "StabilizabilityReport",
    "solve_care",
    "solve_lyapunov",
    "check_stabilizability",
    "check_detectability",
    "care_residual",
    "lyapunov_residual",
]

# Accepted closed-loop spectra must sit strictly left of this margin.
HURWITZ_MARGIN = -1e-9

# Relative Frobenius-norm residual accepted from solve_care.
CARE_RESIDUAL_RTOL = 1e-8

# Condition-number ceiling for the stable-subspace basis block.
SUBSPACE_COND_MAX = 1e12


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def care_residual(P: np.ndarray, A: np.ndarray, G: np.ndarray, Q: np.ndarray) -> float:
    """Frobenius norm of ``P A + A' P - P G P + Q``."""
    return float(np.linalg.norm(P @ A + A.T @ P - P @ G @ P + Q, "fro"))


def lyapunov_residual(X: np.ndarray, A: np.ndarray, C: np.ndarray) -> float:
    """Frobenius norm of ``X A + A' X + C``."""
    return float(np.linalg.norm(X @ A + A.T @ X + C, "fro"))


@dataclass
class RiccatiSolution:
    """Stabilizing CARE solution plus the diagnostics downstream code checks.

    Attributes
    ----------
    P : ndarray
        Symmetric stabilizing solution (explicitly symmetrized).
    residual_norm : float
        Frobenius norm of the equation residual at ``P``.
    closed_loop_eigs : ndarray
        Eigenvalues of ``A - G P``; all must lie strictly in the open left
        half plane for the solution to be accepted.
    min_eig_P : float
        Smallest eigenvalue of ``P``; positive when the cost weight is
        detectable and definite, zero for degenerate (e.g. zero-cost) cases.
    """

    P: np.ndarray
    residual_norm: float
    closed_loop_eigs: np.ndarray
    min_eig_P: float


@dataclass
class LyapunovSolution:
    """Solution of ``X A + A' X + C = 0`` with its residual norm."""

    X: np.ndarray
    residual_norm: float


@dataclass
class StabilizabilityReport:
    """PBH rank-test outcome.

    ``failing`` lists ``(eigenvalue, rank)`` pairs for every eigenvalue with
    nonnegative real part at which ``[A - lambda I, B]`` lost rank.
    """

    ok: bool
    n: int
    eigenvalues: np.ndarray
    failing: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def check_stabilizability(A: np.ndarray, B: np.ndarray) -> StabilizabilityReport:
    """PBH test: every unstable mode of ``A`` must be reachable through ``B``.

    For each eigenvalue ``lambda`` of ``A`` with ``Re(lambda) >= 0`` the test
    requires ``rank([A - lambda I, B]) == n``. Stable modes need no control
    authority, so they are skipped.

    Parameters
    ----------
    A : (n, n) array_like
    B : (n, m) array_like

    Returns
    -------
    StabilizabilityReport
        Truthy iff the pair is stabilizable; failing eigenvalues recorded.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError(f"nonconformable shapes {A.shape} and {B.shape}")

    eigs = np.linalg.eigvals(A)
    report = StabilizabilityReport(ok=True, n=n, eigenvalues=eigs)
    eye = np.eye(n)
    for lam in eigs:
        if lam.real < 0.0:
            continue
        pencil = np.hstack([A - lam * eye, B]).astype(complex)
        rank = np.linalg.matrix_rank(pencil)
        if rank < n:
            report.ok = False
            report.failing.append((complex(lam), int(rank)))
    return report


def check_detectability(A: np.ndarray, C: np.ndarray) -> StabilizabilityReport:
    """Detectability of ``(A, C)``, checked as stabilizability of ``(A', C')``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    return check_stabilizability(np.asarray(A, dtype=float).T, C.T)


def _sqrt_psd(Q: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition (negatives clipped)."""
    w, V = np.linalg.eigh(_symmetrize(Q))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def _newton_kleinman(A, G, Q, P, max_iter=5):
    """Polish a CARE solution by Newton-Kleinman iteration.

    Each step solves the Lyapunov equation for the closed loop at the current
    iterate. Returns the iterate with the smallest residual seen; never makes
    the seed worse.
    """
    best = P
    best_res = care_residual(P, A, G, Q)
    for _ in range(max_iter):
        Ak = A - G @ best
        if np.max(np.linalg.eigvals(Ak).real) >= 0.0:
            break
        try:
            step = solve_lyapunov(Ak, Q + best @ G @ best, method="bartels_stewart")
        except SingularOperator:
            break
        cand = _symmetrize(step.X)
        res = care_residual(cand, A, G, Q)
        if res >= best_res:
            break
        best, best_res = cand, res
    return best, best_res


def solve_care(
    A: np.ndarray,
    G: np.ndarray,
    Q: np.ndarray,
    check: bool = True,
) -> RiccatiSolution:
    """Solve ``P A + A' P - P G P + Q = 0`` for the stabilizing ``P``.

    The primary algorithm is the ordered real Schur decomposition of the
    Hamiltonian matrix ``[[A, -G], [-Q, -A']]``: the basis of its stable
    invariant subspace ``[U1; U2]`` yields ``P = U2 U1^{-1}`` [1]_. The Schur
    solution is then polished by a few Newton-Kleinman steps [3]_ whenever
    that reduces the residual.

    Parameters
    ----------
    A : (n, n) array_like
        Open-loop coefficient matrix.
    G : (n, n) array_like
        Symmetric PSD control-weighting map, typically ``g R^{-1} g'``.
    Q : (n, n) array_like
        Symmetric PSD state cost.
    check : bool
        Run the PBH stabilizability/detectability preconditions. Disable only
        inside hot loops that have already vetted the model.

    Returns
    -------
    RiccatiSolution
        With ``A - G P`` strictly Hurwitz and residual at most ``1e-8``
        relative to the magnitude of the equation's terms. On well-scaled
        problems (moderate ``P``) that is ``1e-8 * max(1, ||Q||_F)``.

    Raises
    ------
    NoStabilizingSolution
        Stable subspace has wrong dimension, the pair fails PBH, the closed
        loop is not Hurwitz, or ``P`` has a negative eigenvalue.
    IllConditioned
        Subspace basis block condition exceeds 1e12, or the residual stays
        above tolerance; at a visited state this flags a bad factorization.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    if not (A.shape == G.shape == Q.shape == (n, n)):
        raise ValueError("A, G, Q must share one square shape")
    if not np.all(np.isfinite(A)):
        raise ValueError("A contains non-finite entries")
    G = _symmetrize(G)
    Q = _symmetrize(Q)

    if check:
        stab = check_stabilizability(A, G)
        if not stab:
            raise NoStabilizingSolution(f"(A, G) not stabilizable: {stab.failing}")
        det = check_detectability(A, _sqrt_psd(Q))
        if not det:
            raise NoStabilizingSolution(f"(A, Q^1/2) not detectable: {det.failing}")

    H = np.block([[A, -G], [-Q, -A.T]])
    # Diagonal balancing sharpens the Schur vectors; the similarity is
    # undone on the subspace basis, so the extracted P is unaffected
    # analytically but much better conditioned numerically.
    Hb, D = scipy.linalg.matrix_balance(H, permute=False)
    T, Z, sdim = scipy.linalg.schur(Hb, output="real", sort="lhp")
    if sdim != n:
        raise NoStabilizingSolution(
            f"stable invariant subspace has dimension {sdim}, expected {n}"
        )
    basis = D @ Z[:, :n]
    U1 = basis[:n, :]
    U2 = basis[n:, :]
    cond = np.linalg.cond(U1)
    if not np.isfinite(cond) or cond > SUBSPACE_COND_MAX:
        raise IllConditioned(f"subspace basis block condition {cond:.3e}")
    P = _symmetrize(np.linalg.solve(U1.T, U2.T).T)

    residual = care_residual(P, A, G, Q)
    # Backward-error tolerance: the absolute residual cannot beat machine
    # precision times the size of the equation's own terms (P G P dominates
    # when P is large), so the scale enters the bound.
    scale = max(
        1.0,
        float(np.linalg.norm(Q, "fro")),
        float(np.linalg.norm(P @ A, "fro")),
        float(np.linalg.norm(P @ G @ P, "fro")),
    )
    tol = CARE_RESIDUAL_RTOL * scale
    if residual > 0.1 * tol:
        P, residual = _newton_kleinman(A, G, Q, P)
    if residual > tol:
        raise IllConditioned(f"CARE residual {residual:.3e} exceeds tolerance {tol:.3e}")

    cl_eigs = np.linalg.eigvals(A - G @ P)
    if np.max(cl_eigs.real) >= HURWITZ_MARGIN:
        raise NoStabilizingSolution(
            f"closed loop not Hurwitz: max Re(eig) = {np.max(cl_eigs.real):.3e}"
        )
    eig_P = np.linalg.eigvalsh(P)
    min_eig = float(eig_P[0])
    if min_eig < -1e-10 * max(1.0, float(eig_P[-1])):
        raise NoStabilizingSolution(f"solution indefinite: min eig {min_eig:.3e}")

    return RiccatiSolution(
        P=P, residual_norm=residual, closed_loop_eigs=cl_eigs, min_eig_P=min_eig
    )


def _lyapunov_kron(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Kronecker-vectorized dense solve of ``X A + A' X + C = 0``.

    Column-major vectorization gives ``(A' ⊗ I + I ⊗ A') vec(X) = -vec(C)``.
    Kept as the reference backend: it is a single generic linear solve with
    no structure exploitation to get wrong.
    """
    n = A.shape[0]
    eye = np.eye(n)
    op = np.kron(A.T, eye) + np.kron(eye, A.T)
    x = np.linalg.solve(op, -C.reshape(-1, order="F"))
    return x.reshape((n, n), order="F")


def solve_lyapunov(
    A: np.ndarray,
    C: np.ndarray,
    method: str = "auto",
) -> LyapunovSolution:
    """Solve the continuous Lyapunov equation ``X A + A' X + C = 0``.

    Two backends are maintained deliberately: ``"kron"`` is the dense
    Kronecker-vectorized linear solve used as the test oracle, and
    ``"bartels_stewart"`` is the Schur-form algorithm [2]_ (via
    ``scipy.linalg.solve_sylvester``). ``"auto"`` picks the oracle for small
    systems (n <= 8) and Bartels-Stewart above that.

    Parameters
    ----------
    A : (n, n) array_like
        Must have no eigenvalue pair summing to zero (Hurwitz suffices).
    C : (n, n) array_like
        Right-hand side; symmetry of ``C`` yields a symmetric ``X``.
    method : {"auto", "kron", "bartels_stewart"}

    Raises
    ------
    SingularOperator
        An eigenvalue pair of ``A`` sums to (numerically) zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or C.shape != (n, n):
        raise ValueError("A and C must be square with equal shape")

    eigs = np.linalg.eigvals(A)
    pair_sums = np.abs(eigs[:, None] + eigs[None, :])
    scale = max(1.0, float(np.max(np.abs(eigs))))
    if np.min(pair_sums) < 1e-12 * scale:
        raise SingularOperator(
            f"eigenvalue pair sums to {np.min(pair_sums):.3e}; operator singular"
        )

    if method == "auto":
        method = "kron" if n <= 8 else "bartels_stewart"
    if method == "kron":
        X = _lyapunov_kron(A, C)
    elif method == "bartels_stewart":
        # A' X + X A = -C  as a Sylvester equation.
        X = scipy.linalg.solve_sylvester(A.T, A, -C)
    else:
        raise ValueError(f"unknown method {method!r}")

    return LyapunovSolution(X=X, residual_norm=lyapunov_residual(X, A, C))
