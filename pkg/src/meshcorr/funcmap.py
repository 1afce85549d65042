"""Regularized functional-map optimization and point-map recovery.

The spectral map C (k x k) is found by minimizing

    |CF - G|^2                                   data term
  + alpha |Lam_N C - C Lam_M|^2                  isometry (Laplacian commutativity)
  + beta  sum_p |C X_p - Y_p C|^2                pointwise-product commutativity
  + w_entropy * entropy(clamp(Pi, 0, 1))         sparsity of the soft map
  + w_sum * soft-assignment row/column sums      Pi rows -> 1, columns -> n_N/n_M

with Pi = Phi_N C Phi_M^+ (rows index target vertices, columns source
vertices; match(j) is the row-argmax). All gradients are analytic; the
clamp contributes zero gradient outside (0, 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import ArgumentError, NumericError
from .spectral import SpectralBasis

EPS_LOG = 1e-12
MAX_BETA_CHANNELS = 64
ENTROPY_F32_CUTOFF = 1_000_000  # entries of the dense map matrix

DEFAULT_ALPHA = 1e-2
DEFAULT_BETA = 1e-4
DEFAULT_W_ENTROPY = 1e-5
DEFAULT_W_SUM = 1e-3


@dataclass(frozen=True)
class FmapWeights:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    w_entropy: float = DEFAULT_W_ENTROPY
    w_sum: float = DEFAULT_W_SUM

    def __post_init__(self):
        for name in ("alpha", "beta", "w_entropy", "w_sum"):
            if getattr(self, name) < 0:
                raise ArgumentError(f"{name} must be >= 0")

    def as_dict(self):
        return {"alpha": self.alpha, "beta": self.beta,
                "w_entropy": self.w_entropy, "w_sum": self.w_sum}


@dataclass(frozen=True)
class FmapProblem:
    basis_M: SpectralBasis
    basis_N: SpectralBasis
    F: np.ndarray                    # (k, d) spectral source features
    G: np.ndarray                    # (k, d) spectral target features
    mult_ops_M: tuple                # per-channel (k, k) operators X_p
    mult_ops_N: tuple                # per-channel (k, k) operators Y_p
    weights: FmapWeights = field(default_factory=FmapWeights)

    def __post_init__(self):
        k = self.basis_M.k
        if self.basis_N.k != k:
            raise ArgumentError("bases must share the same k")
        if self.F.shape[0] != k or self.G.shape[0] != k:
            raise ArgumentError("spectral features must have k rows")
        if self.F.shape[1] != self.G.shape[1]:
            raise ArgumentError("F and G must share the feature dimension")
        if len(self.mult_ops_M) != len(self.mult_ops_N):
            raise ArgumentError("operator lists must have equal length")

    @property
    def k(self) -> int:
        return self.basis_M.k

    @property
    def n_M(self) -> int:
        return self.basis_M.n

    @property
    def n_N(self) -> int:
        return self.basis_N.n


@dataclass(frozen=True)
class FunctionalMap:
    C: np.ndarray
    converged: bool
    final_objective: float
    iterations: int


@dataclass(frozen=True)
class PointMap:
    target_to_source: np.ndarray     # (n_N,) source index per target vertex
    confidence: np.ndarray           # (n_N,) selected clamped Pi entries
    pi_dense: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.target_to_source)


@dataclass(frozen=True)
class PartialSolution:
    C: np.ndarray
    eta: np.ndarray                  # (n_N,) membership mask in [0, 1]
    matched_area_fraction: float
    objective: float
    rounds: int


def multiplication_operator(basis: SpectralBasis, channel) -> np.ndarray:
    """Spectral pointwise-multiplication operator Phi^+ Diag(ch) Phi."""
    channel = np.asarray(channel, dtype=np.float64)
    if channel.shape != (basis.n,):
        raise ArgumentError(
            f"channel length {channel.shape} != vertex count {basis.n}")
    weighted = basis.phi * (basis.areas.areas * channel)[:, None]
    return basis.phi.T @ weighted


def build_problem(basis_M: SpectralBasis, basis_N: SpectralBasis,
                  f, g, weights: FmapWeights | None = None,
                  reduce_channels: bool = True) -> FmapProblem:
    """Assemble an FmapProblem from per-vertex features.

    For d > MAX_BETA_CHANNELS the commutativity operators are built on
    the top principal directions of the stacked features (cost control;
    the data term always keeps the full dimension).
    """
    f = np.atleast_2d(np.asarray(getattr(f, "values", f), dtype=np.float64))
    g = np.atleast_2d(np.asarray(getattr(g, "values", g), dtype=np.float64))
    if f.shape[0] != basis_M.n:
        raise ArgumentError(f"source features rows {f.shape[0]} != {basis_M.n}")
    if g.shape[0] != basis_N.n:
        raise ArgumentError(f"target features rows {g.shape[0]} != {basis_N.n}")
    if f.shape[1] != g.shape[1]:
        raise ArgumentError("feature dimensions differ between meshes")
    weights = weights or FmapWeights()

    F = basis_M.pinv() @ f
    G = basis_N.pinv() @ g

    fr, gr = f, g
    if reduce_channels and f.shape[1] > MAX_BETA_CHANNELS:
        stacked = np.vstack([f, g])
        stacked = stacked - stacked.mean(axis=0)
        _, _, vt = np.linalg.svd(stacked, full_matrices=False)
        basis_dirs = vt[:MAX_BETA_CHANNELS].T
        fr, gr = f @ basis_dirs, g @ basis_dirs
    ops_M = tuple(multiplication_operator(basis_M, fr[:, p])
                  for p in range(fr.shape[1]))
    ops_N = tuple(multiplication_operator(basis_N, gr[:, p])
                  for p in range(gr.shape[1]))
    return FmapProblem(basis_M, basis_N, F, G, ops_M, ops_N, weights)


def _pi_terms(C, problem):
    """Entropy and row/column-sum penalties of Pi plus their gradients
    with respect to C. The dense Pi is only materialized when the
    entropy weight is active."""
    w = problem.weights
    bm, bn = problem.basis_M, problem.basis_N
    a_m = bm.areas.areas
    value = 0.0
    grad_pi_proj = np.zeros((problem.k, problem.k))

    if w.w_entropy > 0.0:
        # The dense map matrix has n_N * n_M entries; above a size cutoff
        # single precision keeps this block fast without hurting the
        # solver (its gradient contribution is orders of magnitude above
        # float32 roundoff). Small problems stay in double precision.
        dt = np.float32 if problem.n_N * problem.n_M > ENTROPY_F32_CUTOFF \
            else np.float64
        phi_n = bn.phi.astype(dt, copy=False)
        pinv_m = (bm.phi.T * a_m).astype(dt, copy=False)  # (k, n_M)
        pi = (phi_n @ C.astype(dt, copy=False)) @ pinv_m  # (n_N, n_M)
        interior = (pi > 0.0) & (pi < 1.0)
        np.clip(pi, 0.0, 1.0, out=pi)
        logc = np.log(pi + dt(EPS_LOG))
        value += w.w_entropy * float(-np.dot(pi.ravel(), logc.ravel()))
        # d/dPi of -(p log(p+eps)) with zero subgradient outside (0, 1)
        quot = np.divide(pi, pi + dt(EPS_LOG), out=pi)
        logc += quot
        np.negative(logc, out=logc)
        logc *= interior
        grad_pi_proj += w.w_entropy * (phi_n.T @ logc @ pinv_m.T)

    if w.w_sum > 0.0:
        # row sums Pi 1 = Phi_N C (Phi_M^T a_M); column sums via transpose
        s = bm.phi.T @ a_m                            # (k,)
        t = bn.phi.sum(axis=0)                        # (k,)
        rows = bn.phi @ (C @ s) - 1.0                 # (n_N,)
        cols = (t @ C) @ (bm.phi.T * a_m) - problem.n_N / problem.n_M
        value += w.w_sum * float((rows ** 2).sum() + (cols ** 2).sum())
        grad_rows = 2.0 * np.outer(bn.phi.T @ rows, s)
        grad_cols = 2.0 * np.outer(t, (bm.phi * a_m[:, None]).T @ cols)
        grad_pi_proj += w.w_sum * (grad_rows + grad_cols)

    return value, grad_pi_proj


def fmap_objective(C, problem: FmapProblem):
    """Objective value and exact analytic gradient at C."""
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (problem.k, problem.k):
        raise ArgumentError(f"C must be {problem.k}x{problem.k}")
    w = problem.weights

    resid = C @ problem.F - problem.G
    value = float((resid ** 2).sum())
    grad = 2.0 * resid @ problem.F.T

    if w.alpha > 0.0:
        lam_n = problem.basis_N.lam[:, None]
        lam_m = problem.basis_M.lam[None, :]
        diff = lam_n - lam_m
        iso = diff * C
        value += w.alpha * float((iso ** 2).sum())
        grad += 2.0 * w.alpha * diff * iso

    if w.beta > 0.0 and problem.mult_ops_M:
        acc = np.zeros_like(C)
        total = 0.0
        for X, Y in zip(problem.mult_ops_M, problem.mult_ops_N):
            comm = C @ X - Y @ C
            total += float((comm ** 2).sum())
            acc += comm @ X.T - Y.T @ comm
        value += w.beta * total
        grad += 2.0 * w.beta * acc

    pv, pg = _pi_terms(C, problem)
    value += pv
    grad += pg
    return value, grad


def solve_fmap(problem: FmapProblem, max_iter: int = 500,
               tol: float = 1e-7, C0: np.ndarray | None = None) -> FunctionalMap:
    """Minimize the regularized objective with limited-memory
    quasi-Newton (history 30) from a zero-initialized C."""
    k = problem.k
    x0 = np.zeros(k * k) if C0 is None else np.asarray(C0, float).ravel().copy()
    state = {"last_valid": x0.copy(), "x": None, "f": None, "g": None}

    def fun(x):
        value, grad = fmap_objective(x.reshape(k, k), problem)
        if np.isfinite(value):
            state["last_valid"] = x.copy()
        state["x"], state["f"], state["g"] = x.copy(), value, grad.ravel()
        return value, state["g"]

    def scale_aware_stop(intermediate_result):
        # stop once the gradient norm falls below tol * (1 + |value|);
        # the line search ends at the accepted point, so the cached
        # gradient normally belongs to this iterate
        if np.array_equal(intermediate_result.x, state["x"]):
            f, g = state["f"], state["g"]
        else:
            f, g = fun(intermediate_result.x)
        if float(np.linalg.norm(g)) <= tol * (1.0 + abs(float(f))):
            state["tol_met"] = True
            raise StopIteration

    res = scipy.optimize.minimize(
        fun, x0, jac=True, method="L-BFGS-B", callback=scale_aware_stop,
        options={"maxiter": max_iter, "maxcor": 30,
                 "gtol": tol, "ftol": 1e-12})
    if not np.isfinite(res.fun):
        raise NumericError(
            "objective became non-finite; last valid C available",
        )
    converged = bool(res.success) or state.get("tol_met", False)
    return FunctionalMap(res.x.reshape(k, k), converged,
                         float(res.fun), int(res.nit))


def recover_pointmap(C, basis_M: SpectralBasis, basis_N: SpectralBasis,
                     keep_dense: bool = False,
                     method: str = "argmax") -> PointMap:
    """Dense vertex map from a spectral map.

    ``argmax`` picks the row-argmax of the clamped Pi (ties break to the
    smallest index); ``nearest`` matches rows of Phi_N C to rows of
    Phi_M in the spectral embedding.
    """
    C = np.asarray(getattr(C, "C", C), dtype=np.float64)
    if C.shape != (basis_M.k, basis_N.k):
        raise ArgumentError("C is not square in the shared basis size")
    if method == "nearest":
        emb_n = basis_N.phi @ C                      # (n_N, k)
        emb_m = basis_M.phi                          # (n_M, k)
        d2 = ((emb_n ** 2).sum(axis=1)[:, None]
              - 2.0 * emb_n @ emb_m.T
              + (emb_m ** 2).sum(axis=1)[None, :])
        match = np.argmin(d2, axis=1)
        pi = basis_N.phi @ C @ basis_M.pinv() if keep_dense else None
        conf = (np.clip(pi, 0.0, 1.0)[np.arange(len(match)), match]
                if pi is not None else np.zeros(len(match)))
        return PointMap(match, conf, pi)
    if method != "argmax":
        raise ArgumentError(f"unknown recovery method '{method}'")

    pi = basis_N.phi @ C @ basis_M.pinv()
    clamped = np.clip(pi, 0.0, 1.0)
    match = np.argmax(clamped, axis=1)
    conf = clamped[np.arange(clamped.shape[0]), match]
    return PointMap(match, conf, pi if keep_dense else None)


def fmap_from_pointmap(target_to_source, basis_M: SpectralBasis,
                       basis_N: SpectralBasis) -> np.ndarray:
    """Spectral map of a dense vertex map: C = Phi_N^+ Pi Phi_M."""
    idx = np.asarray(target_to_source, dtype=np.int64)
    if idx.shape != (basis_N.n,):
        raise ArgumentError(
            f"map length {idx.shape} != target vertex count {basis_N.n}")
    if idx.size and (idx.min() < 0 or idx.max() >= basis_M.n):
        raise ArgumentError("map index out of source range")
    # Pi is the binary matrix with Pi[j, match(j)] = 1
    return (basis_N.phi.T * basis_N.areas.areas) @ basis_M.phi[idx]


# ------------------------------------------------------- partial maps

DEFAULT_W_AREA = 1.0
DEFAULT_W_MS = 1e-2
DEFAULT_W_ETA = 1e-3


def solve_partial(problem: FmapProblem, g,
                  edges: np.ndarray,
                  w_area: float = DEFAULT_W_AREA,
                  w_ms: float = DEFAULT_W_MS,
                  w_eta: float = DEFAULT_W_ETA,
                  source_area: float | None = None,
                  max_rounds: int = 20,
                  eta_steps: int = 40,
                  tol: float = 1e-6,
                  solver_opts: dict | None = None) -> PartialSolution:
    """Partial source vs full target matching.

    Alternates between solving C at fixed mask eta (target features
    replaced by Diag(eta) g) and projected gradient steps on eta for the
    masked data term plus area preservation, boundary smoothness, and
    mask entropy. ``edges`` are the target-mesh edges used by the
    smoothness term.
    """
    import warnings

    g = np.atleast_2d(np.asarray(getattr(g, "values", g), dtype=np.float64))
    bn = problem.basis_N
    if g.shape[0] != bn.n:
        raise ArgumentError("g rows must match the target vertex count")
    a_n = bn.areas.areas
    area_n = bn.areas.total
    area_m = problem.basis_M.areas.total if source_area is None else source_area
    if area_m > area_n:
        warnings.warn("source area exceeds target area; mask will saturate")

    edges = np.asarray(edges, dtype=np.int64)
    ew = 0.5 * (a_n[edges[:, 0]] + a_n[edges[:, 1]])  # area-weighted edges

    eta = np.full(bn.n, min(1.0, area_m / area_n))
    pinv_n = bn.phi.T * a_n
    solver_opts = solver_opts or {}

    def eta_objective(eta_vec, C):
        G_eta = pinv_n @ (eta_vec[:, None] * g)
        resid = C @ problem.F - G_eta
        data = float((resid ** 2).sum())
        area_pen = w_area * (float(eta_vec @ a_n) - area_m) ** 2
        d = eta_vec[edges[:, 0]] - eta_vec[edges[:, 1]]
        ms = w_ms * float(ew @ (d ** 2))
        ent = w_eta * float(-(eta_vec * np.log(eta_vec + EPS_LOG)).sum())
        return data, area_pen + ms + ent, resid

    def eta_gradient(eta_vec, C, resid):
        # d/d eta of |CF - Phi_N^+ Diag(eta) g|^2
        grad = -2.0 * np.einsum("nd,nd->n",
                                (a_n[:, None] * bn.phi) @ resid, g)
        grad += 2.0 * w_area * (float(eta_vec @ a_n) - area_m) * a_n
        d = eta_vec[edges[:, 0]] - eta_vec[edges[:, 1]]
        lap = np.zeros_like(eta_vec)
        np.add.at(lap, edges[:, 0], 2.0 * w_ms * ew * d)
        np.add.at(lap, edges[:, 1], -2.0 * w_ms * ew * d)
        grad += lap
        grad += -w_eta * (np.log(eta_vec + EPS_LOG)
                          + eta_vec / (eta_vec + EPS_LOG))
        return grad

    prev = np.inf
    C = np.zeros((problem.k, problem.k))
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        masked = FmapProblem(problem.basis_M, problem.basis_N, problem.F,
                             pinv_n @ (eta[:, None] * g),
                             problem.mult_ops_M, problem.mult_ops_N,
                             problem.weights)
        fm = solve_fmap(masked, C0=C, **solver_opts)
        C = fm.C

        # projected gradient with backtracking on the joint eta objective
        data, reg, resid = eta_objective(eta, C)
        current = data + reg
        step = 1.0
        for _ in range(eta_steps):
            grad = eta_gradient(eta, C, resid)
            while step > 1e-12:
                trial = np.clip(eta - step * grad, 0.0, 1.0)
                d2, r2, resid2 = eta_objective(trial, C)
                if d2 + r2 < current:
                    eta, current, resid = trial, d2 + r2, resid2
                    step *= 1.5
                    break
                step *= 0.5
            else:
                break

        total = current + fm.final_objective - data  # avoid double counting
        if abs(prev - total) <= tol * max(1.0, abs(total)):
            prev = total
            break
        prev = total

    fraction = float(eta @ a_n) / area_n
    return PartialSolution(C, eta, fraction, float(prev), rounds)


# ----------------------------------------------------------------- io

def save_map(path, fmap: FunctionalMap, pmap: PointMap,
             weights: FmapWeights):
    doc = {
        "k": int(fmap.C.shape[0]),
        "C": [[float(x) for x in row] for row in fmap.C],
        "target_to_source": [int(i) for i in pmap.target_to_source],
        "confidence": [float(c) for c in pmap.confidence],
        "objective": float(fmap.final_objective),
        "weights": weights.as_dict(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_map(path):
    with open(path, "r") as fh:
        doc = json.load(fh)
    C = np.asarray(doc["C"], dtype=np.float64)
    pmap = PointMap(np.asarray(doc["target_to_source"], dtype=np.int64),
                    np.asarray(doc["confidence"], dtype=np.float64))
    fmap = FunctionalMap(C, True, float(doc["objective"]), 0)
    return fmap, pmap, doc.get("weights", {})
