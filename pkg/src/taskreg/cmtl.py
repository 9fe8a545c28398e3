"""Clustered multi-task regression via a convex spectral relaxation.

Tasks are coupled through a symmetric matrix C that relaxes a hard
assignment of tasks to K clusters: C must satisfy tr(C) = K with
eigenvalues in [0, 1] (the convex hull of normalized cluster-indicator
outer products). The smooth objective is the per-task mean squared loss
plus rho1*eta*(1+eta) * tr(W^T (eta*I + C)^{-1} W) with eta = rho2/rho1;
the inverse acts on the task dimension, pulling the rows of W toward a
low-dimensional task subspace encoded by C. Hard clusters are recovered
afterwards by seeded k-means on the top-K eigenvectors of C.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import MultiTaskDataset, ScalingParams
from .fista import ProximalProblem, SolverConfig, SolveTrace, solve

_SYMMETRY_TOL = 1e-10
_EIGENVALUE_TOL = 1e-8
_TRACE_TOL = 1e-8


@dataclass(frozen=True)
class CmtlParams:
    """Hyperparameters of the clustered model.

    ``eta`` is the derived ratio rho2/rho1. The rho1 = 0 boundary is
    accepted only together with rho2 = 0 (regularizer fully off, eta = 0);
    it exists for gradient tests, not for fitting.
    """

    rho1: float
    rho2: float
    k: int

    def __post_init__(self):
        if self.rho1 < 0 or self.rho2 < 0:
            raise ValueError(f"rho1 and rho2 must be >= 0, got {self.rho1}, {self.rho2}")
        if self.rho1 == 0 and self.rho2 != 0:
            raise ValueError("rho1 = 0 requires rho2 = 0 (eta would be infinite)")
        if not isinstance(self.k, int) or isinstance(self.k, bool):
            raise ValueError(f"k must be an integer, got {self.k!r}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def eta(self) -> float:
        return self.rho2 / self.rho1 if self.rho1 > 0 else 0.0

    @property
    def coupling(self) -> float:
        """The regularizer weight rho1 * eta * (1 + eta)."""
        return self.rho1 * self.eta * (1.0 + self.eta)


@dataclass(frozen=True)
class RelaxedClusterMatrix:
    """A T x T matrix inside the relaxed cluster feasible set.

    Construction validates symmetry, the eigenvalue box [0, 1], and
    tr = k, all up to small numerical tolerances.
    """

    matrix: np.ndarray
    k: int

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"cluster matrix must be square, got shape {m.shape}")
        t = m.shape[0]
        if not 1 <= self.k <= t:
            raise ValueError(f"k must be in [1, {t}], got {self.k}")
        asym = float(np.abs(m - m.T).max())
        if asym > _SYMMETRY_TOL:
            raise ValueError(f"cluster matrix asymmetric by {asym:.3g}")
        trace_err = abs(float(np.trace(m)) - self.k)
        if trace_err > _TRACE_TOL:
            raise ValueError(f"trace differs from k={self.k} by {trace_err:.3g}")
        eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
        if eigs.min() < -_EIGENVALUE_TOL or eigs.max() > 1.0 + _EIGENVALUE_TOL:
            raise ValueError(
                f"eigenvalues [{eigs.min():.3g}, {eigs.max():.3g}] leave [0, 1]"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_tasks(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ClusteredModel:
    """Fitted clustered multi-task model."""

    weights: np.ndarray
    cluster_matrix: RelaxedClusterMatrix
    params: CmtlParams
    assignments: tuple[int, ...]
    kmeans_seed: int
    feature_names: tuple[str, ...]
    task_labels: tuple[str, ...]
    scaling: ScalingParams | None = None
    trace: SolveTrace | None = None
    model_type: str = "cmtl"
    intercept: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {w.shape}")
        t, j = w.shape
        if len(self.task_labels) != t or len(self.feature_names) != j:
            raise ValueError("weights shape inconsistent with names/labels")
        if self.cluster_matrix.n_tasks != t:
            raise ValueError("cluster matrix size does not match task count")
        assignments = tuple(int(a) for a in self.assignments)
        if len(assignments) != t:
            raise ValueError(f"need {t} assignments, got {len(assignments)}")
        used = sorted(set(assignments))
        if used != list(range(len(used))):
            raise ValueError(f"cluster ids must be 0..{len(used) - 1} contiguous, got {used}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "assignments", assignments)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "task_labels", tuple(self.task_labels))
        intercept = self.intercept
        intercept = np.zeros(t) if intercept is None else np.array(intercept, dtype=np.float64)
        intercept.setflags(write=False)
        object.__setattr__(self, "intercept", intercept)

    @property
    def n_tasks(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def _as_matrix(c) -> np.ndarray:
    if isinstance(c, RelaxedClusterMatrix):
        return c.matrix
    return np.asarray(c, dtype=np.float64)


def _coupling_eig(c: np.ndarray, eta: float):
    """Eigendecomposition of eta*I + sym(C); eigenvalues clipped check."""
    sym = 0.5 * (c + c.T)
    vals, vecs = np.linalg.eigh(sym)
    return vals + eta, vecs


def _coupling_solve(c: np.ndarray, eta: float, rhs: np.ndarray) -> np.ndarray:
    """(eta*I + C)^{-1} @ rhs via the symmetric eigendecomposition."""
    vals, vecs = _coupling_eig(c, eta)
    if vals.min() <= 0:
        raise ValueError(
            f"eta*I + C is not positive definite (min eigenvalue {vals.min():.3g})"
        )
    return vecs @ ((vecs.T @ rhs) / vals[:, None])


def cmtl_loss(weights: np.ndarray, ds: MultiTaskDataset) -> float:
    """Sum over tasks of the per-task mean squared residual (no half)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (ds.n_tasks, ds.n_features):
        raise ValueError(
            f"weights shape {weights.shape} does not match dataset "
            f"{(ds.n_tasks, ds.n_features)}"
        )
    total = 0.0
    for t, task in enumerate(ds.tasks):
        r = task.X @ weights[t] - task.Y
        total += float(r @ r) / task.n
    return total


def cmtl_regularizer(weights: np.ndarray, c, params: CmtlParams) -> float:
    """rho1*eta*(1+eta) * tr(W^T (eta*I + C)^{-1} W), inverse on tasks."""
    weights = np.asarray(weights, dtype=np.float64)
    c = _as_matrix(c)
    if c.shape != (weights.shape[0], weights.shape[0]):
        raise ValueError(
            f"C has shape {c.shape}, expected ({weights.shape[0]}, {weights.shape[0]})"
        )
    if params.coupling == 0:
        return 0.0
    solved = _coupling_solve(c, params.eta, weights)
    return params.coupling * float(np.vdot(weights, solved))


def cmtl_objective(weights: np.ndarray, c, ds: MultiTaskDataset, params: CmtlParams) -> float:
    return cmtl_loss(weights, ds) + cmtl_regularizer(weights, c, params)


def grad_phi(weights: np.ndarray, c, ds: MultiTaskDataset, params: CmtlParams) -> np.ndarray:
    """Gradient of cmtl_loss + cmtl_regularizer in the weights."""
    weights = np.asarray(weights, dtype=np.float64)
    c = _as_matrix(c)
    g = np.empty_like(weights)
    for t, task in enumerate(ds.tasks):
        r = task.X @ weights[t] - task.Y
        g[t] = (2.0 / task.n) * (task.X.T @ r)
    if params.coupling != 0:
        g += 2.0 * params.coupling * _coupling_solve(c, params.eta, weights)
    return g


def _regularizer_grad_c(weights: np.ndarray, c: np.ndarray, params: CmtlParams) -> np.ndarray:
    """Gradient of the regularizer in C: -coupling * Minv W W^T Minv."""
    solved = _coupling_solve(c, params.eta, weights)
    grad = -params.coupling * (solved @ solved.T)
    return 0.5 * (grad + grad.T)


def grad_c_step(phi_s: np.ndarray, c_s: np.ndarray, params: CmtlParams, gamma: float) -> np.ndarray:
    """The pre-projection gradient step in C from the search point.

    Returns C_S + (rho1*eta*(1+eta)/gamma) * Minv Phi_S Phi_S^T Minv with
    Minv = (eta*I + C_S)^{-1}, symmetrized. This is the dimensionally
    consistent derivative of the trace regularizer; its sign and scale are
    pinned by finite-difference tests.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    phi_s = np.asarray(phi_s, dtype=np.float64)
    c_s = np.asarray(c_s, dtype=np.float64)
    if c_s.ndim != 2 or c_s.shape[0] != c_s.shape[1]:
        raise ValueError(f"C_S must be square, got shape {c_s.shape}")
    asym = float(np.abs(c_s - c_s.T).max())
    if asym > 1e-8:
        raise ValueError(f"C_S asymmetric by {asym:.3g}")
    if params.coupling == 0 or not phi_s.any():
        return c_s.copy()
    step = c_s - (1.0 / gamma) * _regularizer_grad_c(phi_s, c_s, params)
    return 0.5 * (step + step.T)


def capped_simplex_project(sigma_hat: np.ndarray, k: int) -> np.ndarray:
    """Project a vector onto {sigma : sum = k, 0 <= sigma_i <= 1}.

    Solved by bisection on the shift theta in sigma_i = clip(sigma_hat_i
    - theta, 0, 1); the clipped sum is continuous and non-increasing in
    theta, so the root bracket [min-1, max] always closes.
    """
    sigma_hat = np.asarray(sigma_hat, dtype=np.float64).ravel()
    t = sigma_hat.size
    if t == 0:
        raise ValueError("empty input")
    if not 1 <= k <= t:
        raise ValueError(f"k must be in [1, {t}], got {k}")
    if k == t:
        return np.ones(t)

    lo = float(sigma_hat.min()) - 1.0
    hi = float(sigma_hat.max())
    for _ in range(128):
        mid = 0.5 * (lo + hi)
        if np.clip(sigma_hat - mid, 0.0, 1.0).sum() > k:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    return np.clip(sigma_hat - 0.5 * (lo + hi), 0.0, 1.0)


def project_spectral(g_c: np.ndarray, k: int) -> RelaxedClusterMatrix:
    """Project a symmetric matrix onto the relaxed cluster feasible set.

    Symmetrizes, eigendecomposes, projects the spectrum onto the capped
    simplex, and rebuilds with the same eigenvectors.
    """
    g_c = np.asarray(g_c, dtype=np.float64)
    if g_c.ndim != 2 or g_c.shape[0] != g_c.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g_c.shape}")
    t = g_c.shape[0]
    if not 1 <= k < t:
        raise ValueError(f"k must be in [1, {t - 1}], got {k}")
    sym = 0.5 * (g_c + g_c.T)
    vals, vecs = np.linalg.eigh(sym)
    projected = capped_simplex_project(vals, k)
    c = (vecs * projected) @ vecs.T
    return RelaxedClusterMatrix(matrix=0.5 * (c + c.T), k=k)


def fit_cmtl(
    ds: MultiTaskDataset,
    params: CmtlParams,
    cfg: SolverConfig | None = None,
    *,
    kmeans_seed: int = 0,
    scaling: ScalingParams | None = None,
    on_project=None,
) -> ClusteredModel:
    """Jointly fit weights and the relaxed cluster matrix.

    Runs the accelerated proximal solver on the stacked variable [W | C]
    (shape T x (J + T)): the smooth part is cmtl_loss + cmtl_regularizer,
    the prox leaves the weight block alone and spectrally projects the C
    block, and one shared backtracked gamma serves both blocks. Starts
    from W = 0, C = (k/T) I. Hard assignments come from
    :func:`extract_clusters` with ``kmeans_seed``.

    ``on_project``, when given, is called with every
    :class:`RelaxedClusterMatrix` the projection produces (diagnostics
    hook; projections from rejected backtracking candidates included).
    """
    if params.rho1 <= 0 or params.rho2 <= 0:
        raise ValueError("fitting requires rho1 > 0 and rho2 > 0")
    n_tasks, n_features = ds.n_tasks, ds.n_features
    if not 1 <= params.k < n_tasks:
        raise ValueError(f"k must be in [1, {n_tasks - 1}], got {params.k}")
    eta = params.eta
    coupling = params.coupling
    xs = [t.X for t in ds.tasks]
    ys = [t.Y for t in ds.tasks]
    counts = [t.n for t in ds.tasks]

    def split(z):
        return z[:, :n_features], z[:, n_features:]

    def smooth_value(z):
        w, c = split(z)
        vals, vecs = _coupling_eig(c, eta)
        if vals.min() <= 1e-12:
            return math.inf
        solved = vecs @ ((vecs.T @ w) / vals[:, None])
        reg = coupling * float(np.vdot(w, solved))
        total = reg
        for t in range(n_tasks):
            r = xs[t] @ w[t] - ys[t]
            total += float(r @ r) / counts[t]
        return total

    def smooth_grad(z):
        w, c = split(z)
        vals, vecs = _coupling_eig(c, eta)
        solved = vecs @ ((vecs.T @ w) / vals[:, None])
        gw = np.empty_like(w)
        for t in range(n_tasks):
            r = xs[t] @ w[t] - ys[t]
            gw[t] = (2.0 / counts[t]) * (xs[t].T @ r)
        gw += 2.0 * coupling * solved
        gc = -coupling * (solved @ solved.T)
        gc = 0.5 * (gc + gc.T)
        return np.hstack([gw, gc])

    def prox(h, step):
        w_part, c_part = split(h)
        projected = project_spectral(c_part, params.k)
        if on_project is not None:
            on_project(projected)
        return np.hstack([w_part, projected.matrix])

    z0 = np.hstack([np.zeros((n_tasks, n_features)), (params.k / n_tasks) * np.eye(n_tasks)])
    problem = ProximalProblem(
        smooth_value=smooth_value,
        smooth_grad=smooth_grad,
        prox=prox,
        full_objective=smooth_value,
    )
    z_hat, trace = solve(problem, z0, cfg)
    w_hat, c_hat = split(z_hat)
    cluster_matrix = RelaxedClusterMatrix(matrix=0.5 * (c_hat + c_hat.T), k=params.k)
    assignments = extract_clusters(cluster_matrix, params.k, kmeans_seed)
    return ClusteredModel(
        weights=w_hat,
        cluster_matrix=cluster_matrix,
        params=params,
        assignments=assignments,
        kmeans_seed=kmeans_seed,
        feature_names=ds.feature_names,
        task_labels=ds.task_labels,
        scaling=scaling,
        trace=trace,
    )


def extract_clusters(c, k: int, seed: int) -> tuple[int, ...]:
    """Round a relaxed cluster matrix to hard task assignments.

    Embeds tasks as rows of the top-k eigenvectors of C, then runs
    k-means (k-means++ seeding, 50 restarts, one fixed PRNG). Labels are
    renumbered in first-occurrence order, so task 0 is always in cluster
    0 and outputs are permutation-equivariant for a fixed seed.
    """
    mat = _as_matrix(c)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    t = mat.shape[0]
    if not 1 <= k <= t:
        raise ValueError(f"k must be in [1, {t}], got {k}")
    _, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    embedding = vecs[:, t - k:]
    labels = _kmeans_labels(embedding, k, np.random.default_rng(seed), restarts=50)
    return _canonical_labels(labels)


def _kmeans_pp_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    dist2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = dist2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=dist2 / total))
        centers[i] = points[idx]
        dist2 = np.minimum(dist2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int = 100):
    n, k = points.shape[0], centers.shape[0]
    labels = np.full(n, -1)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        for j in range(k):
            members = new_labels == j
            if not members.any():
                # Re-seed an empty cluster with the worst-fit point.
                worst = int(d2[np.arange(n), new_labels].argmax())
                new_labels[worst] = j
                members = new_labels == j
            centers[j] = points[members].mean(axis=0)
        if (new_labels == labels).all():
            break
        labels = new_labels
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, inertia


def _kmeans_labels(points: np.ndarray, k: int, rng, restarts: int) -> np.ndarray:
    best_labels = None
    best_inertia = math.inf
    for _ in range(restarts):
        centers = _kmeans_pp_init(points, k, rng)
        labels, inertia = _lloyd(points, centers)
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    return best_labels


def _canonical_labels(labels) -> tuple[int, ...]:
    remap: dict[int, int] = {}
    out = []
    for lab in labels:
        lab = int(lab)
        if lab not in remap:
            remap[lab] = len(remap)
        out.append(remap[lab])
    return tuple(out)


def cluster_indicator(assignments) -> np.ndarray:
    """Normalized indicator O with O[t, g] = 1/sqrt(n_g) for t in group g.

    Columns are orthonormal; O O^T averages within groups, which is what
    ties the relaxed matrix C back to a hard clustering.
    """
    assignments = [int(a) for a in assignments]
    if not assignments:
        raise ValueError("empty assignment list")
    groups = sorted(set(assignments))
    if groups != list(range(len(groups))):
        raise ValueError(f"cluster ids must be 0..{len(groups) - 1} contiguous, got {groups}")
    t = len(assignments)
    out = np.zeros((t, len(groups)))
    counts = np.bincount(assignments)
    for i, g in enumerate(assignments):
        out[i, g] = 1.0 / math.sqrt(counts[g])
    return out
