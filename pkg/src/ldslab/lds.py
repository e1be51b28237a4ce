"""Linear dynamical systems, mixtures of them, and their diagnostics.

A single system with state dimension ``n``, input dimension ``p`` and
observation dimension ``m`` evolves as::

    x[t+1] = A x[t] + B u[t] + w[t]
    y[t]   = C x[t] + D u[t] + z[t]

with exogenous inputs ``u[t] ~ N(0, I_p)`` and isotropic Gaussian noise
``x[0] ~ N(0, I_n)``, ``w[t] ~ N(0, I_n)``, ``z[t] ~ N(0, I_m)``.  A
mixture draws a component index by its mixing weights and then emits one
whole trajectory from that component.

Time is 0-based throughout: a length-``l`` trajectory holds
``u[0..l-1]`` and ``y[0..l-1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, DimensionError
from .rng import substream

__all__ = [
    "LdsParams",
    "MixtureSpec",
    "Trajectory",
    "NoiseConfig",
    "WellBehavedReport",
    "simulate_trajectory",
    "draw_lds_noise",
    "simulate_from_noise",
    "closed_form_observation",
    "sample_mixture_dataset",
    "observability_matrix",
    "controllability_matrix",
    "markov_parameter",
    "markov_matrix",
    "joint_nondegeneracy_gamma",
    "well_behaved_report",
    "power_norm_check",
    "random_lds",
    "random_mixture",
]

# Relative singular-value threshold used for all rank decisions.
RANK_RTOL = 1e-10


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LdsParams:
    """Parameter matrices (a, b, c, d) of one linear dynamical system.

    Shapes: a is n-by-n, b is n-by-p, c is m-by-n, d is m-by-p.  Instances
    are immutable (arrays are write-protected) and safe to share across
    threads.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.ndim != 2:
                raise DimensionError(name, f"expected a matrix, got ndim={mat.ndim}")
            if not np.all(np.isfinite(mat)):
                raise DimensionError(name, "contains non-finite entries")
            object.__setattr__(self, name, _freeze(mat))
        n0, n1 = self.a.shape
        if n0 != n1:
            raise DimensionError("a", f"must be square, got {self.a.shape}")
        if self.b.shape[0] != n0:
            raise DimensionError("b", f"expected {n0} rows, got {self.b.shape[0]}")
        if self.c.shape[1] != n0:
            raise DimensionError("c", f"expected {n0} columns, got {self.c.shape[1]}")
        if self.d.shape != (self.c.shape[0], self.b.shape[1]):
            raise DimensionError(
                "d", f"expected shape {(self.c.shape[0], self.b.shape[1])}, got {self.d.shape}"
            )

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def p(self) -> int:
        return self.b.shape[1]

    @property
    def m(self) -> int:
        return self.c.shape[0]

    @property
    def dims(self) -> tuple:
        """(m, n, p)."""
        return (self.m, self.n, self.p)


@dataclass(frozen=True)
class MixtureSpec:
    """A k-component mixture: component systems plus mixing weights.

    Weights must be strictly positive and sum to 1 (tolerance 1e-12);
    all components must share the same (m, n, p).
    """

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1:
            raise DataError("mixture needs at least one component")
        dims = comps[0].dims
        for i, comp in enumerate(comps):
            if comp.dims != dims:
                raise DimensionError(
                    f"components[{i}]", f"dims {comp.dims} differ from {dims}"
                )
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(comps),):
            raise DataError(f"expected {len(comps)} weights, got shape {w.shape}")
        if np.any(w <= 0):
            raise DataError("mixing weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DataError(f"mixing weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def dims(self) -> tuple:
        return self.components[0].dims


@dataclass(frozen=True)
class Trajectory:
    """One observed trajectory: paired inputs u (l, p) and outputs y (l, m).

    ``label`` is the generating component index when known (simulation
    only); learners must not read it.
    """

    u: np.ndarray
    y: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if u.shape[0] != y.shape[0]:
            raise DataError(f"u has {u.shape[0]} steps but y has {y.shape[0]}")
        if u.shape[0] < 1:
            raise DataError("trajectory must have length >= 1")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise DataError("trajectory contains non-finite entries")
        object.__setattr__(self, "u", _freeze(u))
        object.__setattr__(self, "y", _freeze(y))

    def __len__(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class NoiseConfig:
    """Seed plus a single scale on the process/observation/initial noise.

    ``noise_scale`` multiplies the standard deviations of x0, w[t] and
    z[t]; inputs u[t] always have unit covariance.  ``noise_scale=1`` is
    the standard isotropic model, ``noise_scale=0`` is deterministic
    given the inputs (used by oracle tests only).
    """

    seed: int = 0
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.noise_scale < 0:
            raise DataError("noise_scale must be nonnegative")


def draw_lds_noise(dims, length, noise: NoiseConfig, rng: np.random.Generator):
    """Draw (x0, u, w, z) for one trajectory, in that fixed order.

    The draw order is part of the reproducibility contract: x0 first,
    then the full input array u (length, p), then w (length, n), then
    z (length, m), each row-major.
    """
    m, n, p = dims
    s = noise.noise_scale
    x0 = s * rng.standard_normal(n)
    u = rng.standard_normal((length, p))
    w = s * rng.standard_normal((length, n))
    z = s * rng.standard_normal((length, m))
    return x0, u, w, z


def _iterate_batch(params: LdsParams, x0, u, w, z):
    """Run the recurrence for a batch: x0 (B,n), u/w/z (B,l,·) -> y (B,l,m)."""
    batch, length = u.shape[0], u.shape[1]
    a_t, b_t, c_t, d_t = params.a.T, params.b.T, params.c.T, params.d.T
    y = np.empty((batch, length, params.m))
    x = np.array(x0, dtype=float)
    for t in range(length):
        y[:, t, :] = x @ c_t + u[:, t, :] @ d_t + z[:, t, :]
        x = x @ a_t + u[:, t, :] @ b_t + w[:, t, :]
    return y


def simulate_from_noise(params: LdsParams, x0, u, w, z, label=None) -> Trajectory:
    """Iterate the recurrences for given noise realizations."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != params.n:
        raise DimensionError("x0", f"expected length {params.n}, got {x0.shape[0]}")
    if u.shape[1] != params.p:
        raise DimensionError("u", f"expected width {params.p}, got {u.shape[1]}")
    if w.shape[1] != params.n:
        raise DimensionError("w", f"expected width {params.n}, got {w.shape[1]}")
    if z.shape[1] != params.m:
        raise DimensionError("z", f"expected width {params.m}, got {z.shape[1]}")
    y = _iterate_batch(params, x0[None, :], u[None], w[None], z[None])[0]
    return Trajectory(u=u, y=y, label=label)


def simulate_trajectory(
    params: LdsParams, length: int, noise: NoiseConfig, rng: np.random.Generator
) -> Trajectory:
    """Simulate one trajectory of the requested length.

    Deterministic given the generator state; the noise draw order is
    documented in :func:`draw_lds_noise`.
    """
    if length < 1:
        raise DataError("length must be >= 1")
    x0, u, w, z = draw_lds_noise(params.dims, length, noise, rng)
    return simulate_from_noise(params, x0, u, w, z)


def closed_form_observation(params: LdsParams, t: int, u, w, z, x0) -> np.ndarray:
    """Evaluate y[t] directly from the unrolled recurrence.

    y[t] = sum_{i=1..t} (C A^{i-1} B u[t-i] + C A^{i-1} w[t-i])
           + C A^t x0 + D u[t] + z[t]

    Independent oracle for :func:`simulate_trajectory`: it never iterates
    the state recursion.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if t < 0 or t >= u.shape[0] or t >= w.shape[0] or t >= z.shape[0]:
        raise DataError(f"index t={t} out of range for the provided sequences")
    acc = params.d @ u[t] + z[t]
    apow = np.eye(params.n)
    for i in range(1, t + 1):
        # apow == A^(i-1) on entry
        acc = acc + params.c @ (apow @ (params.b @ u[t - i] + w[t - i]))
        apow = params.a @ apow
    acc = acc + params.c @ (apow @ x0)
    return acc


def _draw_labels_and_noise(mix: MixtureSpec, n_traj, length, noise):
    m, n, p = mix.dims
    cumw = np.cumsum(mix.weights)
    labels = np.empty(n_traj, dtype=int)
    x0 = np.empty((n_traj, n))
    u = np.empty((n_traj, length, p))
    w = np.empty((n_traj, length, n))
    z = np.empty((n_traj, length, m))
    for i in range(n_traj):
        rng = substream(noise.seed, i)
        labels[i] = int(np.searchsorted(cumw, rng.random(), side="right"))
        x0[i], u[i], w[i], z[i] = draw_lds_noise((m, n, p), length, noise, rng)
    labels[labels >= mix.k] = mix.k - 1  # guard against rounding at cumw[-1]
    return labels, x0, u, w, z


def sample_mixture_dataset(
    mix: MixtureSpec, n_traj: int, length: int, noise: NoiseConfig
) -> list:
    """Draw ``n_traj`` labelled trajectories from the mixture.

    Trajectory ``i`` consumes only substream ``i`` of ``noise.seed``
    (label draw first, then the noise block), so the dataset is
    reproducible bit-for-bit at any degree of parallelism.
    """
    if n_traj < 1:
        raise DataError("n_traj must be >= 1")
    if length < 1:
        raise DataError("length must be >= 1")
    labels, x0, u, w, z = _draw_labels_and_noise(mix, n_traj, length, noise)
    y = np.empty((n_traj, length, mix.dims[0]))
    for ci, comp in enumerate(mix.components):
        idx = np.flatnonzero(labels == ci)
        if idx.size:
            y[idx] = _iterate_batch(comp, x0[idx], u[idx], w[idx], z[idx])
    return [
        Trajectory(u=u[i], y=y[i], label=int(labels[i])) for i in range(n_traj)
    ]


def observability_matrix(params: LdsParams, s: int) -> np.ndarray:
    """Stack C, CA, ..., CA^(s-1) vertically: shape (s*m, n)."""
    if s < 1:
        raise DataError("s must be >= 1")
    rows = []
    block = params.c
    for _ in range(s):
        rows.append(block)
        block = block @ params.a
    return np.vstack(rows)


def controllability_matrix(params: LdsParams, s: int) -> np.ndarray:
    """Stack B, AB, ..., A^(s-1)B horizontally: shape (n, s*p)."""
    if s < 1:
        raise DataError("s must be >= 1")
    cols = []
    block = params.b
    for _ in range(s):
        cols.append(block)
        block = params.a @ block
    return np.hstack(cols)


def markov_parameter(params: LdsParams, j: int) -> np.ndarray:
    """The j-th impulse-response block: D for j=0, else C A^(j-1) B.

    Accumulates A^(j-1) B by repeated left-multiplication, the same
    order :func:`markov_matrix` uses, so blocks agree bit for bit.
    """
    if j < 0:
        raise DataError("j must be >= 0")
    if j == 0:
        return params.d.copy()
    apow_b = params.b
    for _ in range(j - 1):
        apow_b = params.a @ apow_b
    return params.c @ apow_b


def markov_matrix(params: LdsParams, big_t: int) -> np.ndarray:
    """[D, CB, CAB, ..., CA^(T-1)B]: shape (m, (T+1)*p)."""
    if big_t < 0:
        raise DataError("T must be >= 0")
    blocks = [params.d]
    apow_b = params.b  # A^(j-1) B for the next block
    for _ in range(big_t):
        blocks.append(params.c @ apow_b)
        apow_b = params.a @ apow_b
    return np.hstack(blocks)


def joint_nondegeneracy_gamma(mix: MixtureSpec, s: int) -> float:
    """Largest gamma such that every unit combination of the per-component
    Markov matrices G_{i,s} has Frobenius norm >= gamma.

    Equals the smallest singular value of the matrix whose k columns are
    the flattened G_{i,s}, since ||sum_i c_i G_i||_F = ||K c||_2.
    """
    cols = [markov_matrix(comp, s).ravel() for comp in mix.components]
    k_mat = np.column_stack(cols)
    return float(np.linalg.svd(k_mat, compute_uv=False)[-1])


def _rank(mat: np.ndarray) -> int:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def _spectral_norm(mat: np.ndarray) -> float:
    return float(np.linalg.norm(mat, 2))


@dataclass(frozen=True)
class WellBehavedReport:
    """Outcome of checking the mixture learnability assumptions.

    ``checks`` holds one boolean per assumption; ``measured`` the values
    the booleans were derived from.  A failing assumption is a report
    entry, never an exception.
    """

    kappa_bound: float
    gamma: float
    w_min: float
    obs_ratio: np.ndarray
    ctrl_ratio: np.ndarray
    checks: dict
    measured: dict
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def well_behaved_report(
    mix: MixtureSpec, s: int, kappa: float, w_min: float, gamma: float
) -> WellBehavedReport:
    """Check every learnability assumption of the mixture at parameter s.

    Assumptions checked (one pass/fail each):

    - ``weights``: every mixing weight >= w_min;
    - ``gain_lower``: spectral norms of each B_i and C_i are >= 1;
    - ``boundedness``: spectral norms of A_i, B_i, C_i, D_i are <= kappa;
    - ``observability``: O_{i,s} has rank n (O is sm-by-n, so rank n is
      full column rank) and sigma_max(O_{i,2s}) / sigma_min(O_{i,s}) <= kappa;
    - ``controllability``: Q_{i,s} has rank n (Q is n-by-sp, so rank n is
      full row rank) and sigma_max(Q_{i,2s}) / sigma_min(Q_{i,s}) <= kappa;
    - ``joint_nondegeneracy``: measured gamma at parameter s >= the
      requested gamma.

    ``diagnostics`` additionally records, per component, the singular
    value bounds sigma_min(O_{i,s}) <= sqrt(s)*kappa and
    sigma_min(Q_{i,s}) <= sqrt(s)*kappa, which hold whenever the
    assumptions do; they do not gate ``ok``.
    """
    k = mix.k
    n = mix.dims[1]
    norms = {
        name: np.array([_spectral_norm(getattr(c, name)) for c in mix.components])
        for name in ("a", "b", "c", "d")
    }
    obs_ratio = np.empty(k)
    ctrl_ratio = np.empty(k)
    obs_rank_ok = np.empty(k, dtype=bool)
    ctrl_rank_ok = np.empty(k, dtype=bool)
    sigma_min_obs = np.empty(k)
    sigma_min_ctrl = np.empty(k)
    for i, comp in enumerate(mix.components):
        o_s = observability_matrix(comp, s)
        o_2s = observability_matrix(comp, 2 * s)
        q_s = controllability_matrix(comp, s)
        q_2s = controllability_matrix(comp, 2 * s)
        sv_o = np.linalg.svd(o_s, compute_uv=False)
        sv_q = np.linalg.svd(q_s, compute_uv=False)
        sigma_min_obs[i] = sv_o[min(n, len(sv_o)) - 1]
        sigma_min_ctrl[i] = sv_q[min(n, len(sv_q)) - 1]
        obs_rank_ok[i] = _rank(o_s) == n
        ctrl_rank_ok[i] = _rank(q_s) == n
        with np.errstate(divide="ignore"):
            obs_ratio[i] = (
                np.linalg.svd(o_2s, compute_uv=False)[0] / sigma_min_obs[i]
                if sigma_min_obs[i] > 0
                else np.inf
            )
            ctrl_ratio[i] = (
                np.linalg.svd(q_2s, compute_uv=False)[0] / sigma_min_ctrl[i]
                if sigma_min_ctrl[i] > 0
                else np.inf
            )
    measured_gamma = joint_nondegeneracy_gamma(mix, s)
    checks = {
        "weights": bool(np.all(mix.weights >= w_min)),
        "gain_lower": bool(np.all(norms["b"] >= 1.0) and np.all(norms["c"] >= 1.0)),
        "boundedness": bool(all(np.all(v <= kappa) for v in norms.values())),
        "observability": bool(np.all(obs_rank_ok) and np.all(obs_ratio <= kappa)),
        "controllability": bool(np.all(ctrl_rank_ok) and np.all(ctrl_ratio <= kappa)),
        "joint_nondegeneracy": bool(measured_gamma >= gamma),
    }
    measured = {
        "weights": np.asarray(mix.weights).copy(),
        "norm_a": norms["a"],
        "norm_b": norms["b"],
        "norm_c": norms["c"],
        "norm_d": norms["d"],
        "obs_rank_ok": obs_rank_ok,
        "ctrl_rank_ok": ctrl_rank_ok,
        "gamma": measured_gamma,
    }
    bound = np.sqrt(s) * kappa
    diagnostics = {
        "sigma_min_obs": sigma_min_obs,
        "sigma_min_ctrl": sigma_min_ctrl,
        "sigma_min_bound": bound,
        "sigma_min_obs_ok": sigma_min_obs <= bound,
        "sigma_min_ctrl_ok": sigma_min_ctrl <= bound,
    }
    return WellBehavedReport(
        kappa_bound=kappa,
        gamma=measured_gamma,
        w_min=w_min,
        obs_ratio=obs_ratio,
        ctrl_ratio=ctrl_ratio,
        checks=checks,
        measured=measured,
        diagnostics=diagnostics,
    )


def power_norm_check(params: LdsParams, s: int, kappa: float, t: int) -> bool:
    """Check ||A^t||_F <= (sqrt(n) * kappa)^(t/s)."""
    if t < 1:
        raise DataError("t must be >= 1")
    lhs = np.linalg.norm(np.linalg.matrix_power(params.a, t), "fro")
    rhs = (np.sqrt(params.n) * kappa) ** (t / s)
    return bool(lhs <= rhs)


def random_lds(
    dims,
    rng: np.random.Generator,
    spectral_radius: float = 0.6,
    gain: float = 1.5,
) -> LdsParams:
    """Draw a random system with spectral radius <= ``spectral_radius``
    and ||B||, ||C|| scaled to ``gain`` (>= 1 keeps the mixture
    assumptions satisfiable).
    """
    m, n, p = dims
    a = rng.standard_normal((n, n))
    rho = max(np.abs(np.linalg.eigvals(a)))
    if rho > 0:
        a *= spectral_radius / rho
    b = rng.standard_normal((n, p))
    b *= gain / _spectral_norm(b)
    c = rng.standard_normal((m, n))
    c *= gain / _spectral_norm(c)
    d = rng.standard_normal((m, p))
    return LdsParams(a=a, b=b, c=c, d=d)


def random_mixture(
    k: int,
    dims,
    rng: np.random.Generator,
    weights: Optional[Sequence[float]] = None,
    min_gamma: float = 0.0,
    s: int = 2,
    spectral_radius: float = 0.6,
    max_tries: int = 200,
) -> MixtureSpec:
    """Draw a random mixture, resampling until gamma at parameter s
    reaches ``min_gamma``."""
    if weights is None:
        w = rng.uniform(0.5, 1.5, size=k)
        w /= w.sum()
    else:
        w = np.asarray(weights, dtype=float)
    for _ in range(max_tries):
        comps = tuple(
            random_lds(dims, rng, spectral_radius=spectral_radius) for _ in range(k)
        )
        mix = MixtureSpec(components=comps, weights=w)
        if joint_nondegeneracy_gamma(mix, s) >= min_gamma:
            return mix
    raise DataError(
        f"could not reach joint non-degeneracy gamma >= {min_gamma} "
        f"in {max_tries} draws"
    )
