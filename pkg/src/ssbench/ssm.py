"""Linear Gaussian state-space models.

    y_t       = Z_t a_t + e_t,      e_t ~ N(0, H_t)
    a_{t+1}   = T a_t + R n_t,      n_t ~ N(0, Q)
    a_1       ~ N(a1, P1), with selected elements diffuse

``Z_t`` and ``H_t`` may change with ``t`` (including the number of observed
rows ``p_t``, where ``p_t = 0`` means nothing is observed); ``T``, ``R`` and
``Q`` are constant. Diffuse initial elements are handled by the exact
univariate treatment, which keeps the diffuse and finite parts of ``P_t``
separate; a large-variance approximation is available as a fallback.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import linalg, optimize

from . import _kalman

logger = logging.getLogger(__name__)

DIFFUSE_TOL = 1e-8
COND_MAX = 1e12
BIG_KAPPA = 1e8


class FilterError(RuntimeError):
    """Raised when the Kalman recursions cannot proceed."""

    def __init__(self, message, period=None):
        super().__init__(message)
        self.period = period


def _ro(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """System matrices with a per-period observation block.

    ``Z`` has shape ``(n, pmax, m)`` and ``H`` shape ``(n, pmax, pmax)``; only
    the leading ``p[t]`` rows (and columns of ``H``) are used at period ``t``.
    """

    Z: np.ndarray
    H: np.ndarray
    p: np.ndarray
    T: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    a1: np.ndarray
    P1: np.ndarray
    diffuse_mask: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 3:
            raise ValueError("Z must have shape (n, pmax, m)")
        n, pmax, m = Z.shape
        H = np.asarray(self.H, dtype=float)
        p = np.asarray(self.p, dtype=np.int64).reshape(-1)
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        a1 = np.asarray(self.a1, dtype=float).reshape(-1)
        P1 = np.atleast_2d(np.asarray(self.P1, dtype=float))
        mask = np.asarray(self.diffuse_mask, dtype=bool).reshape(-1)
        for nm, x in (("Z", Z), ("H", H), ("p", p), ("T", T), ("R", R), ("Q", Q), ("a1", a1), ("P1", P1), ("diffuse_mask", mask)):
            object.__setattr__(self, nm, x if x.flags.writeable is False else _ro(x, x.dtype))
        if self.validate:
            self._check(n, pmax, m)

    def _check(self, n, pmax, m):
        r = self.R.shape[1]
        if self.H.shape != (n, pmax, pmax):
            raise ValueError(f"H must have shape {(n, pmax, pmax)}")
        if self.p.shape != (n,) or (self.p < 0).any() or (self.p > pmax).any():
            raise ValueError("p must hold n row counts in 0..pmax")
        if self.T.shape != (m, m) or self.R.shape[0] != m or self.Q.shape != (r, r):
            raise ValueError("inconsistent T/R/Q dimensions")
        if self.a1.shape != (m,) or self.P1.shape != (m, m) or self.diffuse_mask.shape != (m,):
            raise ValueError("inconsistent initial state dimensions")
        ones = (self.R == 1.0).sum(axis=0)
        zeros = (self.R == 0.0).sum(axis=0)
        if (ones != 1).any() or (zeros != m - 1).any() or len(set(np.argmax(self.R, axis=0))) != r:
            raise ValueError("R must be a selection matrix (distinct columns of the identity)")
        _check_psd(self.Q, "Q")
        keep = ~self.diffuse_mask
        _check_psd(self.P1[np.ix_(keep, keep)], "P1")
        for t in np.flatnonzero(self.p):
            k = self.p[t]
            Ht = self.H[t, :k, :k]
            if not np.allclose(Ht, Ht.T):
                raise ValueError(f"H at period {t} is not symmetric")
        if (np.diagonal(self.H, axis1=1, axis2=2) < 0).any():
            raise ValueError("H has negative variances")

    @property
    def nobs(self) -> int:
        return self.Z.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[2]

    def Z_at(self, t: int) -> np.ndarray:
        return self.Z[t, : self.p[t]]

    def H_at(self, t: int) -> np.ndarray:
        k = self.p[t]
        return self.H[t, :k, :k]

    @property
    def RQR(self) -> np.ndarray:
        return self.R @ self.Q @ self.R.T

    @classmethod
    def time_invariant(cls, Z, H, T, R, Q, a1, P1, n, diffuse_mask=None) -> StateSpaceModel:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        H = np.atleast_2d(np.asarray(H, dtype=float))
        k, m = Z.shape
        if diffuse_mask is None:
            diffuse_mask = np.zeros(m, dtype=bool)
        return cls(
            np.broadcast_to(Z, (n, k, m)),
            np.broadcast_to(H, (n, k, k)),
            np.full(n, k),
            T, R, Q, a1, P1, diffuse_mask,
        )

    @classmethod
    def from_schedule(cls, Z_list, H_list, T, R, Q, a1, P1, diffuse_mask=None) -> StateSpaceModel:
        """Build from per-period lists of ``Z_t`` (p_t x m) and ``H_t`` (p_t x p_t)."""
        Z_list = [np.atleast_2d(np.asarray(z, dtype=float)) for z in Z_list]
        m = np.asarray(T).shape[0]
        p = np.array([0 if z.size == 0 else z.shape[0] for z in Z_list])
        pmax = max(1, int(p.max(initial=0)))
        n = len(Z_list)
        Z = np.zeros((n, pmax, m))
        H = np.zeros((n, pmax, pmax))
        for t, (z, h) in enumerate(zip(Z_list, H_list)):
            k = p[t]
            if k:
                Z[t, :k] = z
                H[t, :k, :k] = np.atleast_2d(h)
        if diffuse_mask is None:
            diffuse_mask = np.zeros(m, dtype=bool)
        return cls(Z, H, p, T, R, Q, a1, P1, diffuse_mask)


def _check_psd(A, name, tol=1e-10):
    if A.size == 0:
        return
    if not np.allclose(A, A.T, atol=1e-12, rtol=1e-10):
        raise ValueError(f"{name} is not symmetric")
    ev = np.linalg.eigvalsh(A)
    if ev[0] < -tol * max(1.0, abs(ev[-1])):
        raise ValueError(f"{name} is not positive semi-definite")


def pack_observations(model: StateSpaceModel, obs) -> np.ndarray:
    """Observations as an ``(n, pmax)`` float array (entries past ``p_t`` ignored)."""
    n, pmax, _ = model.Z.shape
    if isinstance(obs, np.ndarray) and obs.dtype != object:
        y = np.asarray(obs, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[0] != n or y.shape[1] > pmax:
            raise ValueError(f"observations of shape {y.shape} do not fit model with n={n}, pmax={pmax}")
        if y.shape[1] < pmax:
            y = np.concatenate([y, np.full((n, pmax - y.shape[1]), np.nan)], axis=1)
        return y
    if len(obs) != n:
        raise ValueError(f"expected {n} observation vectors, got {len(obs)}")
    y = np.full((n, pmax), np.nan)
    for t, yt in enumerate(obs):
        yt = np.atleast_1d(np.asarray(yt, dtype=float))
        if yt.size != model.p[t]:
            raise ValueError(f"period {t}: expected {model.p[t]} observations, got {yt.size}")
        y[t, : yt.size] = yt
    return y


def drop_missing(model: StateSpaceModel, obs) -> tuple[StateSpaceModel, np.ndarray]:
    """Remove rows whose observation is NaN by shrinking ``p_t``."""
    y = pack_observations(model, obs)
    n, pmax, m = model.Z.shape
    Z = np.zeros_like(model.Z)
    H = np.zeros_like(model.H)
    p = np.zeros(n, dtype=np.int64)
    out = np.full_like(y, np.nan)
    for t in range(n):
        keep = np.flatnonzero(~np.isnan(y[t, : model.p[t]]))
        k = keep.size
        p[t] = k
        Z[t, :k] = model.Z[t, keep]
        H[t, :k, :k] = model.H[t][np.ix_(keep, keep)]
        out[t, :k] = y[t, keep]
    new = StateSpaceModel(Z, H, p, model.T, model.R, model.Q, model.a1, model.P1, model.diffuse_mask, validate=False)
    return new, out


def _has_missing(model: StateSpaceModel, y: np.ndarray) -> bool:
    active = np.arange(y.shape[1])[None, :] < model.p[:, None]
    return bool(np.isnan(y[active]).any())


def _univariate_inputs(model: StateSpaceModel, y: np.ndarray):
    """Rotate periods with non-diagonal ``H_t`` so each observation row has independent noise."""
    Z = model.Z
    H = model.H
    hs = np.diagonal(H, axis1=1, axis2=2).copy()
    off = H - hs[:, :, None] * np.eye(H.shape[1])[None]
    if not off.any():
        return y, np.ascontiguousarray(Z), hs
    Z = Z.copy()
    y = y.copy()
    for t in range(model.nobs):
        k = model.p[t]
        if k < 2 or not off[t, :k, :k].any():
            continue
        w, U = np.linalg.eigh(H[t, :k, :k])
        Z[t, :k] = U.T @ Z[t, :k]
        y[t, :k] = U.T @ y[t, :k]
        hs[t, :k] = np.maximum(w, 0.0)
    return y, Z, hs


@dataclass(frozen=True, eq=False)
class FilterOutput:
    """Kalman filter results.

    ``P_pred``/``P_filt`` hold the finite part of the state covariance;
    ``Pinf_pred``/``Pinf_filt`` the diffuse part (zero once initialization is
    complete). ``v`` and ``F`` are the multivariate innovations and their
    covariances in the model's own coordinates, padded with NaN past ``p_t``;
    ``F`` is NaN during the diffuse periods.
    """

    a_pred: np.ndarray
    P_pred: np.ndarray
    Pinf_pred: np.ndarray
    a_filt: np.ndarray
    P_filt: np.ndarray
    Pinf_filt: np.ndarray
    v: np.ndarray
    F: np.ndarray
    p: np.ndarray
    log_likelihood: float
    diffuse_periods: int
    _uni: tuple = field(repr=False, default=())

    @property
    def nobs(self) -> int:
        return self.a_pred.shape[0]

    def to_csv(self) -> str:
        m = self.a_pred.shape[1]
        head = ["period"] + [f"a_pred_{j}" for j in range(m)] + [f"a_filt_{j}" for j in range(m)]
        head += [f"P_filt_{j}{j}" for j in range(m)]
        pmax = self.v.shape[1]
        head += [f"v_{i}" for i in range(pmax)] + [f"F_{i}{i}" for i in range(pmax)]
        rows = [",".join(head)]
        for t in range(self.nobs):
            vals = list(self.a_pred[t]) + list(self.a_filt[t]) + list(np.diag(self.P_filt[t]))
            vals += list(self.v[t]) + list(np.diag(self.F[t]))
            rows.append(",".join([str(t + 1)] + [_fmt(x) for x in vals]))
        return "\n".join(rows) + "\n"


@dataclass(frozen=True, eq=False)
class SmootherOutput:
    states: np.ndarray
    covariances: np.ndarray

    def to_csv(self) -> str:
        n, m = self.states.shape
        head = ["period"] + [f"state_{j}" for j in range(m)] + [f"var_{j}" for j in range(m)]
        rows = [",".join(head)]
        for t in range(n):
            vals = list(self.states[t]) + list(np.diag(self.covariances[t]))
            rows.append(",".join([str(t + 1)] + [_fmt(x) for x in vals]))
        return "\n".join(rows) + "\n"


def _fmt(x) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def _run_kernel(model, y, diffuse, kappa, store):
    ys, Zs, hs = _univariate_inputs(model, y)
    mask = model.diffuse_mask
    if diffuse == "exact":
        Ps1 = model.P1.copy()
        Ps1[mask, :] = 0.0
        Ps1[:, mask] = 0.0
        Pi1 = np.diag(mask.astype(float))
        skip = 0
    elif diffuse == "kappa":
        Ps1 = model.P1 + kappa * np.diag(mask.astype(float))
        Pi1 = np.zeros_like(Ps1)
        skip = int(mask.sum())
    else:
        raise ValueError("diffuse must be 'exact' or 'kappa'")
    out = _kalman.filter_kernel(
        ys, Zs, hs, model.p, np.ascontiguousarray(model.T), model.RQR, model.a1.copy(),
        Ps1, Pi1, skip, DIFFUSE_TOL, COND_MAX, store,
    )
    status, t_err = out[0], out[1]
    if status == _kalman.SINGULAR:
        raise FilterError(f"innovation covariance is numerically singular at period {t_err + 1}", t_err)
    if status == _kalman.NONFINITE:
        raise FilterError(f"non-finite observation at period {t_err + 1}", t_err)
    return out, Zs


def kalman_filter(model: StateSpaceModel, obs, diffuse: str = "exact", kappa: float = BIG_KAPPA) -> FilterOutput:
    """Run the Kalman filter.

    The log-likelihood is the prediction-error decomposition over fully
    initialized observations; terms that only absorb the diffuse prior are left
    out. With ``diffuse="kappa"`` the diffuse elements get prior variance
    ``kappa`` and the first ``sum(diffuse_mask)`` observation terms are left out.
    NaN observations are dropped from their period (see :func:`drop_missing`);
    ``v``, ``F`` and ``p`` then refer to the remaining rows.
    """
    y = pack_observations(model, obs)
    if _has_missing(model, y):
        model, y = drop_missing(model, y)
    out, Zs = _run_kernel(model, y, diffuse, kappa, True)
    (_, _, ll, nd, a_pred, Ps_pred, Pi_pred, a_filt, Ps_filt, Pi_filt, uv, fs, fi, ms, mi, kind) = out
    n, pmax, m = model.Z.shape
    v = np.full((n, pmax), np.nan)
    F = np.full((n, pmax, pmax), np.nan)
    for t in range(n):
        k = model.p[t]
        if k == 0:
            continue
        Zt = model.Z[t, :k]
        v[t, :k] = y[t, :k] - Zt @ a_pred[t]
        if t >= nd:
            F[t, :k, :k] = Zt @ Ps_pred[t] @ Zt.T + model.H[t, :k, :k]
    return FilterOutput(
        a_pred, Ps_pred, Pi_pred, a_filt, Ps_filt, Pi_filt, v, F, model.p.copy(), float(ll), int(nd),
        _uni=(Zs, uv, fs, fi, ms, mi, kind),
    )


def kalman_smoother(model: StateSpaceModel, obs, filt: FilterOutput | None = None, **kw) -> SmootherOutput:
    """Fixed-interval smoothed state means and covariances."""
    if filt is None:
        filt = kalman_filter(model, obs, **kw)
    Zs, uv, fs, fi, ms, mi, kind = filt._uni
    a_sm, V_sm = _kalman.smoother_kernel(
        Zs, filt.p, np.ascontiguousarray(model.T), filt.a_pred, filt.P_pred, filt.Pinf_pred,
        uv, fs, fi, ms, mi, kind,
    )
    return SmootherOutput(a_sm, V_sm)


def _joint_moments(model: StateSpaceModel, kappa: float):
    """Mean and covariance of the stacked states ``(a_1, ..., a_n)``."""
    n, m = model.nobs, model.m
    T = model.T
    mean = np.zeros((n, m))
    var = np.zeros((n, m, m))
    mean[0] = model.a1
    var[0] = model.P1 + kappa * np.diag(model.diffuse_mask.astype(float))
    RQR = model.RQR
    for t in range(1, n):
        mean[t] = T @ mean[t - 1]
        var[t] = T @ var[t - 1] @ T.T + RQR
    S = np.zeros((n * m, n * m))
    for s in range(n):
        block = var[s]
        for t in range(s, n):
            S[t * m : (t + 1) * m, s * m : (s + 1) * m] = block
            S[s * m : (s + 1) * m, t * m : (t + 1) * m] = block.T
            block = T @ block
    return mean.reshape(-1), S


def _observation_map(model: StateSpaceModel, y: np.ndarray, upto: int):
    n, m = model.nobs, model.m
    rows, vals, noise = [], [], []
    for t in range(upto):
        k = model.p[t]
        for i in range(k):
            r = np.zeros(n * m)
            r[t * m : (t + 1) * m] = model.Z[t, i]
            rows.append(r)
            vals.append(y[t, i])
        if k:
            noise.append(model.H[t, :k, :k])
    C = np.array(rows).reshape(len(rows), n * m)
    Hb = linalg.block_diag(*noise) if noise else np.zeros((0, 0))
    return C, np.array(vals), Hb


def brute_force_posterior(model: StateSpaceModel, obs, upto: int | None = None, kappa: float = BIG_KAPPA):
    """Condition the joint Gaussian of all states on the observations.

    Uses observations of periods ``1..upto`` (all periods by default) and returns
    per-period posterior means ``(n, m)`` and covariances ``(n, m, m)``. Diffuse
    elements are approximated by prior variance ``kappa``. Intended as a test
    oracle for small problems (``n * m <= 200``).
    """
    n, m = model.nobs, model.m
    if n * m > 200:
        raise ValueError("brute_force_posterior is limited to n * m <= 200")
    y = pack_observations(model, obs)
    upto = n if upto is None else upto
    mu, S = _joint_moments(model, kappa)
    C, yv, Hb = _observation_map(model, y, upto)
    if C.shape[0] == 0:
        covs = np.array([S[t * m : (t + 1) * m, t * m : (t + 1) * m] for t in range(n)])
        return mu.reshape(n, m), covs
    Syy = C @ S @ C.T + Hb
    Sxy = S @ C.T
    try:
        cf = linalg.cho_factor(Syy)
    except linalg.LinAlgError:
        raise FilterError("joint observation covariance is singular") from None
    if np.linalg.cond(Syy) > 1e15:
        raise FilterError("joint observation covariance is singular")
    post_mu = mu + Sxy @ linalg.cho_solve(cf, yv - C @ mu)
    post_S = S - Sxy @ linalg.cho_solve(cf, Sxy.T)
    covs = np.array([post_S[t * m : (t + 1) * m, t * m : (t + 1) * m] for t in range(n)])
    return post_mu.reshape(n, m), 0.5 * (covs + covs.transpose(0, 2, 1))


def joint_log_density(model: StateSpaceModel, obs) -> float:
    """Log-density of all observations under the joint Gaussian (non-diffuse models)."""
    if model.diffuse_mask.any():
        raise ValueError("joint_log_density needs a model without diffuse elements")
    y = pack_observations(model, obs)
    mu, S = _joint_moments(model, 0.0)
    C, yv, Hb = _observation_map(model, y, model.nobs)
    if C.shape[0] == 0:
        return 0.0
    Syy = C @ S @ C.T + Hb
    e = yv - C @ mu
    cf = linalg.cho_factor(Syy)
    logdet = 2.0 * np.log(np.diag(cf[0])).sum()
    return float(-0.5 * (e.size * math.log(2 * math.pi) + logdet + e @ linalg.cho_solve(cf, e)))


# ---------------------------------------------------------------------------
# hyperparameters and estimation

TRANSFORMS = ("log", "fisher_z", "none")


@dataclass(frozen=True)
class Hyperparameters:
    """Named parameters in natural scale with a transform to unconstrained space.

    ``log`` for variances, ``fisher_z`` (inverse hyperbolic tangent) for
    coefficients in (-1, 1), ``none`` for unrestricted values. Names in
    ``fixed`` are held at their value during estimation.
    """

    values: Mapping[str, float]
    transforms: Mapping[str, str]
    fixed: frozenset = frozenset()

    def __post_init__(self):
        values = {k: float(v) for k, v in self.values.items()}
        transforms = dict(self.transforms)
        if set(values) != set(transforms):
            raise ValueError("every parameter needs a transform")
        for k, tr in transforms.items():
            if tr not in TRANSFORMS:
                raise ValueError(f"unknown transform {tr!r} for {k}")
            x = values[k]
            if tr == "log" and not x > 0:
                raise ValueError(f"{k} must be positive, got {x}")
            if tr == "fisher_z" and not -1 < x < 1:
                raise ValueError(f"{k} must lie in (-1, 1), got {x}")
            if not math.isfinite(x):
                raise ValueError(f"{k} is not finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "transforms", transforms)
        object.__setattr__(self, "fixed", frozenset(self.fixed))

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    @property
    def names(self) -> list[str]:
        return list(self.values)

    @property
    def free(self) -> list[str]:
        return [k for k in self.values if k not in self.fixed]

    def to_unconstrained(self) -> np.ndarray:
        return np.array([_forward(self.transforms[k], self.values[k]) for k in self.free])

    def with_unconstrained(self, x) -> Hyperparameters:
        vals = dict(self.values)
        for k, xi in zip(self.free, np.asarray(x, dtype=float)):
            vals[k] = _backward(self.transforms[k], xi)
        return Hyperparameters(vals, self.transforms, self.fixed)

    def replace(self, **values) -> Hyperparameters:
        vals = dict(self.values)
        vals.update(values)
        return Hyperparameters(vals, self.transforms, self.fixed)

    def to_text(self) -> str:
        return json.dumps(
            {"values": self.values, "transforms": self.transforms, "fixed": sorted(self.fixed)},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_text(cls, text: str) -> Hyperparameters:
        d = json.loads(text)
        return cls(d["values"], d["transforms"], frozenset(d.get("fixed", ())))


def _forward(tr, x):
    if tr == "log":
        return math.log(x)
    if tr == "fisher_z":
        return math.atanh(x)
    return x


def _backward(tr, u):
    if tr == "log":
        return math.exp(min(u, 700.0))
    if tr == "fisher_z":
        # keep strictly inside (-1, 1) in floating point
        return max(min(math.tanh(u), 1 - 1e-15), -1 + 1e-15)
    return u


ModelTemplate = Callable[[Hyperparameters], StateSpaceModel]


def loglikelihood(template: ModelTemplate, psi: Hyperparameters, obs, full: bool = False, diffuse: str = "exact"):
    """Filter log-likelihood of ``obs`` under ``template(psi)``.

    Filter failures give ``-inf``. With ``full=True`` a ``(value, message)``
    pair is returned where ``message`` describes the failure or is ``None``.
    """
    try:
        model = template(psi)
        y = pack_observations(model, obs)
        if _has_missing(model, y):
            model, y = drop_missing(model, y)
        out, _ = _run_kernel(model, y, diffuse, BIG_KAPPA, False)
        value, msg = float(out[2]), None
        if not math.isfinite(value):
            value, msg = -math.inf, "non-finite log-likelihood"
    except (FilterError, ValueError, np.linalg.LinAlgError) as exc:
        value, msg = -math.inf, str(exc)
    return (value, msg) if full else value


@dataclass(frozen=True, eq=False)
class MleResult:
    params: Hyperparameters
    log_likelihood: float
    cov_unconstrained: np.ndarray
    std_errors: dict
    converged: bool
    n_iter: int
    n_eval: int
    grad_norm: float
    message: str
    starts: tuple = ()


def _central_gradient(f, x, f_scale=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        h = f_scale * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _numerical_hessian(f, x, step=1e-4):
    k = x.size
    Hm = np.empty((k, k))
    for i in range(k):
        h = step * max(1.0, abs(x[i]))
        e = np.zeros(k)
        e[i] = h
        Hm[i] = (_central_gradient(f, x + e) - _central_gradient(f, x - e)) / (2 * h)
    return 0.5 * (Hm + Hm.T)


_PENALTY = 1e25


def estimate_mle(
    template: ModelTemplate,
    obs,
    psi0: Hyperparameters,
    n_starts: int = 5,
    seed: int = 0,
    max_iter: int = 500,
    gtol: float = 1e-6,
    rtol: float = 1e-10,
    perturbation: float = 1.0,
    diffuse: str = "exact",
) -> MleResult:
    """Maximize the log-likelihood with BFGS in unconstrained coordinates.

    Gradients are central finite differences with step ``1e-5 * max(1, |x_i|)``.
    A run stops when the gradient sup-norm drops below ``gtol`` or the relative
    change in log-likelihood between iterations drops below ``rtol``. Besides
    ``psi0``, ``n_starts - 1`` starts perturbed by ``N(0, perturbation**2)`` in
    unconstrained space are tried and the best optimum is kept.
    """
    model0 = template(psi0)
    y = pack_observations(model0, obs)
    n_eval = 0

    def negll(x):
        nonlocal n_eval
        n_eval += 1
        try:
            psi = psi0.with_unconstrained(x)
        except ValueError:  # exp under/overflow far from the optimum
            return _PENALTY
        v = loglikelihood(template, psi, y, diffuse=diffuse)
        return -v if math.isfinite(v) else _PENALTY

    x0 = psi0.to_unconstrained()
    if negll(x0) >= _PENALTY:
        _, msg = loglikelihood(template, psi0, y, full=True, diffuse=diffuse)
        raise FilterError(f"log-likelihood is -inf at the starting values: {msg}")
    if x0.size == 0:
        ll = -negll(x0)
        return MleResult(psi0, ll, np.zeros((0, 0)), {}, True, 0, n_eval, 0.0, "no free parameters")

    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + perturbation * rng.standard_normal(x0.size) for _ in range(n_starts - 1)]
    runs = []
    for xs in starts:
        if negll(xs) >= _PENALTY:
            runs.append((xs, _PENALTY, False, 0, "infeasible start", math.inf))
            continue
        runs.append(_bfgs(negll, xs, max_iter, gtol, rtol))
    best = min(runs, key=lambda r: r[1])
    xb, fb, conv, nit, msg, gnorm = best
    if not conv:
        logger.warning("MLE did not converge: %s", msg)

    hess = _numerical_hessian(negll, xb)
    try:
        cov = np.linalg.inv(hess)
        if (np.diag(cov) < 0).any():
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(hess)
    psi = psi0.with_unconstrained(xb)
    se = {}
    for i, k in enumerate(psi.free):
        # delta method back to natural scale
        tr = psi.transforms[k]
        d = psi[k] if tr == "log" else (1 - psi[k] ** 2 if tr == "fisher_z" else 1.0)
        se[k] = float(abs(d) * math.sqrt(max(cov[i, i], 0.0)))
    return MleResult(
        params=psi,
        log_likelihood=-fb,
        cov_unconstrained=cov,
        std_errors=se,
        converged=conv,
        n_iter=nit,
        n_eval=n_eval,
        grad_norm=gnorm,
        message=msg,
        starts=tuple((-r[1], r[2]) for r in runs),
    )


class _Stop(Exception):
    pass


def _bfgs(f, x0, max_iter, gtol, rtol):
    state = {"f": f(x0), "rel": False}

    def cb(intermediate_result):
        fx = intermediate_result.fun
        prev = state["f"]
        state["f"] = fx
        if abs(prev - fx) <= rtol * max(abs(fx), 1e-300):
            state["rel"] = True
            raise StopIteration

    res = optimize.minimize(
        f, x0, method="BFGS", jac=lambda x: _central_gradient(f, x),
        callback=cb, options={"gtol": gtol, "maxiter": max_iter, "norm": np.inf},
    )
    gnorm = float(np.max(np.abs(_central_gradient(f, res.x))))
    # status 2: line search stalled, typically at the optimum up to finite-difference noise
    converged = gnorm < gtol or state["rel"] or (res.status == 2 and gnorm < 1e-4)
    msg = "converged" if converged else str(res.message)
    if state["rel"]:
        msg = "relative log-likelihood change below tolerance"
    elif gnorm < gtol:
        msg = "gradient norm below tolerance"
    return res.x, float(res.fun), bool(converged), int(res.nit), msg, gnorm


@dataclass(frozen=True, eq=False)
class Simulation:
    obs: np.ndarray
    states: np.ndarray
    disturbances: np.ndarray
    obs_noise: np.ndarray


def _sqrt_psd(A):
    w, U = np.linalg.eigh(0.5 * (A + A.T))
    return U * np.sqrt(np.maximum(w, 0.0))


def simulate(model: StateSpaceModel, n: int | None = None, seed: int = 0, diffuse_var: float = 1e4) -> Simulation:
    """Draw states and observations from the model (numpy PCG64 generator).

    Diffuse initial elements are drawn from ``N(a1, diffuse_var)``. Observations
    are packed as ``(n, pmax)`` with NaN past ``p_t``.
    """
    n = model.nobs if n is None else n
    if n < 1 or n > model.nobs:
        raise ValueError(f"n must be in 1..{model.nobs}")
    rng = np.random.default_rng(seed)
    m = model.m
    pmax = model.Z.shape[1]
    P1 = model.P1.copy()
    mask = model.diffuse_mask
    P1[mask, :] = 0.0
    P1[:, mask] = 0.0
    P1 += diffuse_var * np.diag(mask.astype(float))
    a = model.a1 + _sqrt_psd(P1) @ rng.standard_normal(m)
    Qh = _sqrt_psd(model.Q)
    r = model.Q.shape[0]
    states = np.zeros((n, m))
    eta = np.zeros((n, r))
    y = np.full((n, pmax), np.nan)
    eps = np.full((n, pmax), np.nan)
    for t in range(n):
        states[t] = a
        k = model.p[t]
        if k:
            e = _sqrt_psd(model.H[t, :k, :k]) @ rng.standard_normal(k)
            eps[t, :k] = e
            y[t, :k] = model.Z[t, :k] @ a + e
        eta[t] = Qh @ rng.standard_normal(r)
        a = model.T @ a + model.R @ eta[t]
    return Simulation(y, states, eta, eps)


def model_to_text(model: StateSpaceModel) -> str:
    """JSON text with dimensions and row-major matrices."""
    d = {
        "dimensions": {"n": model.nobs, "pmax": int(model.Z.shape[1]), "m": model.m, "r": int(model.Q.shape[0])},
        "p": model.p.tolist(),
        "Z": model.Z.tolist(),
        "H": model.H.tolist(),
        "T": model.T.tolist(),
        "R": model.R.tolist(),
        "Q": model.Q.tolist(),
        "a1": model.a1.tolist(),
        "P1": model.P1.tolist(),
        "diffuse_mask": model.diffuse_mask.tolist(),
    }
    return json.dumps(d)


def model_from_text(text: str) -> StateSpaceModel:
    d = json.loads(text)
    return StateSpaceModel(d["Z"], d["H"], d["p"], d["T"], d["R"], d["Q"], d["a1"], d["P1"], d["diffuse_mask"])
