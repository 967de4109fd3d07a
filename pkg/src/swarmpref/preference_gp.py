"""Sparse variational multi-output GP over flight preferences.

Five outputs share L latent GPs through a mixing matrix, so preferences
learned in one environment transfer to similar ones.  Observation noise is
input-dependent (log-linear in the features), letting the model trust
confident operators more in some environments than others.  Training
maximizes the usual evidence lower bound on minibatches; inducing variables
are whitened so the untrained model is exactly the prior.

Inputs x are raw feature vectors; they are divided by a fixed scale vector
before touching the kernel.  Targets are mapped to [-0.5, 0.5] per output;
the zero-mean prior therefore sits at the middle of each preference range.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
import torch

from .configs import GpConfig, PreferenceRanges

_TWO_PI = 2.0 * math.pi
_TORCH_READY = False

# shape record of the latest ELBO evaluation; the cost depends on the batch
# and inducing sizes only, never on the full dataset size
LAST_ELBO_COST: dict[str, int] = {}


def _torch_setup() -> None:
    global _TORCH_READY
    if not _TORCH_READY:
        torch.set_num_threads(1)
        torch.set_default_dtype(torch.float64)
        _TORCH_READY = True


class NumericalError(RuntimeError):
    """Cholesky failed at the maximum jitter level."""


@dataclass(frozen=True)
class GpModelState:
    """Everything needed to evaluate, train, or serialize the model."""

    log_lengthscales: np.ndarray  # (L, D)
    log_signal: np.ndarray        # (L,)
    W: np.ndarray                 # (P, L) output mixing
    alpha: np.ndarray             # (P,) noise intercept
    beta: np.ndarray              # (P, D) noise slope on scaled inputs
    Z: np.ndarray                 # (M, D) inducing inputs, scaled space
    m: np.ndarray                 # (L, M) whitened variational means
    L_raw: np.ndarray             # (L, M, M) raw cholesky factors
    x_scale: np.ndarray           # (D,)
    y_lo: np.ndarray              # (P,)
    y_hi: np.ndarray              # (P,)
    jitter: float = 1e-6
    max_jitter: float = 1e-2
    noise_lo: float = -24.0
    noise_hi: float = 8.0
    jitter_events: int = 0
    clamp_events: int = 0
    skipped_steps: int = 0

    def __post_init__(self):
        for name in ("log_lengthscales", "log_signal", "W", "alpha", "beta",
                     "Z", "m", "L_raw", "x_scale", "y_lo", "y_hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        L, D = self.log_lengthscales.shape
        P = self.W.shape[0]
        M = self.Z.shape[0]
        assert self.log_signal.shape == (L,)
        assert self.W.shape == (P, L)
        assert self.alpha.shape == (P,)
        assert self.beta.shape == (P, D)
        assert self.Z.shape == (M, D)
        assert self.m.shape == (L, M)
        assert self.L_raw.shape == (L, M, M)
        assert self.x_scale.shape == (D,)
        assert self.y_lo.shape == (P,) and self.y_hi.shape == (P,)

    @property
    def n_latents(self) -> int:
        return self.log_lengthscales.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.W.shape[0]

    @property
    def n_inducing(self) -> int:
        return self.Z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.x_scale.shape[0]


TRAINABLE = ("log_lengthscales", "log_signal", "W", "Z", "m", "L_raw", "alpha", "beta")
NOISE_PARAMS = ("alpha", "beta")


def init_state(ranges: PreferenceRanges, x_scale: np.ndarray,
               cfg: GpConfig = GpConfig(), X: np.ndarray | None = None,
               rng: np.random.Generator | None = None) -> GpModelState:
    """Fresh model at the prior; inducing points from data when available."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    x_scale = np.asarray(x_scale, dtype=float)
    D = x_scale.shape[0]
    P = len(ranges.lo())
    L, M = cfg.n_latents, cfg.n_inducing
    if X is not None and len(X) > 0:
        Z = init_inducing(np.asarray(X, dtype=float) / x_scale, M, rng)
    else:
        Z = 0.5 * rng.standard_normal((M, D))
    W = np.eye(P, L) + 0.01 * rng.standard_normal((P, L))
    return GpModelState(
        log_lengthscales=np.full((L, D), np.log(cfg.init_lengthscale)),
        log_signal=np.zeros(L),
        W=W,
        alpha=np.full(P, cfg.init_log_noise),
        beta=np.zeros((P, D)),
        Z=Z,
        m=np.zeros((L, M)),
        L_raw=np.zeros((L, M, M)),
        x_scale=x_scale,
        y_lo=ranges.lo(),
        y_hi=ranges.hi(),
        jitter=cfg.jitter,
        max_jitter=cfg.max_jitter,
        noise_lo=cfg.noise_exponent_range[0],
        noise_hi=cfg.noise_exponent_range[1],
    )


def init_inducing(Xs: np.ndarray, M: int, rng: np.random.Generator,
                  lloyd_iters: int = 10) -> np.ndarray:
    """kmeans++ seeding plus a few Lloyd rounds on scaled inputs; duplicates
    the data with small jitter when there are fewer points than centers."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    N = Xs.shape[0]
    if N < M:
        reps = int(np.ceil(M / N))
        Z = np.tile(Xs, (reps, 1))[:M]
        return Z + 0.05 * rng.standard_normal(Z.shape)
    centers = [Xs[rng.integers(N)]]
    d2 = ((Xs - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, M):
        total = d2.sum()
        if total <= 0:
            centers.append(Xs[rng.integers(N)].copy())
            continue
        idx = rng.choice(N, p=d2 / total)
        centers.append(Xs[idx].copy())
        d2 = np.minimum(d2, ((Xs - centers[-1]) ** 2).sum(axis=1))
    Z = np.array(centers)
    for _ in range(lloyd_iters):
        assign = ((Xs[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2).argmin(axis=1)
        for k in range(M):
            mask = assign == k
            if mask.any():
                Z[k] = Xs[mask].mean(axis=0)
    return Z


def anchor_inducing(state: GpModelState, X: np.ndarray,
                    rng: np.random.Generator, min_weight: float = 0.05,
                    ) -> GpModelState:
    """Snap inducing points that barely see the data onto training inputs.

    A point several lengthscales away from every input contributes nothing
    to the bound and receives no gradient, so optimization can never move
    it.  Relocated points restart at the prior (their variational slots are
    zeroed); well-coupled points are left alone.
    """
    Xs = np.atleast_2d(np.asarray(X, dtype=float)) / state.x_scale
    if Xs.shape[0] > 512:
        Xs = Xs[rng.choice(Xs.shape[0], size=512, replace=False)]
    ls = np.exp(state.log_lengthscales)           # (L, D)
    Zl = state.Z[None, :, :] / ls[:, None, :]      # (L, M, D)
    Xl = Xs[None, :, :] / ls[:, None, :]           # (L, N, D)
    d2 = ((Zl[:, :, None, :] - Xl[:, None, :, :]) ** 2).sum(axis=3)
    weight = np.exp(-0.5 * d2).max(axis=(0, 2))    # (M,)
    far = np.flatnonzero(weight < min_weight)
    if far.size == 0:
        return state
    picks = rng.choice(Xs.shape[0], size=far.size, replace=True)
    Z = state.Z.copy()
    Z[far] = Xs[picks] + 1e-3 * rng.standard_normal((far.size, Z.shape[1]))
    m = state.m.copy()
    L_raw = state.L_raw.copy()
    m[:, far] = 0.0
    L_raw[:, far, :] = 0.0
    L_raw[:, :, far] = 0.0
    return replace(state, Z=Z, m=m, L_raw=L_raw)


def revive_latents(state: GpModelState, rng: np.random.Generator,
                   min_signal: float = 0.05) -> GpModelState:
    """Reset latent functions whose signal has collapsed.

    ARD prunes latents the data cannot justify yet, and a pruned latent is
    frozen: every gradient through it scales with its signal.  Fresh data
    may need that capacity back, so collapsed latents restart at the prior
    with a small random mixing column.
    """
    dead = np.flatnonzero(np.exp(state.log_signal) < min_signal)
    if dead.size == 0:
        return state
    log_ls = state.log_lengthscales.copy()
    log_signal = state.log_signal.copy()
    W = state.W.copy()
    m = state.m.copy()
    L_raw = state.L_raw.copy()
    alive = np.exp(log_signal) >= min_signal
    med = np.median(log_ls[alive] if alive.any() else log_ls, axis=0)
    for l in dead:
        log_ls[l] = med
        log_signal[l] = 0.0
        W[:, l] = 0.05 * rng.standard_normal(W.shape[0])
        m[l] = 0.0
        L_raw[l] = 0.0
    return replace(state, log_lengthscales=log_ls, log_signal=log_signal,
                   W=W, m=m, L_raw=L_raw)


def normalize_targets(Y: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return (np.asarray(Y, dtype=float) - lo) / (hi - lo) - 0.5


def denormalize_targets(T: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return (np.asarray(T, dtype=float) + 0.5) * (hi - lo) + lo


def _sqdist(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Batched pairwise squared distances: (L,N,D),(L,K,D) -> (L,N,K)."""
    a2 = (a * a).sum(-1).unsqueeze(-1)
    b2 = (b * b).sum(-1).unsqueeze(-2)
    return torch.clamp(a2 + b2 - 2.0 * torch.matmul(a, b.transpose(-1, -2)), min=0.0)


def _tensors(state: GpModelState, grad: bool) -> dict[str, torch.Tensor]:
    _torch_setup()
    out = {}
    for name in TRAINABLE:
        t = torch.tensor(getattr(state, name), dtype=torch.float64)
        if grad:
            t.requires_grad_(True)
        out[name] = t
    return out


def _elbo_graph(t: dict[str, torch.Tensor], Xs: torch.Tensor, Tb: torch.Tensor,
                total_n: int, jitter: float, noise_lo: float, noise_hi: float,
                ) -> torch.Tensor | None:
    """ELBO as a torch graph; None when the Cholesky needs more jitter."""
    L, M = t["m"].shape
    B = Xs.shape[0]
    ls = torch.exp(t["log_lengthscales"])                     # (L,D)
    sig2 = torch.exp(2.0 * t["log_signal"])                   # (L,)
    Zl = t["Z"].unsqueeze(0) / ls.unsqueeze(1)                # (L,M,D)
    Xl = Xs.unsqueeze(0) / ls.unsqueeze(1)                    # (L,B,D)
    Kzz = sig2.view(-1, 1, 1) * torch.exp(-0.5 * _sqdist(Zl, Zl))
    Kzz = Kzz + jitter * torch.eye(M, dtype=Kzz.dtype)
    Lz, info = torch.linalg.cholesky_ex(Kzz)
    if bool(info.any()):
        return None
    Kzx = sig2.view(-1, 1, 1) * torch.exp(-0.5 * _sqdist(Zl, Xl))  # (L,M,B)
    A = torch.linalg.solve_triangular(Lz, Kzx, upper=False)
    mean_lat = (A * t["m"].unsqueeze(2)).sum(dim=1)           # (L,B)
    raw = t["L_raw"]
    diag_raw = torch.diagonal(raw, dim1=1, dim2=2)
    T = torch.tril(raw, -1) + torch.diag_embed(torch.exp(diag_raw))
    TA = torch.matmul(T.transpose(1, 2), A)
    var_lat = sig2.view(-1, 1) - (A * A).sum(dim=1) + (TA * TA).sum(dim=1)
    var_lat = torch.clamp(var_lat, min=1e-12)
    W = t["W"]
    mu = mean_lat.transpose(0, 1) @ W.transpose(0, 1)         # (B,P)
    v = var_lat.transpose(0, 1) @ (W * W).transpose(0, 1)     # (B,P)
    logvar = torch.clamp(t["alpha"].unsqueeze(0) + Xs @ t["beta"].transpose(0, 1),
                         noise_lo, noise_hi)
    ll = -0.5 * (math.log(_TWO_PI) + logvar) \
        - ((Tb - mu) ** 2 + v) / (2.0 * torch.exp(logvar))
    lik = ll.sum() * (total_n / B)
    kl = 0.5 * ((t["m"] ** 2).sum() + (T ** 2).sum() - L * M) - diag_raw.sum()
    LAST_ELBO_COST.update(batch=int(B), inducing=int(M), latents=int(L),
                          kernel_elems=int(L * M * (M + B)),
                          chol_cells=int(L * M * M))
    return lik - kl


def _with_jitter(state: GpModelState, fn):
    """Run fn(jitter) with escalation; returns (value, jitter_events_added)."""
    jitter = state.jitter
    events = 0
    while True:
        out = fn(jitter)
        if out is not None:
            return out, events
        jitter *= 10.0
        events += 1
        if jitter > state.max_jitter:
            raise NumericalError(f"cholesky failed up to jitter {state.max_jitter}")


def elbo(state: GpModelState, X: np.ndarray, Y: np.ndarray,
         total_n: int | None = None) -> float:
    """Evidence lower bound of a batch; X raw features, Y physical units."""
    Xs = torch.tensor(np.asarray(X, dtype=float) / state.x_scale)
    Tb = torch.tensor(normalize_targets(Y, state.y_lo, state.y_hi))
    n = int(total_n if total_n is not None else len(Xs))
    t = _tensors(state, grad=False)
    with torch.no_grad():
        val, _ = _with_jitter(
            state, lambda j: _elbo_graph(t, Xs, Tb, n, j, state.noise_lo, state.noise_hi))
    return float(val.item())


def elbo_grads(state: GpModelState, X: np.ndarray, Y: np.ndarray,
               total_n: int | None = None,
               ) -> tuple[float, dict[str, np.ndarray], int]:
    """ELBO value and gradients for every trainable array."""
    Xs = torch.tensor(np.asarray(X, dtype=float) / state.x_scale)
    Tb = torch.tensor(normalize_targets(Y, state.y_lo, state.y_hi))
    n = int(total_n if total_n is not None else len(Xs))
    t = _tensors(state, grad=True)
    val, events = _with_jitter(
        state, lambda j: _elbo_graph(t, Xs, Tb, n, j, state.noise_lo, state.noise_hi))
    val.backward()
    grads = {k: (t[k].grad.numpy().copy() if t[k].grad is not None
                 else np.zeros_like(getattr(state, k))) for k in TRAINABLE}
    return float(val.item()), grads, events


@dataclass(frozen=True)
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @staticmethod
    def fresh(state: GpModelState) -> "AdamState":
        zero = {k: np.zeros_like(getattr(state, k)) for k in TRAINABLE}
        return AdamState(step=0, m=zero, v={k: z.copy() for k, z in zero.items()})


def adam_update(state: GpModelState, opt: AdamState, grads: dict[str, np.ndarray],
                cfg: GpConfig, betas=(0.9, 0.999), eps: float = 1e-8,
                ) -> tuple[GpModelState, AdamState]:
    """One ascent step; noise parameters use their slower learning rate."""
    step = opt.step + 1
    b1, b2 = betas
    new_m, new_v, updates = {}, {}, {}
    for k in TRAINABLE:
        g = grads[k]
        mk = b1 * opt.m[k] + (1 - b1) * g
        vk = b2 * opt.v[k] + (1 - b2) * g * g
        mhat = mk / (1 - b1 ** step)
        vhat = vk / (1 - b2 ** step)
        lr = cfg.lr_noise if k in NOISE_PARAMS else cfg.lr_main
        updates[k] = getattr(state, k) + lr * mhat / (np.sqrt(vhat) + eps)
        new_m[k], new_v[k] = mk, vk
    return replace(state, **updates), AdamState(step=step, m=new_m, v=new_v)


def train_step(state: GpModelState, opt: AdamState, Xb: np.ndarray, Yb: np.ndarray,
               total_n: int, cfg: GpConfig) -> tuple[GpModelState, AdamState, float]:
    value, grads, jitter_events = elbo_grads(state, Xb, Yb, total_n)
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        state = replace(state, skipped_steps=state.skipped_steps + 1,
                        jitter_events=state.jitter_events + jitter_events)
        return state, opt, value
    exponents = state.alpha[None, :] + (np.asarray(Xb) / state.x_scale) @ state.beta.T
    clamped = int(np.sum((exponents < state.noise_lo) | (exponents > state.noise_hi)))
    state, opt = adam_update(state, opt, grads, cfg)
    if cfg.noise_decay > 0.0:  # decoupled decay, applied after the Adam step
        state = replace(state,
                        beta=state.beta * (1.0 - cfg.lr_noise * cfg.noise_decay))
    state = replace(state,
                    jitter_events=state.jitter_events + jitter_events,
                    clamp_events=state.clamp_events + clamped)
    return state, opt, value


def train(state: GpModelState, X: np.ndarray, Y: np.ndarray, cfg: GpConfig,
          rng: np.random.Generator, n_steps: int | None = None,
          opt: AdamState | None = None,
          ) -> tuple[GpModelState, AdamState, list[float]]:
    """Minibatch ELBO ascent; returns the per-step minibatch ELBO trace."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    N = X.shape[0]
    if N == 0:
        return state, opt or AdamState.fresh(state), []
    steps = cfg.n_steps if n_steps is None else n_steps
    if opt is None:  # fresh optimization: restore capacity lost to pruning
        state = revive_latents(state, rng)
        state = anchor_inducing(state, X, rng)
        opt = AdamState.fresh(state)
    history: list[float] = []
    for _ in range(steps):
        if N > cfg.batch_size:
            idx = rng.choice(N, size=cfg.batch_size, replace=False)
        else:
            idx = np.arange(N)
        state, opt, value = train_step(state, opt, X[idx], Y[idx], N, cfg)
        history.append(value)
    return state, opt, history


def _latent_moments(state: GpModelState, Xs: np.ndarray, jitter: float,
                    ) -> tuple[np.ndarray, np.ndarray] | None:
    """Numpy latent predictive means and variances: (L,N) each."""
    from scipy.linalg import cholesky, solve_triangular
    L, D = state.log_lengthscales.shape
    N = Xs.shape[0]
    mean = np.empty((L, N))
    var = np.empty((L, N))
    for l in range(L):
        ls = np.exp(state.log_lengthscales[l])
        s2 = float(np.exp(2.0 * state.log_signal[l]))
        Zl = state.Z / ls
        Xl = Xs / ls
        dzz = ((Zl[:, None, :] - Zl[None, :, :]) ** 2).sum(axis=2)
        Kzz = s2 * np.exp(-0.5 * dzz) + jitter * np.eye(state.n_inducing)
        try:
            Lz = cholesky(Kzz, lower=True)
        except np.linalg.LinAlgError:
            return None
        except Exception:
            return None
        dzx = ((Zl[:, None, :] - Xl[None, :, :]) ** 2).sum(axis=2)
        Kzx = s2 * np.exp(-0.5 * dzx)
        A = solve_triangular(Lz, Kzx, lower=True)
        raw = state.L_raw[l]
        T = np.tril(raw, -1) + np.diag(np.exp(np.diag(raw)))
        TA = T.T @ A
        mean[l] = A.T @ state.m[l]
        var[l] = np.clip(s2 - (A * A).sum(axis=0) + (TA * TA).sum(axis=0), 1e-12, None)
    return mean, var


@dataclass(frozen=True)
class Prediction:
    mean_norm: np.ndarray   # (N, P)
    cov: np.ndarray         # (N, P, P) normalized, includes observation noise
    mean: np.ndarray        # (N, P) physical, clamped to the preference ranges

    @property
    def trace(self) -> np.ndarray:
        return np.trace(self.cov, axis1=1, axis2=2)


def predict(state: GpModelState, X: np.ndarray) -> Prediction:
    """Joint output prediction at raw feature rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xs = X / state.x_scale
    (mean_lat, var_lat), _ = _with_jitter(
        state, lambda j: _latent_moments(state, Xs, j))
    W = state.W
    mean_norm = mean_lat.T @ W.T                               # (N,P)
    N = X.shape[0]
    cov = np.einsum("pl,nl,ql->npq", W, var_lat.T, W)
    logvar = np.clip(state.alpha[None, :] + Xs @ state.beta.T,
                     state.noise_lo, state.noise_hi)
    idx = np.arange(state.n_outputs)
    cov[:, idx, idx] += np.exp(logvar)
    phys = denormalize_targets(mean_norm, state.y_lo, state.y_hi)
    phys = np.clip(phys, state.y_lo, state.y_hi)
    return Prediction(mean_norm=mean_norm, cov=cov, mean=phys)


def _output_kernel(state: GpModelState, p: int, Xa: np.ndarray, Xb: np.ndarray,
                   ) -> np.ndarray:
    """Dense kernel of output p between scaled inputs: sum_l W_pl^2 k_l."""
    K = np.zeros((Xa.shape[0], Xb.shape[0]))
    for l in range(state.n_latents):
        ls = np.exp(state.log_lengthscales[l])
        s2 = float(np.exp(2.0 * state.log_signal[l]))
        d = ((Xa[:, None, :] / ls - Xb[None, :, :] / ls) ** 2).sum(axis=2)
        K += state.W[p, l] ** 2 * s2 * np.exp(-0.5 * d)
    return K


def _noise_diag(state: GpModelState, Xs: np.ndarray, p: int) -> np.ndarray:
    logvar = np.clip(state.alpha[p] + Xs @ state.beta[p], state.noise_lo, state.noise_hi)
    return np.exp(logvar)


def exact_gp_predict(state: GpModelState, X_train: np.ndarray, Y_train: np.ndarray,
                     X_test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense GP posterior per output, valid when W has no cross-mixing.

    Returns normalized means and variances (noise included), (N,P) each.
    """
    Xtr = np.atleast_2d(np.asarray(X_train, dtype=float)) / state.x_scale
    Xte = np.atleast_2d(np.asarray(X_test, dtype=float)) / state.x_scale
    T = normalize_targets(np.atleast_2d(Y_train), state.y_lo, state.y_hi)
    P = state.n_outputs
    mean = np.empty((Xte.shape[0], P))
    var = np.empty((Xte.shape[0], P))
    for p in range(P):
        K = _output_kernel(state, p, Xtr, Xtr) + np.diag(_noise_diag(state, Xtr, p))
        K += state.jitter * np.eye(len(Xtr))
        Lc = np.linalg.cholesky(K)
        Ks = _output_kernel(state, p, Xtr, Xte)
        a = np.linalg.solve(Lc, Ks)
        alpha = np.linalg.solve(Lc, T[:, p])
        mean[:, p] = a.T @ alpha
        kss = np.diag(_output_kernel(state, p, Xte, Xte))
        var[:, p] = kss - (a * a).sum(axis=0) + _noise_diag(state, Xte, p)
    return mean, var


def exact_log_marginal(state: GpModelState, X: np.ndarray, Y: np.ndarray) -> float:
    """Dense log marginal likelihood, valid when W has no cross-mixing."""
    Xs = np.atleast_2d(np.asarray(X, dtype=float)) / state.x_scale
    T = normalize_targets(np.atleast_2d(Y), state.y_lo, state.y_hi)
    total = 0.0
    N = Xs.shape[0]
    for p in range(state.n_outputs):
        K = _output_kernel(state, p, Xs, Xs) + np.diag(_noise_diag(state, Xs, p))
        K += state.jitter * np.eye(N)
        Lc = np.linalg.cholesky(K)
        a = np.linalg.solve(Lc, T[:, p])
        total += -0.5 * float(a @ a) - float(np.log(np.diag(Lc)).sum()) \
            - 0.5 * N * math.log(_TWO_PI)
    return total


def fit_variational_exact(state: GpModelState, X: np.ndarray, Y: np.ndarray,
                          ) -> GpModelState:
    """Closed-form optimal variational parameters for the special case
    Z = training inputs and a diagonal mixing matrix.

    With those restrictions the bound is tight at the optimum, which makes
    this an independent oracle for the ELBO and the predictive equations.
    """
    Xs = np.atleast_2d(np.asarray(X, dtype=float)) / state.x_scale
    T = normalize_targets(np.atleast_2d(Y), state.y_lo, state.y_hi)
    L, M = state.n_latents, state.n_inducing
    assert Xs.shape == state.Z.shape and np.allclose(Xs, state.Z)
    off = state.W - np.diag(np.diag(state.W))
    assert np.max(np.abs(off)) < 1e-12, "requires a diagonal mixing matrix"
    assert state.n_outputs == L
    new_m = np.empty((L, M))
    new_raw = np.empty((L, M, M))
    for l in range(L):
        ls = np.exp(state.log_lengthscales[l])
        s2 = float(np.exp(2.0 * state.log_signal[l]))
        d = ((Xs[:, None, :] / ls - Xs[None, :, :] / ls) ** 2).sum(axis=2)
        Kzz = s2 * np.exp(-0.5 * d) + state.jitter * np.eye(M)
        Lz = np.linalg.cholesky(Kzz)
        w = state.W[l, l]
        sigma2 = _noise_diag(state, Xs, l)
        # y_l = w * Lz v + eps; gaussian posterior over whitened v
        Phi = (w * Lz).T @ ((w * Lz) / sigma2[:, None])
        prec = np.eye(M) + Phi
        S = np.linalg.inv(prec)
        S = 0.5 * (S + S.T)
        new_m[l] = S @ (w * Lz).T @ (T[:, l] / sigma2)
        Tl = np.linalg.cholesky(S)
        new_raw[l] = np.tril(Tl, -1) + np.diag(np.log(np.diag(Tl)))
    return replace(state, m=new_m, L_raw=new_raw)


def decode_mean(state: GpModelState, mean_norm: np.ndarray) -> np.ndarray:
    phys = denormalize_targets(mean_norm, state.y_lo, state.y_hi)
    return np.clip(phys, state.y_lo, state.y_hi)


_CHECKPOINT_FORMAT = "swarmpref-gp"
_CHECKPOINT_VERSION = 1
_SCALARS = ("jitter", "max_jitter", "noise_lo", "noise_hi",
            "jitter_events", "clamp_events", "skipped_steps")
_ARRAYS = ("log_lengthscales", "log_signal", "W", "alpha", "beta", "Z", "m",
           "L_raw", "x_scale", "y_lo", "y_hi")


def save_model(state: GpModelState, path: str) -> None:
    payload = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "dims": {"latents": state.n_latents, "outputs": state.n_outputs,
                 "inducing": state.n_inducing, "features": state.input_dim},
        "arrays": {k: getattr(state, k).tolist() for k in _ARRAYS},
        "scalars": {k: getattr(state, k) for k in _SCALARS},
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f)
    os.replace(tmp, path)


def load_model(path: str) -> GpModelState:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"not a model checkpoint: {path}")
    if payload.get("version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    arrays = {k: np.asarray(payload["arrays"][k], dtype=float) for k in _ARRAYS}
    scalars = payload["scalars"]
    return GpModelState(
        **arrays,
        jitter=float(scalars["jitter"]),
        max_jitter=float(scalars["max_jitter"]),
        noise_lo=float(scalars["noise_lo"]),
        noise_hi=float(scalars["noise_hi"]),
        jitter_events=int(scalars["jitter_events"]),
        clamp_events=int(scalars["clamp_events"]),
        skipped_steps=int(scalars["skipped_steps"]),
    )
