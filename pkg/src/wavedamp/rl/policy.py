"""Small feed-forward stochastic policies with hand-rolled backprop.

Two hidden tanh layers of 64 units feed a Gaussian head with a
state-independent log-std; the ACC variant adds a 3-way categorical
head for the gap bar. Actions are sampled in an unbounded latent space
and mapped to their declared bounds with a tanh squash, so executed
actions always respect the bounds while log-probabilities stay exact
Gaussians (the squash Jacobian cancels in likelihood ratios).

Everything is plain numpy so gradients can be verified against finite
differences, and training is bit-reproducible from a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError, DomainError
from ..units import mps_to_mph

HIDDEN = 64
LOG_2PI = float(np.log(2.0 * np.pi))

ACCEL_BOUNDS = ((-3.0, 1.5),)     # m/s^2
ACC_SETTING_BOUNDS = ((20.0, 73.0),)  # mph
N_GAP_BARS = 3
FORMAT_VERSION = 1


def squash(u, bounds):
    """Map latent values onto [lo, hi] per dim via tanh."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    for d, (lo, hi) in enumerate(bounds):
        out[..., d] = lo + (np.tanh(u[..., d]) + 1.0) * 0.5 * (hi - lo)
    return out


def unsquash(a, bounds, eps=1e-6):
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    for d, (lo, hi) in enumerate(bounds):
        z = 2.0 * (a[..., d] - lo) / (hi - lo) - 1.0
        out[..., d] = np.arctanh(np.clip(z, -1.0 + eps, 1.0 - eps))
    return out


@dataclass
class Policy:
    """Weights plus variant metadata. Treat instances as immutable;
    updates produce a new Policy via ``with_params``."""

    variant: str                    # "accel" | "acc_low" | "acc_high"
    obs_dim: int
    params: dict
    bounds: tuple
    hidden: int = HIDDEN

    @property
    def has_categorical(self) -> bool:
        return self.variant.startswith("acc_")

    def with_params(self, params: dict) -> "Policy":
        return Policy(self.variant, self.obs_dim, params, self.bounds,
                      self.hidden)

    def _check(self, obs: np.ndarray):
        if obs.shape[-1] != self.obs_dim:
            raise ShapeError(
                f"obs length {obs.shape[-1]} != {self.obs_dim} "
                f"for variant {self.variant}")

    def trunk(self, X: np.ndarray):
        p = self.params
        Z1 = X @ p["W1"].T + p["b1"]
        H1 = np.tanh(Z1)
        Z2 = H1 @ p["W2"].T + p["b2"]
        H2 = np.tanh(Z2)
        return H1, H2

    def forward(self, obs):
        """Deterministic head outputs: (squashed mean, log_std[, logits])."""
        obs = np.asarray(obs, dtype=float)
        single = obs.ndim == 1
        X = obs[None, :] if single else obs
        self._check(X)
        p = self.params
        _, H2 = self.trunk(X)
        mu = H2 @ p["W_mu"].T + p["b_mu"]
        mean_action = squash(mu, self.bounds)
        out = [mean_action[0] if single else mean_action,
               p["log_std"].copy()]
        if self.has_categorical:
            logits = H2 @ p["W_cat"].T + p["b_cat"]
            out.append(logits[0] if single else logits)
        return tuple(out)

    def mean_action(self, obs):
        """Greedy action: squashed Gaussian mean (+ most likely gap bar)."""
        out = self.forward(obs)
        if self.has_categorical:
            return float(out[0][0]), int(np.argmax(out[2]) + 1)
        return float(out[0][0])

    def sample(self, obs, rng):
        """Stochastic action. Returns (env_action, latent, bar, logp);
        bar is None for the accel variant."""
        obs = np.asarray(obs, dtype=float)
        self._check(obs)
        p = self.params
        _, H2 = self.trunk(obs[None, :])
        mu = (H2 @ p["W_mu"].T + p["b_mu"])[0]
        std = np.exp(p["log_std"])
        u = mu + std * rng.standard_normal(mu.shape)
        logp = float(np.sum(-0.5 * ((u - mu) / std) ** 2
                            - p["log_std"] - 0.5 * LOG_2PI))
        action = squash(u, self.bounds)
        bar = None
        if self.has_categorical:
            logits = (H2 @ p["W_cat"].T + p["b_cat"])[0]
            z = logits - logits.max()
            probs = np.exp(z) / np.sum(np.exp(z))
            bar = int(rng.choice(N_GAP_BARS, p=probs)) + 1
            logp += float(np.log(probs[bar - 1]))
        return action, u, bar, logp

    def log_prob(self, X: np.ndarray, U: np.ndarray, bars=None) -> np.ndarray:
        """Batch log-probabilities of latent actions (plus bars)."""
        self._check(X)
        p = self.params
        _, H2 = self.trunk(X)
        MU = H2 @ p["W_mu"].T + p["b_mu"]
        std = np.exp(p["log_std"])
        logp = np.sum(-0.5 * ((U - MU) / std) ** 2 - p["log_std"]
                      - 0.5 * LOG_2PI, axis=1)
        if self.has_categorical:
            logits = H2 @ p["W_cat"].T + p["b_cat"]
            logz = logits - logits.max(axis=1, keepdims=True)
            logsoft = logz - np.log(np.sum(np.exp(logz), axis=1,
                                           keepdims=True))
            logp = logp + logsoft[np.arange(len(U)), np.asarray(bars) - 1]
        return logp

    def grad_weighted_logp(self, X: np.ndarray, U: np.ndarray,
                           weights: np.ndarray, bars=None) -> dict:
        """Gradients of sum_b w_b * log pi(u_b | x_b) w.r.t. every
        parameter. Backprop written out by hand; verified against
        central finite differences in the test suite."""
        self._check(X)
        p = self.params
        H1, H2 = self.trunk(X)
        MU = H2 @ p["W_mu"].T + p["b_mu"]
        std = np.exp(p["log_std"])
        w = np.asarray(weights, dtype=float)[:, None]

        # Gaussian head
        diff = (U - MU) / std ** 2              # d logp / d mu
        G_mu = w * diff                         # (B, da)
        g = {
            "W_mu": G_mu.T @ H2,
            "b_mu": G_mu.sum(axis=0),
            "log_std": np.sum(w * (((U - MU) / std) ** 2 - 1.0), axis=0),
        }
        dH2 = G_mu @ p["W_mu"]

        if self.has_categorical:
            logits = H2 @ p["W_cat"].T + p["b_cat"]
            z = logits - logits.max(axis=1, keepdims=True)
            soft = np.exp(z)
            soft /= soft.sum(axis=1, keepdims=True)
            onehot = np.zeros_like(soft)
            onehot[np.arange(len(U)), np.asarray(bars) - 1] = 1.0
            G_cat = w * (onehot - soft)
            g["W_cat"] = G_cat.T @ H2
            g["b_cat"] = G_cat.sum(axis=0)
            dH2 = dH2 + G_cat @ p["W_cat"]

        dZ2 = dH2 * (1.0 - H2 ** 2)
        g["W2"] = dZ2.T @ H1
        g["b2"] = dZ2.sum(axis=0)
        dH1 = dZ2 @ p["W2"]
        dZ1 = dH1 * (1.0 - H1 ** 2)
        g["W1"] = dZ1.T @ X
        g["b1"] = dZ1.sum(axis=0)
        return g

    def entropy(self) -> float:
        """Gaussian-head entropy (state independent)."""
        return float(np.sum(self.params["log_std"]
                            + 0.5 * (LOG_2PI + 1.0)))


def _layer(rng, n_out, n_in, scale=1.0):
    return rng.standard_normal((n_out, n_in)) * scale / np.sqrt(n_in)


def init_policy(variant: str, obs_dim: int, seed: int = 0,
                hidden: int = HIDDEN, mu_bias=None,
                log_std_init: float = np.log(0.5)) -> Policy:
    """Random policy. Head weights are scaled down so the initial mean
    action sits at mu_bias in latent space (0 -> midpoint of bounds)."""
    if variant == "accel":
        bounds = ACCEL_BOUNDS
    elif variant in ("acc_low", "acc_high"):
        bounds = ACC_SETTING_BOUNDS
    else:
        raise DomainError(f"unknown policy variant {variant!r}")
    da = len(bounds)
    rng = np.random.default_rng(seed)
    params = {
        "W1": _layer(rng, hidden, obs_dim),
        "b1": np.zeros(hidden),
        "W2": _layer(rng, hidden, hidden),
        "b2": np.zeros(hidden),
        "W_mu": _layer(rng, da, hidden, scale=0.01),
        "b_mu": np.zeros(da) if mu_bias is None
        else np.full(da, float(mu_bias)),
        "log_std": np.full(da, float(log_std_init)),
    }
    if variant.startswith("acc_"):
        params["W_cat"] = _layer(rng, N_GAP_BARS, hidden, scale=0.01)
        params["b_cat"] = np.zeros(N_GAP_BARS)
    return Policy(variant, obs_dim, params, bounds, hidden)


@dataclass(frozen=True)
class CompositeAccPolicy:
    """Deployed ACC controller: low-speed policy below the switch speed,
    high-speed policy at or above it. The switch is a pure function of
    the current speed."""

    low: Policy
    high: Policy
    switch_mph: float = 60.0

    def select(self, v_mps: float) -> str:
        return "high" if mps_to_mph(v_mps) >= self.switch_mph else "low"

    def active(self, v_mps: float) -> Policy:
        return self.high if self.select(v_mps) == "high" else self.low


def save_policy(policy: Policy, path) -> None:
    """Versioned weight dump: npz arrays plus a json layout header."""
    meta = {
        "format": "wavedamp-policy",
        "version": FORMAT_VERSION,
        "variant": policy.variant,
        "obs_dim": policy.obs_dim,
        "hidden": policy.hidden,
        "bounds": [list(b) for b in policy.bounds],
    }
    np.savez(path, __meta__=np.frombuffer(
        json.dumps(meta).encode(), dtype=np.uint8), **policy.params)


def load_policy(path) -> Policy:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != "wavedamp-policy":
            raise DomainError(f"{path} is not a policy file")
        if meta.get("version") != FORMAT_VERSION:
            raise DomainError(f"unsupported policy version {meta.get('version')}")
        params = {k: data[k].copy() for k in data.files if k != "__meta__"}
    return Policy(meta["variant"], int(meta["obs_dim"]), params,
                  tuple(tuple(b) for b in meta["bounds"]),
                  int(meta["hidden"]))
