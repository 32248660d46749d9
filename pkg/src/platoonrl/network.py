"""Attention policy network and centralized critic with exact gradients.

Everything is plain numpy with hand-written reverse-mode backward passes,
which keeps the desk-scale training loop dependency-free and lets the tests
verify every gradient against finite differences.

The actor encodes the agent's own (augmented) features and the raw features
of its predecessor and follower with a shared two-layer encoder, runs
multi-head scaled dot-product attention with the self embedding as the
query, mixes the attended heads through a linear layer and decodes the
concatenated self embedding and context into a squashed action triple
(alpha, beta, u_hat).  Absent neighbors are masked out of the softmax.

The critic is a plain affine stack mapping the concatenated global state and
all agents' actions to one scalar value.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, ContractError

FORMAT_VERSION = 1

NEIGHBOR_DIM = 5  # neighbors share only their raw features, never planned actions


@dataclass
class AttentionOutput:
    """Per-head softmax weights over [self, predecessor, follower] and context."""

    weights: np.ndarray   # (B, n_heads, 3), masked entries exactly 0
    context: np.ndarray   # (B, n_heads * d_model), after the mixing layer


def _affine_init(rng, fan_in, fan_out, dtype, bias=True):
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
    b = rng.uniform(-bound, bound, size=fan_out).astype(dtype) if bias else None
    return w, b


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def masked_softmax(scores: np.ndarray, mask: np.ndarray):
    """Softmax over the last axis restricted to unmasked entries.

    ``mask`` is a boolean vector over the last axis; masked entries come out
    exactly 0.  At least one entry must be unmasked.
    """
    neg = np.where(mask, scores, -np.inf)
    mx = neg.max(axis=-1, keepdims=True)
    ex = np.exp(neg - mx)
    return ex / ex.sum(axis=-1, keepdims=True)


def masked_softmax_backward(weights: np.ndarray, d_weights: np.ndarray):
    """Gradient w.r.t. the scores given the softmax output and its gradient.

    Rows of the result sum to zero; masked entries (weight 0) get gradient 0.
    """
    inner = (weights * d_weights).sum(axis=-1, keepdims=True)
    return weights * (d_weights - inner)


class AttentionActor:
    """Deterministic policy mapping local observations to an action triple."""

    def __init__(self, input_dim: int, has_pred: bool, has_foll: bool,
                 d_model: int = 64, n_heads: int = 2,
                 alpha_max: float = 1.0, beta_max: float = 1.0, u_max: float = 2.0,
                 seed: int = 0, dtype=np.float64):
        if input_dim < NEIGHBOR_DIM:
            raise ContractError(f"input_dim must be >= {NEIGHBOR_DIM}, got {input_dim}")
        self.input_dim = input_dim
        self.d_model = d_model
        self.n_heads = n_heads
        self.alpha_max = alpha_max
        self.beta_max = beta_max
        self.u_max = u_max
        self.dtype = np.dtype(dtype)
        self.mask = np.array([True, bool(has_pred), bool(has_foll)])
        # keep the scale a python float so float32 parameters stay float32
        self._scale = 1.0 / float(np.sqrt(d_model))

        d, f = d_model, n_heads * d_model
        rng = np.random.default_rng(seed)
        p = {}
        p["enc_w1"], p["enc_b1"] = _affine_init(rng, input_dim, d, self.dtype)
        p["enc_w2"], p["enc_b2"] = _affine_init(rng, d, d, self.dtype)
        p["att_wq"], _ = _affine_init(rng, d, f, self.dtype, bias=False)
        p["att_wk"], _ = _affine_init(rng, d, f, self.dtype, bias=False)
        p["att_wv"], _ = _affine_init(rng, d, f, self.dtype, bias=False)
        p["mix_w"], p["mix_b"] = _affine_init(rng, f, f, self.dtype)
        p["dec_w1"], p["dec_b1"] = _affine_init(rng, d + f, d, self.dtype)
        p["dec_w2"], p["dec_b2"] = _affine_init(rng, d, d, self.dtype)
        p["out_w"], p["out_b"] = _affine_init(rng, d, 3, self.dtype)
        self.params = p

    # -- building blocks -----------------------------------------------------

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Shared embedding of one feature matrix (B, input_dim) -> (B, d_model)."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ContractError(f"encoder expects (B, {self.input_dim}), got {x.shape}")
        p = self.params
        h1 = np.tanh(x @ p["enc_w1"] + p["enc_b1"])
        return np.tanh(h1 @ p["enc_w2"] + p["enc_b2"])

    def attend(self, z_self: np.ndarray, z_pred: np.ndarray, z_foll: np.ndarray) -> AttentionOutput:
        """Multi-head scaled dot-product attention of self over the entity set."""
        if not self.mask.any():
            raise ContractError("attention entity set is empty")
        B, d, M = z_self.shape[0], self.d_model, self.n_heads
        p = self.params
        z_ent = np.stack([z_self, z_pred, z_foll])                 # (3, B, d)
        q = (z_self @ p["att_wq"]).reshape(B, M, d)
        k = (z_ent.reshape(3 * B, d) @ p["att_wk"]).reshape(3, B, M, d)
        v = (z_ent.reshape(3 * B, d) @ p["att_wv"]).reshape(3, B, M, d)
        scores = np.einsum("bmd,ebmd->bme", q, k) * self._scale    # (B, M, 3)
        weights = masked_softmax(scores, self.mask)
        ctx = np.einsum("bme,ebmd->bmd", weights, v).reshape(B, M * d)
        mixed = ctx @ p["mix_w"] + p["mix_b"]
        return AttentionOutput(weights=weights, context=mixed)

    def squash(self, raw: np.ndarray) -> np.ndarray:
        """Map raw decoder outputs into the valid action box."""
        a = np.empty_like(raw)
        a[..., 0] = self.alpha_max * _sigmoid(raw[..., 0])
        a[..., 1] = self.beta_max * _sigmoid(raw[..., 1])
        a[..., 2] = self.u_max * np.tanh(raw[..., 2])
        return a

    # -- forward / backward ---------------------------------------------------

    def forward(self, x_self, x_pred, x_foll, want_cache: bool = False):
        """Batched policy evaluation.

        ``x_self`` is (B, input_dim); ``x_pred``/``x_foll`` are the neighbors'
        raw features (B, 5) and may be None when the corresponding slot is
        masked.  Returns squashed actions (B, 3) and, on request, the cache
        needed for ``backward``.
        """
        p = self.params
        x_self = np.asarray(x_self, dtype=self.dtype)
        if x_self.ndim != 2 or x_self.shape[1] != self.input_dim:
            raise ContractError(f"actor expects (B, {self.input_dim}), got {x_self.shape}")
        B, d, M = x_self.shape[0], self.d_model, self.n_heads

        x_ent = np.zeros((3, B, self.input_dim), dtype=self.dtype)
        x_ent[0] = x_self
        if x_pred is not None:
            x_ent[1, :, :NEIGHBOR_DIM] = np.asarray(x_pred, dtype=self.dtype)
        if x_foll is not None:
            x_ent[2, :, :NEIGHBOR_DIM] = np.asarray(x_foll, dtype=self.dtype)
        xe = x_ent.reshape(3 * B, self.input_dim)

        h1 = np.tanh(xe @ p["enc_w1"] + p["enc_b1"])
        z = np.tanh(h1 @ p["enc_w2"] + p["enc_b2"])               # (3B, d)
        zr = z.reshape(3, B, d)
        z_self = zr[0]

        q = (z_self @ p["att_wq"]).reshape(B, M, d)
        k = (z @ p["att_wk"]).reshape(3, B, M, d)
        v = (z @ p["att_wv"]).reshape(3, B, M, d)
        scores = np.einsum("bmd,ebmd->bme", q, k) * self._scale
        att = masked_softmax(scores, self.mask)                    # (B, M, 3)
        ctx = np.einsum("bme,ebmd->bmd", att, v).reshape(B, M * d)
        mixed = ctx @ p["mix_w"] + p["mix_b"]

        dec_in = np.concatenate([z_self, mixed], axis=1)
        d1 = np.tanh(dec_in @ p["dec_w1"] + p["dec_b1"])
        d2 = np.tanh(d1 @ p["dec_w2"] + p["dec_b2"])
        raw = d2 @ p["out_w"] + p["out_b"]

        sig0 = _sigmoid(raw[:, 0])
        sig1 = _sigmoid(raw[:, 1])
        th2 = np.tanh(raw[:, 2])
        actions = np.stack([self.alpha_max * sig0, self.beta_max * sig1,
                            self.u_max * th2], axis=1)
        if not want_cache:
            return actions
        cache = {"xe": xe, "h1": h1, "z": z, "q": q, "k": k, "v": v,
                 "att": att, "ctx": ctx, "dec_in": dec_in, "d1": d1, "d2": d2,
                 "sig0": sig0, "sig1": sig1, "th2": th2, "B": B}
        return actions, cache

    def backward(self, cache, d_action):
        """Parameter gradients for an upstream gradient on the squashed actions."""
        if cache is None:
            raise ContractError("backward called without a recorded forward pass")
        p = self.params
        B, d, M = cache["B"], self.d_model, self.n_heads
        d_action = np.asarray(d_action, dtype=self.dtype)

        draw = np.empty((B, 3), dtype=self.dtype)
        s0, s1, t2 = cache["sig0"], cache["sig1"], cache["th2"]
        draw[:, 0] = d_action[:, 0] * self.alpha_max * s0 * (1.0 - s0)
        draw[:, 1] = d_action[:, 1] * self.beta_max * s1 * (1.0 - s1)
        draw[:, 2] = d_action[:, 2] * self.u_max * (1.0 - t2 * t2)

        g = {}
        d2, d1, dec_in = cache["d2"], cache["d1"], cache["dec_in"]
        g["out_w"] = d2.T @ draw
        g["out_b"] = draw.sum(axis=0)
        dd2 = (draw @ p["out_w"].T) * (1.0 - d2 * d2)
        g["dec_w2"] = d1.T @ dd2
        g["dec_b2"] = dd2.sum(axis=0)
        dd1 = (dd2 @ p["dec_w2"].T) * (1.0 - d1 * d1)
        g["dec_w1"] = dec_in.T @ dd1
        g["dec_b1"] = dd1.sum(axis=0)
        ddec_in = dd1 @ p["dec_w1"].T
        dz_self = ddec_in[:, :d].copy()
        dmixed = ddec_in[:, d:]

        ctx, att, q, k, v, z = cache["ctx"], cache["att"], cache["q"], cache["k"], cache["v"], cache["z"]
        g["mix_w"] = ctx.T @ dmixed
        g["mix_b"] = dmixed.sum(axis=0)
        dctx = (dmixed @ p["mix_w"].T).reshape(B, M, d)
        datt = np.einsum("bmd,ebmd->bme", dctx, v)
        dv = np.einsum("bme,bmd->ebmd", att, dctx)
        dscores = masked_softmax_backward(att, datt) * self._scale
        dq = np.einsum("bme,ebmd->bmd", dscores, k).reshape(B, M * d)
        dk = np.einsum("bme,bmd->ebmd", dscores, q).reshape(3 * B, M * d)
        z_self = z.reshape(3, B, d)[0]
        g["att_wq"] = z_self.T @ dq
        g["att_wk"] = z.T @ dk
        g["att_wv"] = z.T @ dv.reshape(3 * B, M * d)
        dz = dk @ p["att_wk"].T + dv.reshape(3 * B, M * d) @ p["att_wv"].T
        dz = dz.reshape(3, B, d)
        dz[0] += dz_self + (dq @ p["att_wq"].T)
        dz = dz.reshape(3 * B, d)

        h1, xe = cache["h1"], cache["xe"]
        da2 = dz * (1.0 - cache["z"] ** 2)
        g["enc_w2"] = h1.T @ da2
        g["enc_b2"] = da2.sum(axis=0)
        da1 = (da2 @ p["enc_w2"].T) * (1.0 - h1 * h1)
        g["enc_w1"] = xe.T @ da1
        g["enc_b1"] = da1.sum(axis=0)
        return g

    # -- convenience ----------------------------------------------------------

    def act(self, x_self, x_pred, x_foll):
        """Single-observation policy call; returns (action (3,), head weights (M, 3))."""
        out = self.forward(np.atleast_2d(x_self),
                           None if x_pred is None else np.atleast_2d(x_pred),
                           None if x_foll is None else np.atleast_2d(x_foll),
                           want_cache=True)
        actions, cache = out
        return actions[0], cache["att"][0]

    def copy(self) -> "AttentionActor":
        dup = AttentionActor(self.input_dim, bool(self.mask[1]), bool(self.mask[2]),
                             d_model=self.d_model, n_heads=self.n_heads,
                             alpha_max=self.alpha_max, beta_max=self.beta_max,
                             u_max=self.u_max, dtype=self.dtype)
        dup.params = {k: v.copy() for k, v in self.params.items()}
        return dup

    def arch(self) -> dict:
        return {"input_dim": self.input_dim, "d_model": self.d_model,
                "n_heads": self.n_heads, "alpha_max": self.alpha_max,
                "beta_max": self.beta_max, "u_max": self.u_max,
                "has_pred": bool(self.mask[1]), "has_foll": bool(self.mask[2])}


class Critic:
    """Scalar value of the concatenated global state and all agents' actions."""

    def __init__(self, input_dim: int, hidden: tuple = (256, 256), seed: int = 0,
                 dtype=np.float64):
        self.input_dim = input_dim
        self.hidden = tuple(hidden)
        self.dtype = np.dtype(dtype)
        h1, h2 = self.hidden
        rng = np.random.default_rng(seed)
        p = {}
        p["w1"], p["b1"] = _affine_init(rng, input_dim, h1, self.dtype)
        p["w2"], p["b2"] = _affine_init(rng, h1, h2, self.dtype)
        p["w3"], p["b3"] = _affine_init(rng, h2, 1, self.dtype)
        self.params = p

    def forward(self, x, want_cache: bool = False):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ContractError(f"critic expects (B, {self.input_dim}), got {x.shape}")
        p = self.params
        h1 = np.tanh(x @ p["w1"] + p["b1"])
        h2 = np.tanh(h1 @ p["w2"] + p["b2"])
        q = (h2 @ p["w3"] + p["b3"])[:, 0]
        if not want_cache:
            return q
        return q, {"x": x, "h1": h1, "h2": h2}

    def backward(self, cache, dq):
        """Gradients for an upstream (B,) gradient on the scalar outputs.

        Returns ``(param_grads, input_grads)``; the input gradient feeds the
        policy-gradient chain through the action slice of the critic input.
        """
        if cache is None:
            raise ContractError("backward called without a recorded forward pass")
        p = self.params
        x, h1, h2 = cache["x"], cache["h1"], cache["h2"]
        dq = np.asarray(dq, dtype=self.dtype).reshape(-1, 1)
        g = {}
        g["w3"] = h2.T @ dq
        g["b3"] = dq.sum(axis=0)
        dh2 = (dq @ p["w3"].T) * (1.0 - h2 * h2)
        g["w2"] = h1.T @ dh2
        g["b2"] = dh2.sum(axis=0)
        dh1 = (dh2 @ p["w2"].T) * (1.0 - h1 * h1)
        g["w1"] = x.T @ dh1
        g["b1"] = dh1.sum(axis=0)
        dx = dh1 @ p["w1"].T
        return g, dx

    def input_gradients(self, cache, dq) -> np.ndarray:
        """Gradient w.r.t. the inputs only (skips the parameter gradients)."""
        if cache is None:
            raise ContractError("backward called without a recorded forward pass")
        p = self.params
        h1, h2 = cache["h1"], cache["h2"]
        dq = np.asarray(dq, dtype=self.dtype).reshape(-1, 1)
        dh2 = (dq @ p["w3"].T) * (1.0 - h2 * h2)
        dh1 = (dh2 @ p["w2"].T) * (1.0 - h1 * h1)
        return dh1 @ p["w1"].T

    def copy(self) -> "Critic":
        dup = Critic(self.input_dim, hidden=self.hidden, dtype=self.dtype)
        dup.params = {k: v.copy() for k, v in self.params.items()}
        return dup

    def arch(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": list(self.hidden)}


# -- checkpoint serialization ---------------------------------------------------


def save_checkpoint(path, actors, critics, extra_meta: dict | None = None) -> None:
    """Write all agents' parameters plus an architecture header to ``path`` (.npz)."""
    meta = {
        "format_version": FORMAT_VERSION,
        "n_agents": len(actors),
        "dtype": str(actors[0].dtype),
        "actors": [a.arch() for a in actors],
        "critics": [c.arch() for c in critics],
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = {"__meta__": np.asarray(json.dumps(meta))}
    for i, a in enumerate(actors):
        for name, arr in a.params.items():
            arrays[f"actor{i}_{name}"] = arr
    for i, c in enumerate(critics):
        for name, arr in c.params.items():
            arrays[f"critic{i}_{name}"] = arr
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Rebuild actors and critics from a checkpoint; validates every shape.

    Returns ``(meta, actors, critics)``.  Raises CheckpointError when the file
    does not carry a compatible header or any parameter is missing or has the
    wrong shape.
    """
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise CheckpointError(f"{path}: missing checkpoint header")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version "
                                  f"{meta.get('format_version')}")
        dtype = np.dtype(meta["dtype"])
        actors, critics = [], []
        for i, arch in enumerate(meta["actors"]):
            actor = AttentionActor(arch["input_dim"], arch["has_pred"], arch["has_foll"],
                                   d_model=arch["d_model"], n_heads=arch["n_heads"],
                                   alpha_max=arch["alpha_max"], beta_max=arch["beta_max"],
                                   u_max=arch["u_max"], dtype=dtype)
            _fill_params(data, f"actor{i}_", actor.params, path)
            actors.append(actor)
        for i, arch in enumerate(meta["critics"]):
            critic = Critic(arch["input_dim"], hidden=tuple(arch["hidden"]), dtype=dtype)
            _fill_params(data, f"critic{i}_", critic.params, path)
            critics.append(critic)
    return meta, actors, critics


def _fill_params(data, prefix, params, path):
    for name, arr in params.items():
        key = prefix + name
        if key not in data:
            raise CheckpointError(f"{path}: missing parameter {key}")
        loaded = data[key]
        if loaded.shape != arr.shape:
            raise CheckpointError(f"{path}: {key} has shape {loaded.shape}, "
                                  f"expected {arr.shape}")
        params[name] = loaded.astype(arr.dtype)
