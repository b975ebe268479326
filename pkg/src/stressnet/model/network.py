"""The self-attention stress classifier: embedding, forward pass, weighted
cross-entropy loss, and hand-derived reverse-mode gradients.

Input embedding per syllable i:

    v_i = E_pos(p_i) + E_type(t_i) + x_i C

with the type term dropped entirely in the numerical-only feature modes.
Padded slots stay exact zero vectors. The encoder is pre-norm: each layer
adds masked multi-head self-attention and a ReLU feed-forward block on a
residual stream; attention scores toward padded keys are set to -inf
before the softmax, so padded slots receive exactly zero attention weight
and contribute nothing to any valid slot. A final layer norm feeds one
shared linear head producing 3 logits per slot.

Everything runs in float64; gradients are exact (verified against central
finite differences in the test suite).
"""

from __future__ import annotations

import numpy as np

from ..errors import LabelError, NumericalInstability, ShapeError
from ..lexicon import PAD_TYPE_INDEX
from .config import ModelConfig

LN_EPS = 1e-5

Params = dict[str, np.ndarray]


# --- parameters --------------------------------------------------------------

def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: ModelConfig, rng: np.random.Generator) -> Params:
    """Seeded initialization: Xavier-uniform weight matrices, N(0, 0.02)
    embeddings (PAD type row pinned to zero), zero biases, unit LN gains."""
    D, Hd, F = config.d_model, config.n_heads * config.head_dim, config.ffn_dim
    K = config.feature_dim
    p: Params = {}
    p["E_pos"] = rng.normal(0.0, 0.02, size=(config.max_positions, D))
    if config.uses_type_embedding:
        p["E_type"] = rng.normal(0.0, 0.02, size=(PAD_TYPE_INDEX + 1, D))
        p["E_type"][PAD_TYPE_INDEX] = 0.0
    p["C"] = _xavier(rng, K, D)
    for l in range(config.n_layers):
        pre = f"layers.{l}."
        p[pre + "ln1.gamma"] = np.ones(D)
        p[pre + "ln1.beta"] = np.zeros(D)
        for name in ("Wq", "Wk", "Wv"):
            p[pre + "attn." + name] = _xavier(rng, D, Hd)
        p[pre + "attn.bq"] = np.zeros(Hd)
        p[pre + "attn.bk"] = np.zeros(Hd)
        p[pre + "attn.bv"] = np.zeros(Hd)
        p[pre + "attn.Wo"] = _xavier(rng, Hd, D)
        p[pre + "attn.bo"] = np.zeros(D)
        p[pre + "ln2.gamma"] = np.ones(D)
        p[pre + "ln2.beta"] = np.zeros(D)
        p[pre + "ffn.W1"] = _xavier(rng, D, F)
        p[pre + "ffn.b1"] = np.zeros(F)
        p[pre + "ffn.W2"] = _xavier(rng, F, D)
        p[pre + "ffn.b2"] = np.zeros(D)
    p["final_ln.gamma"] = np.ones(D)
    p["final_ln.beta"] = np.zeros(D)
    p["head.W"] = _xavier(rng, D, config.n_classes)
    p["head.b"] = np.zeros(config.n_classes)
    return p


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


# --- primitive forward/backward ----------------------------------------------

def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, gamma)


def _layer_norm_backward(dy: np.ndarray, cache):
    xhat, inv, gamma = cache
    dgamma = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    dbeta = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dgamma, dbeta


def _masked_softmax(scores: np.ndarray, key_mask: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with masked keys receiving exact zero."""
    neg = np.where(key_mask, scores, -np.inf)
    m = neg.max(axis=-1, keepdims=True)
    e = np.exp(neg - m)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(dA: np.ndarray, A: np.ndarray) -> np.ndarray:
    return A * (dA - (dA * A).sum(axis=-1, keepdims=True))


def _dropout_mask(rng: np.random.Generator, shape, p: float) -> np.ndarray:
    return (rng.random(shape) >= p).astype(np.float64) / (1.0 - p)


# --- embedding ---------------------------------------------------------------

def embed(features: np.ndarray, types: np.ndarray, mask: np.ndarray,
          params: Params, config: ModelConfig) -> np.ndarray:
    """Eq-style input sum -> (B, P, D); padded rows are exact zeros."""
    B, P, K = features.shape
    if K != config.feature_dim:
        raise ShapeError(
            f"feature dim {K} does not match mode {config.feature_mode!r} "
            f"(expected {config.feature_dim})")
    if P != config.max_positions:
        raise ShapeError(f"expected {config.max_positions} slots, got {P}")
    V = features @ params["C"] + params["E_pos"][None, :, :]
    if config.uses_type_embedding:
        V = V + params["E_type"][types]
    return V * mask[..., None]


# --- forward -----------------------------------------------------------------

def forward(params: Params, features: np.ndarray, types: np.ndarray,
            mask: np.ndarray, config: ModelConfig, *,
            train: bool = False, rng: np.random.Generator | None = None,
            need_cache: bool = False, collect_attention: bool = False):
    """Run the encoder; returns (logits, probs, cache, attention).

    cache is None unless need_cache; attention is a list of per-layer
    (B, H, P, P) weight tensors when collect_attention is set.
    """
    B, P = mask.shape
    H, dh = config.n_heads, config.head_dim
    scale = 1.0 / np.sqrt(dh)
    use_dropout = train and config.dropout > 0.0
    if use_dropout and rng is None:
        raise ShapeError("training forward needs an rng for dropout")
    key_mask = mask[:, None, None, :]  # (B,1,1,P)

    x = embed(features, types, mask, params, config)
    cache: dict = {"embed_in": features, "layers": []} if need_cache else None
    attention: list[np.ndarray] = [] if collect_attention else None

    for l in range(config.n_layers):
        pre = f"layers.{l}."
        a_in, ln1_cache = _layer_norm(
            x, params[pre + "ln1.gamma"], params[pre + "ln1.beta"])
        q = a_in @ params[pre + "attn.Wq"] + params[pre + "attn.bq"]
        k = a_in @ params[pre + "attn.Wk"] + params[pre + "attn.bk"]
        v = a_in @ params[pre + "attn.Wv"] + params[pre + "attn.bv"]
        qh = q.reshape(B, P, H, dh).transpose(0, 2, 1, 3)
        kh = k.reshape(B, P, H, dh).transpose(0, 2, 1, 3)
        vh = v.reshape(B, P, H, dh).transpose(0, 2, 1, 3)
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        A = _masked_softmax(scores, key_mask)
        if collect_attention:
            attention.append(A)
        ctxh = A @ vh
        ctx = ctxh.transpose(0, 2, 1, 3).reshape(B, P, H * dh)
        o = ctx @ params[pre + "attn.Wo"] + params[pre + "attn.bo"]
        drop1 = _dropout_mask(rng, o.shape, config.dropout) if use_dropout else None
        if drop1 is not None:
            o = o * drop1
        x_mid = x + o

        f_in, ln2_cache = _layer_norm(
            x_mid, params[pre + "ln2.gamma"], params[pre + "ln2.beta"])
        u = f_in @ params[pre + "ffn.W1"] + params[pre + "ffn.b1"]
        r = np.maximum(u, 0.0)
        f = r @ params[pre + "ffn.W2"] + params[pre + "ffn.b2"]
        drop2 = _dropout_mask(rng, f.shape, config.dropout) if use_dropout else None
        if drop2 is not None:
            f = f * drop2
        x_out = x_mid + f

        if need_cache:
            cache["layers"].append({
                "ln1": ln1_cache, "a_in": a_in, "A": A, "qh": qh, "kh": kh,
                "vh": vh, "ctx": ctx, "drop1": drop1,
                "ln2": ln2_cache, "f_in": f_in, "u": u, "r": r, "drop2": drop2,
            })
        x = x_out

    xf, lnf_cache = _layer_norm(x, params["final_ln.gamma"], params["final_ln.beta"])
    logits = xf @ params["head.W"] + params["head.b"]
    if not np.isfinite(logits[mask]).all():
        raise NumericalInstability("non-finite logits in forward pass")
    lmax = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - lmax)
    probs = e / e.sum(axis=-1, keepdims=True)
    if need_cache:
        cache.update({"lnf": lnf_cache, "xf": xf, "types": types, "mask": mask,
                      "key_mask": key_mask, "probs": probs})
    return logits, probs, cache, attention


# --- loss --------------------------------------------------------------------

def position_weights(weight_table: np.ndarray | None, types: np.ndarray,
                     labels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-slot loss weights from a (16, 3) table; 1.0 when table is None."""
    w = np.zeros(mask.shape)
    if weight_table is None:
        w[mask] = 1.0
        return w
    valid = np.where(mask)
    w[valid] = weight_table[types[valid], labels[valid]]
    return w


def loss_from_logits(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray,
                     weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Weighted mean cross-entropy over valid slots and its dlogits.

    loss = sum_i w_i * CE_i / n_valid over valid slots i; padded slots
    contribute exactly zero, in value and in gradient.
    """
    if np.any((labels < 0) & mask):
        raise LabelError("IGNORE label at a valid position")
    n_valid = int(mask.sum())
    if n_valid == 0:
        raise LabelError("batch has no valid positions")
    lmax = logits.max(axis=-1, keepdims=True)
    shifted = logits - lmax
    logsumexp = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logsumexp
    b, p = np.where(mask)
    nll = -logp[b, p, labels[b, p]]
    total = float((weights[b, p] * nll).sum() / n_valid)

    probs = np.exp(logp)
    dlogits = np.zeros_like(logits)
    dlogits[b, p] = probs[b, p] * weights[b, p, None]
    dlogits[b, p, labels[b, p]] -= weights[b, p]
    dlogits /= n_valid
    return total, dlogits


# --- backward ----------------------------------------------------------------

def backward(params: Params, cache: dict, dlogits: np.ndarray,
             config: ModelConfig) -> Params:
    """Exact reverse-mode gradients of the scalar loss w.r.t. every
    parameter. The PAD row of the type embedding is forced to zero."""
    B, P, _ = dlogits.shape
    H, dh = config.n_heads, config.head_dim
    scale = 1.0 / np.sqrt(dh)
    grads = zeros_like_params(params)
    mask = cache["mask"]

    xf = cache["xf"]
    grads["head.W"] = xf.reshape(-1, config.d_model).T @ dlogits.reshape(-1, 3)
    grads["head.b"] = dlogits.sum(axis=(0, 1))
    dxf = dlogits @ params["head.W"].T
    dx, dg, db = _layer_norm_backward(dxf, cache["lnf"])
    grads["final_ln.gamma"], grads["final_ln.beta"] = dg, db

    for l in reversed(range(config.n_layers)):
        pre = f"layers.{l}."
        c = cache["layers"][l]
        # feed-forward block
        df = dx if c["drop2"] is None else dx * c["drop2"]
        grads[pre + "ffn.W2"] = c["r"].reshape(-1, config.ffn_dim).T \
            @ df.reshape(-1, config.d_model)
        grads[pre + "ffn.b2"] = df.sum(axis=(0, 1))
        dr = df @ params[pre + "ffn.W2"].T
        du = dr * (c["u"] > 0.0)
        grads[pre + "ffn.W1"] = c["f_in"].reshape(-1, config.d_model).T \
            @ du.reshape(-1, config.ffn_dim)
        grads[pre + "ffn.b1"] = du.sum(axis=(0, 1))
        df_in = du @ params[pre + "ffn.W1"].T
        dx_ln, dg, db = _layer_norm_backward(df_in, c["ln2"])
        grads[pre + "ln2.gamma"], grads[pre + "ln2.beta"] = dg, db
        dx = dx + dx_ln

        # attention block
        do = dx if c["drop1"] is None else dx * c["drop1"]
        grads[pre + "attn.Wo"] = c["ctx"].reshape(-1, H * dh).T \
            @ do.reshape(-1, config.d_model)
        grads[pre + "attn.bo"] = do.sum(axis=(0, 1))
        dctx = do @ params[pre + "attn.Wo"].T
        dctxh = dctx.reshape(B, P, H, dh).transpose(0, 2, 1, 3)
        dA = dctxh @ c["vh"].transpose(0, 1, 3, 2)
        dvh = c["A"].transpose(0, 1, 3, 2) @ dctxh
        dS = _softmax_backward(dA, c["A"])
        dqh = (dS @ c["kh"]) * scale
        dkh = (dS.transpose(0, 1, 3, 2) @ c["qh"]) * scale
        dq = dqh.transpose(0, 2, 1, 3).reshape(B, P, H * dh)
        dk = dkh.transpose(0, 2, 1, 3).reshape(B, P, H * dh)
        dv = dvh.transpose(0, 2, 1, 3).reshape(B, P, H * dh)
        a_in2 = c["a_in"].reshape(-1, config.d_model)
        grads[pre + "attn.Wq"] = a_in2.T @ dq.reshape(-1, H * dh)
        grads[pre + "attn.Wk"] = a_in2.T @ dk.reshape(-1, H * dh)
        grads[pre + "attn.Wv"] = a_in2.T @ dv.reshape(-1, H * dh)
        grads[pre + "attn.bq"] = dq.sum(axis=(0, 1))
        grads[pre + "attn.bk"] = dk.sum(axis=(0, 1))
        grads[pre + "attn.bv"] = dv.sum(axis=(0, 1))
        da_in = (dq @ params[pre + "attn.Wq"].T
                 + dk @ params[pre + "attn.Wk"].T
                 + dv @ params[pre + "attn.Wv"].T)
        dx_ln, dg, db = _layer_norm_backward(da_in, c["ln1"])
        grads[pre + "ln1.gamma"], grads[pre + "ln1.beta"] = dg, db
        dx = dx + dx_ln

    # embedding backward; padded rows were zeroed in embed, so their
    # upstream gradient must not reach any parameter
    dV = dx * mask[..., None]
    feats = cache["embed_in"]
    grads["C"] = np.einsum("bpk,bpd->kd", feats * mask[..., None], dV)
    grads["E_pos"] = dV.sum(axis=0)
    if config.uses_type_embedding:
        dE = np.zeros_like(params["E_type"])
        np.add.at(dE, cache["types"].reshape(-1), dV.reshape(-1, config.d_model))
        dE[PAD_TYPE_INDEX] = 0.0
        grads["E_type"] = dE
    return grads


def loss_and_grads(params: Params, features: np.ndarray, types: np.ndarray,
                   mask: np.ndarray, labels: np.ndarray, weights: np.ndarray,
                   config: ModelConfig, *, train: bool = False,
                   rng: np.random.Generator | None = None,
                   ) -> tuple[float, Params, np.ndarray]:
    """One forward/backward pass; returns (loss, gradients, probabilities)."""
    logits, probs, cache, _ = forward(
        params, features, types, mask, config,
        train=train, rng=rng, need_cache=True)
    total, dlogits = loss_from_logits(logits, labels, mask, weights)
    grads = backward(params, cache, dlogits, config)
    return total, grads, probs
