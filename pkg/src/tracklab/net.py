"""ConvNet-LSTM actor-critic: forward pass, exact backprop through time, saliency."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .actionmap import CONTINUOUS2, VIRTUAL_HIGH, VIRTUAL_LOW, Action, space_size

STD_FLOOR = 1e-4
CHECKPOINT_MAGIC = b"TLCKPT01"


class ShapeMismatch(Exception):
    pass


class NonFiniteLoss(Exception):
    pass


@dataclass
class NetConfig:
    height: int = 84
    width: int = 84
    in_channels: int = 3
    conv1: tuple[int, int, int] = (16, 8, 4)  # filters, kernel, stride
    conv2: tuple[int, int, int] = (32, 4, 2)
    fc_dim: int = 256
    lstm_dim: int = 256
    action_space: str = "discrete6"

    def conv_shapes(self):
        f1, k1, s1 = self.conv1
        f2, k2, s2 = self.conv2
        h1 = (self.height - k1) // s1 + 1
        w1 = (self.width - k1) // s1 + 1
        h2 = (h1 - k2) // s2 + 1
        w2 = (w1 - k2) // s2 + 1
        if min(h1, w1, h2, w2) < 1:
            raise ShapeMismatch(f"conv stack does not fit a {self.height}x{self.width} input")
        return (h1, w1, f1), (h2, w2, f2)

    @property
    def flat_dim(self) -> int:
        (_, _, _), (h2, w2, f2) = self.conv_shapes()
        return h2 * w2 * f2

    @property
    def n_actions(self) -> int:
        return space_size(self.action_space)

    @property
    def continuous(self) -> bool:
        return self.action_space == CONTINUOUS2


@dataclass
class RecurrentState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "RecurrentState":
        return cls(h=np.zeros(dim), c=np.zeros(dim))


@dataclass
class PolicyOutput:
    value: float
    rec: RecurrentState
    probs: np.ndarray | None = None  # discrete
    mean: np.ndarray | None = None  # continuous
    std: np.ndarray | None = None


@dataclass
class NetworkParams:
    cfg: NetConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def copy(self) -> "NetworkParams":
        return NetworkParams(cfg=self.cfg, tensors={k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, key: str) -> np.ndarray:
        return self.tensors[key]


def _orthogonal(rng, rows, cols):
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a if rows >= cols else a.T)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def init_params(cfg: NetConfig, seed: int = 0) -> NetworkParams:
    """Scaled-uniform fan-in for conv/fc, orthogonal recurrent weights, zero
    biases, actor head shrunk for a near-uniform starting policy."""
    rng = np.random.default_rng(seed)
    (_, _, f1), (_, _, f2) = cfg.conv_shapes()
    k1 = cfg.conv1[1]
    k2 = cfg.conv2[1]
    H = cfg.lstm_dim

    def fan_uniform(fan_in, shape, gain=1.0):
        bound = gain * math.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    t = {
        "conv1_w": fan_uniform(k1 * k1 * cfg.in_channels, (k1 * k1 * cfg.in_channels, f1)),
        "conv1_b": np.zeros(f1),
        "conv2_w": fan_uniform(k2 * k2 * f1, (k2 * k2 * f1, f2)),
        "conv2_b": np.zeros(f2),
        "fc_w": fan_uniform(cfg.flat_dim, (cfg.flat_dim, cfg.fc_dim)),
        "fc_b": np.zeros(cfg.fc_dim),
        "lstm_wx": fan_uniform(cfg.fc_dim, (cfg.fc_dim, 4 * H)),
        "lstm_wh": np.concatenate([_orthogonal(rng, H, H) for _ in range(4)], axis=1),
        "lstm_b": np.zeros(4 * H),
        "critic_w": fan_uniform(H, (H, 1)),
        "critic_b": np.zeros(1),
    }
    if cfg.continuous:
        t["mu_w"] = fan_uniform(H, (H, 2), gain=0.01)
        t["mu_b"] = np.zeros(2)
        t["sigma_w"] = fan_uniform(H, (H, 2), gain=0.01)
        t["sigma_b"] = np.zeros(2)
    else:
        t["actor_w"] = fan_uniform(H, (H, cfg.n_actions), gain=0.01)
        t["actor_b"] = np.zeros(cfg.n_actions)
    return NetworkParams(cfg=cfg, tensors=t)


# ---------------------------------------------------------------------------
# primitive layers

def _im2col(x: np.ndarray, k: int, s: int) -> np.ndarray:
    """(T, H, W, C) -> (T, oh*ow, k*k*C) patch matrix."""
    T, H, W, C = x.shape
    oh = (H - k) // s + 1
    ow = (W - k) // s + 1
    st = x.strides
    shape = (T, oh, ow, k, k, C)
    strides = (st[0], st[1] * s, st[2] * s, st[1], st[2], st[3])
    patches = np.lib.stride_tricks.as_strided(x, shape, strides)
    return np.ascontiguousarray(patches).reshape(T, oh * ow, k * k * C)


def _col2im(dcols: np.ndarray, H: int, W: int, C: int, k: int, s: int) -> np.ndarray:
    """Adjoint of _im2col: scatter patch gradients back to (T, H, W, C)."""
    T = dcols.shape[0]
    oh = (H - k) // s + 1
    ow = (W - k) // s + 1
    patches = dcols.reshape(T, oh, ow, k, k, C)
    dx = np.zeros((T, H, W, C))
    for ky in range(k):
        for kx in range(k):
            dx[:, ky:ky + oh * s:s, kx:kx + ow * s:s, :] += patches[:, :, :, ky, kx, :]
    return dx


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z):
    return np.logaddexp(0.0, z)


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


# ---------------------------------------------------------------------------
# forward

def _check_obs(cfg: NetConfig, obs: np.ndarray):
    if obs.shape != (cfg.height, cfg.width, cfg.in_channels):
        raise ShapeMismatch(
            f"observation shape {obs.shape} != {(cfg.height, cfg.width, cfg.in_channels)}")


def forward_rollout(params: NetworkParams, obs_seq: np.ndarray, rec: RecurrentState):
    """Run the network over (T, H, W, C) observations, carrying the LSTM state.

    Returns (outputs, cache); the cache holds every intermediate needed by
    backward().
    """
    cfg = params.cfg
    t_ = params.tensors
    obs_seq = np.asarray(obs_seq, dtype=np.float64)
    if obs_seq.ndim != 4:
        raise ShapeMismatch("forward_rollout expects (T, H, W, C) observations")
    for fr in obs_seq:
        _check_obs(cfg, fr)
    # standardize each frame; raw [0,1] pixels leave a common-mode component that
    # dominates every feature vector and starves gradient-based training.
    # mean/std are treated as constants by the backward pass.
    mu = obs_seq.mean(axis=(1, 2, 3), keepdims=True)
    sd = obs_seq.std(axis=(1, 2, 3), keepdims=True)
    obs_seq = (obs_seq - mu) / (sd + 1e-5)
    if rec.h.shape != (cfg.lstm_dim,) or rec.c.shape != (cfg.lstm_dim,):
        raise ShapeMismatch("recurrent state sizes do not match lstm_dim")
    T = obs_seq.shape[0]
    (h1, w1, f1), (h2, w2, f2) = cfg.conv_shapes()
    _, k1, s1 = cfg.conv1
    _, k2, s2 = cfg.conv2
    H = cfg.lstm_dim

    cols1 = _im2col(obs_seq, k1, s1)  # (T, P1, kkC)
    z1 = cols1 @ t_["conv1_w"] + t_["conv1_b"]
    a1 = np.maximum(z1, 0.0)
    a1_img = a1.reshape(T, h1, w1, f1)
    cols2 = _im2col(a1_img, k2, s2)
    z2 = cols2 @ t_["conv2_w"] + t_["conv2_b"]
    a2 = np.maximum(z2, 0.0)
    flat = a2.reshape(T, cfg.flat_dim)
    zf = flat @ t_["fc_w"] + t_["fc_b"]
    phi = np.maximum(zf, 0.0)

    h = rec.h
    c = rec.c
    lstm_cache = []
    outputs = []
    for t in range(T):
        x = phi[t]
        z = x @ t_["lstm_wx"] + h @ t_["lstm_wh"] + t_["lstm_b"]
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = _sigmoid(z[3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        lstm_cache.append((x, h, c, i, f, g, o, tc))
        h, c = h_new, c_new
        value = float((h @ t_["critic_w"])[0] + t_["critic_b"][0])
        rec_out = RecurrentState(h=h.copy(), c=c.copy())
        if cfg.continuous:
            mean = h @ t_["mu_w"] + t_["mu_b"]
            u = h @ t_["sigma_w"] + t_["sigma_b"]
            std = _softplus(u) + STD_FLOOR
            outputs.append(PolicyOutput(value=value, rec=rec_out, mean=mean, std=std))
        else:
            logits = h @ t_["actor_w"] + t_["actor_b"]
            outputs.append(PolicyOutput(value=value, rec=rec_out, probs=_softmax(logits)))
    cache = {
        "obs": obs_seq, "cols1": cols1, "z1": z1, "a1_img": a1_img,
        "cols2": cols2, "z2": z2, "flat": flat, "zf": zf, "phi": phi,
        "lstm": lstm_cache, "outputs": outputs,
    }
    return outputs, cache


def forward(params: NetworkParams, obs: np.ndarray, rec: RecurrentState) -> PolicyOutput:
    outputs, _ = forward_rollout(params, np.asarray(obs)[None], rec)
    return outputs[0]


# ---------------------------------------------------------------------------
# loss and backward

def logpi_entropy(out: PolicyOutput, action: Action):
    if out.probs is None:
        a = np.asarray(action.velocity, dtype=np.float64)
        z = (a - out.mean) / out.std
        logpi = float((-0.5 * z * z - np.log(out.std) - 0.5 * math.log(2 * math.pi)).sum())
        entropy = float((0.5 * math.log(2 * math.pi * math.e) + np.log(out.std)).sum())
    else:
        p = out.probs[action.index]
        logpi = float(np.log(np.maximum(p, 1e-300)))
        entropy = float(-(out.probs * np.log(np.maximum(out.probs, 1e-300))).sum())
    return logpi, entropy


def rollout_loss(params: NetworkParams, obs_seq, actions, advantages, returns,
                 rec: RecurrentState, beta: float):
    """Scalar A3C loss of a rollout, computed by forward passes only.

    total = -sum(logpi * adv) - beta * sum(entropy) + 0.5 * sum((R - V)^2)
    """
    outputs, _ = forward_rollout(params, obs_seq, rec)
    return loss_from_outputs(outputs, actions, advantages, returns, beta)


def loss_from_outputs(outputs, actions, advantages, returns, beta):
    policy_loss = 0.0
    entropy_sum = 0.0
    value_loss = 0.0
    for out, a, adv, ret in zip(outputs, actions, advantages, returns):
        logpi, entropy = logpi_entropy(out, a)
        policy_loss -= logpi * adv
        entropy_sum += entropy
        value_loss += 0.5 * (ret - out.value) ** 2
    total = policy_loss - beta * entropy_sum + value_loss
    if not math.isfinite(total):
        raise NonFiniteLoss(f"loss is {total}")
    return total, {"policy": policy_loss, "entropy": entropy_sum, "value": value_loss}


def backward(params: NetworkParams, obs_seq, actions, advantages, returns,
             rec: RecurrentState, beta: float, cache=None, want_dx: bool = False):
    """Exact gradients of the rollout loss, backpropagated through time.

    Returns (grads, loss, components, dx). Advantages are treated as constants;
    dx (gradient w.r.t. the input frames) is only computed on request.
    """
    cfg = params.cfg
    t_ = params.tensors
    if cache is None:
        outputs, cache = forward_rollout(params, obs_seq, rec)
    else:
        outputs = cache["outputs"]
    loss, comps = loss_from_outputs(outputs, actions, advantages, returns, beta)

    T = len(outputs)
    H = cfg.lstm_dim
    (h1, w1, f1), (h2, w2, f2) = cfg.conv_shapes()
    _, k1, s1 = cfg.conv1
    _, k2, s2 = cfg.conv2
    g = params.zeros_like()

    # head gradients w.r.t. the LSTM output at each step
    dh_heads = np.zeros((T, H))
    for t in range(T):
        out = outputs[t]
        h_t = out.rec.h
        dvalue = -(returns[t] - out.value)  # d(0.5*(R-V)^2)/dV
        g["critic_w"][:, 0] += h_t * dvalue
        g["critic_b"][0] += dvalue
        dh = dvalue * t_["critic_w"][:, 0]
        if cfg.continuous:
            a = np.asarray(actions[t].velocity, dtype=np.float64)
            mean, std = out.mean, out.std
            # policy term: -(adv)*dlogpi; entropy term: -beta*dH
            dmean = -advantages[t] * (a - mean) / (std * std)
            dstd = -advantages[t] * ((a - mean) ** 2 / std ** 3 - 1.0 / std) - beta / std
            u = h_t @ t_["sigma_w"] + t_["sigma_b"]
            du = dstd * _sigmoid(u)
            g["mu_w"] += np.outer(h_t, dmean)
            g["mu_b"] += dmean
            g["sigma_w"] += np.outer(h_t, du)
            g["sigma_b"] += du
            dh = dh + t_["mu_w"] @ dmean + t_["sigma_w"] @ du
        else:
            p = out.probs
            onehot = np.zeros_like(p)
            onehot[actions[t].index] = 1.0
            logp = np.log(np.maximum(p, 1e-300))
            ent = -(p * logp).sum()
            dlogits = advantages[t] * (p - onehot) + beta * p * (logp + ent)
            g["actor_w"] += np.outer(h_t, dlogits)
            g["actor_b"] += dlogits
            dh = dh + t_["actor_w"] @ dlogits
        dh_heads[t] = dh

    # backprop through time
    dphi = np.zeros((T, cfg.fc_dim))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        x, h_prev, c_prev, i, f, gg, o, tc = cache["lstm"][t]
        dh = dh_heads[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * gg
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - gg * gg),
            do * o * (1.0 - o),
        ])
        g["lstm_wx"] += np.outer(x, dz)
        g["lstm_wh"] += np.outer(h_prev, dz)
        g["lstm_b"] += dz
        dphi[t] = t_["lstm_wx"] @ dz
        dh_next = t_["lstm_wh"] @ dz

    # feedforward stack, batched across time
    dzf = dphi * (cache["zf"] > 0.0)
    g["fc_w"] += cache["flat"].T @ dzf
    g["fc_b"] += dzf.sum(axis=0)
    dflat = dzf @ t_["fc_w"].T
    dz2 = dflat.reshape(T, h2 * w2, f2) * (cache["z2"] > 0.0)
    g["conv2_w"] += np.tensordot(cache["cols2"], dz2, axes=([0, 1], [0, 1]))
    g["conv2_b"] += dz2.sum(axis=(0, 1))
    dcols2 = dz2 @ t_["conv2_w"].T
    da1 = _col2im(dcols2, h1, w1, f1, k2, s2).reshape(T, h1 * w1, f1)
    dz1 = da1 * (cache["z1"] > 0.0)
    g["conv1_w"] += np.tensordot(cache["cols1"], dz1, axes=([0, 1], [0, 1]))
    g["conv1_b"] += dz1.sum(axis=(0, 1))
    dx = None
    if want_dx:
        dcols1 = dz1 @ t_["conv1_w"].T
        dx = _col2im(dcols1, cfg.height, cfg.width, cfg.in_channels, k1, s1)
    return g, loss, comps, dx


# ---------------------------------------------------------------------------
# action sampling and saliency

def sample_action(policy: PolicyOutput, rng: np.random.Generator, space: str) -> Action:
    """Stochastic draw from the policy; continuous draws clip to the table bounds."""
    if policy.probs is not None:
        idx = int(rng.choice(len(policy.probs), p=policy.probs / policy.probs.sum()))
        return Action(space=space, index=idx)
    raw = policy.mean + policy.std * rng.standard_normal(2)
    lin = min(max(float(raw[0]), VIRTUAL_LOW[0]), VIRTUAL_HIGH[0])
    ang = min(max(float(raw[1]), VIRTUAL_LOW[1]), VIRTUAL_HIGH[1])
    return Action(space=space, velocity=(lin, ang))


def greedy_action(policy: PolicyOutput, space: str) -> Action:
    """Deterministic evaluation action: argmax or the Gaussian mean."""
    if policy.probs is not None:
        return Action(space=space, index=int(np.argmax(policy.probs)))
    lin = min(max(float(policy.mean[0]), VIRTUAL_LOW[0]), VIRTUAL_HIGH[0])
    ang = min(max(float(policy.mean[1]), VIRTUAL_LOW[1]), VIRTUAL_HIGH[1])
    return Action(space=space, velocity=(lin, ang))


def saliency(params: NetworkParams, obs: np.ndarray, rec: RecurrentState,
             action: Action) -> np.ndarray:
    """Absolute input gradient of the chosen action's score, max over channels,
    normalized to [0, 1]."""
    cfg = params.cfg
    t_ = params.tensors
    outputs, cache = forward_rollout(params, np.asarray(obs)[None], rec)
    out = outputs[0]
    h_t = out.rec.h
    if cfg.continuous:
        a = np.asarray(action.velocity, dtype=np.float64)
        dmean = (a - out.mean) / (out.std * out.std)
        u = h_t @ t_["sigma_w"] + t_["sigma_b"]
        dstd = (a - out.mean) ** 2 / out.std ** 3 - 1.0 / out.std
        dh = t_["mu_w"] @ dmean + t_["sigma_w"] @ (dstd * _sigmoid(u))
    else:
        dh = t_["actor_w"][:, action.index].copy()

    H = cfg.lstm_dim
    (h1, w1, f1), (h2, w2, f2) = cfg.conv_shapes()
    _, k1, s1 = cfg.conv1
    _, k2, s2 = cfg.conv2
    x, h_prev, c_prev, i, f, gg, o, tc = cache["lstm"][0]
    do = dh * tc
    dc = dh * o * (1.0 - tc * tc)
    di = dc * gg
    dg = dc * i
    dz = np.concatenate([
        di * i * (1.0 - i),
        (dc * c_prev) * f * (1.0 - f),
        dg * (1.0 - gg * gg),
        do * o * (1.0 - o),
    ])
    dphi = (t_["lstm_wx"] @ dz)[None, :]
    dzf = dphi * (cache["zf"] > 0.0)
    dflat = dzf @ t_["fc_w"].T
    dz2 = dflat.reshape(1, h2 * w2, f2) * (cache["z2"] > 0.0)
    dcols2 = dz2 @ t_["conv2_w"].T
    da1 = _col2im(dcols2, h1, w1, f1, k2, s2).reshape(1, h1 * w1, f1)
    dz1 = da1 * (cache["z1"] > 0.0)
    dcols1 = dz1 @ t_["conv1_w"].T
    dx = _col2im(dcols1, cfg.height, cfg.width, cfg.in_channels, k1, s1)[0]
    m = np.abs(dx).max(axis=2)
    peak = m.max()
    return m / peak if peak > 0 else m


# ---------------------------------------------------------------------------
# checkpoints: versioned header, named tensors, little-endian float32 payload

def save_checkpoint(params: NetworkParams, path, meta: dict | None = None) -> None:
    names = sorted(params.tensors)
    header = {
        "cfg": {
            "height": params.cfg.height, "width": params.cfg.width,
            "in_channels": params.cfg.in_channels,
            "conv1": list(params.cfg.conv1), "conv2": list(params.cfg.conv2),
            "fc_dim": params.cfg.fc_dim, "lstm_dim": params.cfg.lstm_dim,
            "action_space": params.cfg.action_space,
        },
        "tensors": [{"name": n, "shape": list(params.tensors[n].shape)} for n in names],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            f.write(params.tensors[n].astype("<f4").tobytes())


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a tracklab checkpoint")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen))
        cfg = NetConfig(
            height=header["cfg"]["height"], width=header["cfg"]["width"],
            in_channels=header["cfg"]["in_channels"],
            conv1=tuple(header["cfg"]["conv1"]), conv2=tuple(header["cfg"]["conv2"]),
            fc_dim=header["cfg"]["fc_dim"], lstm_dim=header["cfg"]["lstm_dim"],
            action_space=header["cfg"]["action_space"],
        )
        tensors = {}
        for spec in header["tensors"]:
            n = int(np.prod(spec["shape"]))
            raw = np.frombuffer(f.read(4 * n), dtype="<f4")
            tensors[spec["name"]] = raw.reshape(spec["shape"]).astype(np.float64)
    return NetworkParams(cfg=cfg, tensors=tensors), header["meta"]
