"""Dynamic graph attention network over the pooled graph.

Attention logits combine query/key projections, an encoded time difference,
the neighbour's NFS score and the similarity of global walk embeddings.
Gradients come from :mod:`reviewnet.autodiff`; training uses Adam with L2
weight decay and early stopping on validation loss.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import Tensor, as_tensor, concat, log_softmax, numeric_grad, parameter, segment_softmax, segment_sum, take

log = logging.getLogger(__name__)

ABLATIONS = ("full", "A_no_nfs", "B_no_temporal", "C_type_agnostic", "D_nfs_only", "no_attention")
# the no-attention baseline is mean-aggregation propagation without the NFS module
NFS_FREE = ("A_no_nfs", "no_attention")
ABLATION_ALIASES = {
    "A": "A_no_nfs", "B": "B_no_temporal", "C": "C_type_agnostic", "D": "D_nfs_only", "N": "no_attention",
}


def resolve_ablation(name: str) -> str:
    name = ABLATION_ALIASES.get(name, name)
    if name not in ABLATIONS:
        raise ValueError(f"unknown ablation {name!r}; choose from {ABLATIONS}")
    return name


class DivergenceError(RuntimeError):
    pass


@dataclass
class DgaConfig:
    layers: int = 2
    hidden: int = 8
    heads: int = 4
    lr: float = 0.005
    weight_decay: float = 5e-4
    dropout: float = 0.3
    patience: int = 200
    max_epochs: int = 1000
    seed: int = 72
    leaky_slope: float = 0.2
    gamma: float = 0.5
    lam: float = 0.2
    time_dim: int = 8
    time_form: str = "encoded"  # "encoded": W_t(e_tv - e_tu); "raw": W_t(t_v - t_u)
    ablation: str = "full"

    def __post_init__(self):
        self.ablation = resolve_ablation(self.ablation)
        if min(self.layers, self.hidden, self.heads, self.time_dim, self.max_epochs) < 1:
            raise ValueError("layers, hidden, heads, time_dim and max_epochs must be >= 1")
        if self.lr <= 0 or self.weight_decay < 0 or not 0 <= self.dropout < 1 or self.patience < 1:
            raise ValueError("invalid optimisation settings")
        if self.time_form not in ("encoded", "raw"):
            raise ValueError("time_form must be 'encoded' or 'raw'")

    @property
    def uses_time(self) -> bool:
        return self.ablation != "B_no_temporal"

    @property
    def uses_nfs(self) -> bool:
        return self.ablation not in NFS_FREE

    @property
    def typed(self) -> bool:
        return self.ablation != "C_type_agnostic"

    @property
    def attention(self) -> bool:
        return self.ablation != "no_attention"

    @property
    def effective_gamma(self) -> float:
        return self.gamma if self.uses_nfs else 0.0


@dataclass
class GraphInput:
    """Everything the network reads about a (pooled) graph.

    ``src``/``dst`` list directed edges without self-loops; both directions
    of an undirected superedge must be present.
    """

    features: np.ndarray  # K x d
    times: np.ndarray  # K, rescaled to [0, 1]
    nfs: np.ndarray  # K
    reviewer_share: np.ndarray  # K
    src: np.ndarray
    dst: np.ndarray
    embeddings: np.ndarray | None = None  # K x z

    @property
    def n_nodes(self) -> int:
        return len(self.features)

    @classmethod
    def from_pooled(cls, pooled, embeddings=None, time_range: tuple[float, float] | None = None) -> "GraphInput":
        lo, hi = time_range if time_range is not None else (pooled.times.min(), pooled.times.max())
        return cls(
            features=pooled.features,
            times=rescale_time(pooled.times, lo, hi),
            nfs=pooled.nfs,
            reviewer_share=pooled.reviewer_share,
            src=np.r_[pooled.src, pooled.dst].astype(np.int64),
            dst=np.r_[pooled.dst, pooled.src].astype(np.int64),
            embeddings=embeddings,
        )

    def with_self_loops(self) -> tuple[np.ndarray, np.ndarray]:
        loops = np.arange(self.n_nodes)
        return np.r_[self.src, loops], np.r_[self.dst, loops]


def rescale_time(t, lo: float, hi: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return (t - lo) / (hi - lo) if hi > lo else np.zeros_like(t)


def initial_frequencies(dim: int) -> np.ndarray:
    """Log-spaced angular frequencies 2*pi*[1 .. 100]."""
    return 2 * np.pi * np.logspace(0, 2, dim)


def time_encode(t_scaled, omega, phi):
    """e_t[i] = sin(omega_i * t + phi_i) for each rescaled time t; rows per time."""
    t = as_tensor(np.asarray(t_scaled, dtype=float).reshape(-1, 1))
    return (t * omega + phi).sin()


def _glorot(rng, *shape) -> np.ndarray:
    fan_in, fan_out = shape[-2], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class DgaModel:
    """Parameters live in ``self.params`` (name -> Tensor)."""

    def __init__(self, config: DgaConfig, in_dim: int):
        self.config = config
        self.in_dim = in_dim
        self.params: dict[str, Tensor] = {}
        self._init_params()

    # ----------------------------------------------------------- parameters
    def _init_params(self) -> None:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        p = self.params
        if cfg.ablation == "D_nfs_only":
            p["head_w"] = parameter(0.1 * _glorot(rng, 1, 2), "head_w")
            p["head_b"] = parameter(np.zeros(2), "head_b")
            return
        if cfg.uses_time:
            p["omega"] = parameter(initial_frequencies(cfg.time_dim), "omega")
            p["phi"] = parameter(np.zeros(cfg.time_dim), "phi")
        h, dh = cfg.heads, cfg.hidden
        d = self.in_dim + (cfg.time_dim if cfg.uses_time else 0)
        types = ("r", "p") if cfg.typed else ("s",)
        for layer in range(cfg.layers):
            pre = f"l{layer}."
            for kind in ("q", "k", "v"):
                if kind != "v" and not cfg.attention:
                    continue
                for ty in types:
                    name = f"{pre}W_{kind}_{ty}"
                    p[name] = parameter(_glorot(rng, h, d, dh), name)
            if cfg.attention:
                if cfg.uses_time:
                    t_in = cfg.time_dim if cfg.time_form == "encoded" else 1
                    p[pre + "W_t"] = parameter(_glorot(rng, h, t_in, dh), pre + "W_t")
                    p[pre + "a_t"] = parameter(_glorot(rng, h, dh, 1), pre + "a_t")
                p[pre + "a_q"] = parameter(_glorot(rng, h, dh, 1), pre + "a_q")
                p[pre + "a_k"] = parameter(_glorot(rng, h, dh, 1), pre + "a_k")
            p[pre + "W_mix"] = parameter(_glorot(rng, h * dh, dh), pre + "W_mix")
            p[pre + "b_mix"] = parameter(np.zeros(dh), pre + "b_mix")
            d = dh
        p["head_w"] = parameter(0.1 * _glorot(rng, dh, 2), "head_w")
        p["head_b"] = parameter(np.zeros(2), "head_b")

    def parameter_count(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            self.params[k].data[...] = v

    def to_json(self, extra: dict | None = None) -> str:
        doc = {
            "config": asdict(self.config),
            "in_dim": self.in_dim,
            "seed": self.config.seed,
            "params": {k: {"shape": list(t.shape), "data": t.data.ravel().tolist()} for k, t in self.params.items()},
        }
        if extra:
            doc.update(extra)
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DgaModel":
        doc = json.loads(text)
        model = cls(DgaConfig(**doc["config"]), doc["in_dim"])
        state = {k: np.asarray(v["data"], float).reshape(v["shape"]) for k, v in doc["params"].items()}
        if set(state) != set(model.params):
            raise ValueError("checkpoint parameters do not match the configuration")
        model.load_state(state)
        return model

    # ---------------------------------------------------------------- layers
    def _project(self, x: Tensor, kind: str, layer: int, share: np.ndarray) -> Tensor:
        """x @ W for every head -> (K, H, dh); type-specific weights blended by reviewer share."""
        pre = f"l{layer}.W_{kind}_"
        x3 = x.reshape(1, *x.shape)
        if self.config.typed:
            r = (x3 @ self.params[pre + "r"]).transpose(1, 0, 2)
            pr = (x3 @ self.params[pre + "p"]).transpose(1, 0, 2)
            w = share.reshape(-1, 1, 1)
            return r * w + pr * (1.0 - w)
        return (x3 @ self.params[pre + "s"]).transpose(1, 0, 2)

    def attention_logits(self, x: Tensor, enc: Tensor | None, gi: GraphInput, src, dst, layer: int) -> Tensor:
        """(E, H) pre-softmax logits for edges src -> dst."""
        cfg = self.config
        pre = f"l{layer}."
        q = self._project(x, "q", layer, gi.reviewer_share)  # K,H,dh
        k = self._project(x, "k", layer, gi.reviewer_share)
        sq = (q.reshape(q.shape[0], cfg.heads, 1, cfg.hidden) @ self.params[pre + "a_q"]).reshape(q.shape[0], cfg.heads)
        sk = (k.reshape(k.shape[0], cfg.heads, 1, cfg.hidden) @ self.params[pre + "a_k"]).reshape(k.shape[0], cfg.heads)
        logit = take(sq, dst) + take(sk, src)
        if cfg.uses_time:
            # a_t . W_t (e_v - e_u) is linear, so project each node once
            wa = (self.params[pre + "W_t"] @ self.params[pre + "a_t"]).reshape(cfg.heads, -1).transpose()
            node_t = enc @ wa  # K,H
            logit = logit + take(node_t, dst) - take(node_t, src)
        const = np.zeros(len(src))
        if cfg.effective_gamma:
            const = const + cfg.effective_gamma * gi.nfs[src]
        if cfg.lam and gi.embeddings is not None:
            const = const + cfg.lam * np.einsum("ij,ij->i", gi.embeddings[dst], gi.embeddings[src])
        logit = logit + const.reshape(-1, 1)
        return logit.leaky_relu(cfg.leaky_slope)

    def layer_forward(self, x: Tensor, enc, gi: GraphInput, layer: int, training: bool = False,
                      rng=None, last: bool = False) -> Tensor:
        cfg = self.config
        src, dst = gi.with_self_loops()
        n = gi.n_nodes
        if cfg.attention:
            alpha = segment_softmax(self.attention_logits(x, enc, gi, src, dst, layer), dst, n)
        else:
            deg = np.bincount(dst, minlength=n).astype(float)
            alpha = Tensor(np.repeat((1.0 / deg[dst]).reshape(-1, 1), cfg.heads, axis=1))
        if training and cfg.dropout > 0:
            keep = (rng.random(alpha.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
            alpha = alpha * keep
        v = self._project(x, "v", layer, gi.reviewer_share)  # K,H,dh
        msg = take(v, src) * alpha.reshape(len(src), cfg.heads, 1)
        agg = segment_sum(msg, dst, n).reshape(n, cfg.heads * cfg.hidden)
        out = agg @ self.params[f"l{layer}.W_mix"] + self.params[f"l{layer}.b_mix"]
        return out if last else out.elu()

    def attention(self, gi: GraphInput, layer: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Eval-mode attention weights of ``layer``: (src, dst, alpha[E, H])."""
        x, enc = self._inputs(gi)
        for l in range(layer):
            x = self.layer_forward(x, enc, gi, l, last=False)
        src, dst = gi.with_self_loops()
        alpha = segment_softmax(self.attention_logits(x, enc, gi, src, dst, layer), dst, gi.n_nodes)
        return src, dst, alpha.data

    def _inputs(self, gi: GraphInput):
        x = Tensor(gi.features)
        if x.shape[1] != self.in_dim:
            raise ValueError(f"feature dimension {x.shape[1]} does not match model input {self.in_dim}")
        enc = None
        if self.config.uses_time:
            e = time_encode(gi.times, self.params["omega"], self.params["phi"])
            enc = e if self.config.time_form == "encoded" else Tensor(gi.times.reshape(-1, 1))
            x = concat([x, e], axis=1)
        return x, enc

    def logits(self, gi: GraphInput, training: bool = False, rng=None) -> Tensor:
        cfg = self.config
        if cfg.ablation == "D_nfs_only":
            return Tensor(gi.nfs.reshape(-1, 1)) @ self.params["head_w"] + self.params["head_b"]
        x, enc = self._inputs(gi)
        for layer in range(cfg.layers):
            x = self.layer_forward(x, enc, gi, layer, training, rng, last=layer == cfg.layers - 1)
        return x @ self.params["head_w"] + self.params["head_b"]

    def forward(self, gi: GraphInput) -> np.ndarray:
        """Eval-mode class probabilities (K x 2, columns Real, Fake)."""
        return np.exp(log_softmax(self.logits(gi)).data)


# ------------------------------------------------------------------ training
@dataclass
class Targets:
    """Soft supernode targets aggregated from labelled reviewers.

    ``count`` is the number of labelled reviewers per node and ``fake`` the
    fraction of them that are fake; nodes with count 0 are ignored.
    """

    count: np.ndarray
    fake: np.ndarray

    @classmethod
    def from_memberships(cls, n_nodes: int, node_of: list[list[int]], labels: np.ndarray, reviewers) -> "Targets":
        count = np.zeros(n_nodes)
        fake = np.zeros(n_nodes)
        for r in reviewers:
            for k in node_of[r]:
                count[k] += 1
                fake[k] += labels[r]
        frac = np.divide(fake, count, out=np.zeros(n_nodes), where=count > 0)
        return cls(count, frac)


def class_weights(targets: Targets) -> tuple[float, float]:
    """Balanced (real, fake) weights from the labelled mass of each class."""
    pos = float((targets.count * targets.fake).sum())
    neg = float((targets.count * (1 - targets.fake)).sum())
    total = pos + neg
    if pos == 0 or neg == 0:
        return 1.0, 1.0
    return total / (2 * neg), total / (2 * pos)


def loss_fn(logits: Tensor, targets: Targets, weights: tuple[float, float]) -> Tensor:
    """Weighted soft-target cross-entropy, averaged over labelled mass."""
    idx = np.flatnonzero(targets.count > 0)
    lp = log_softmax(take(logits, idx))
    c = targets.count[idx]
    coef = np.column_stack([weights[0] * c * (1 - targets.fake[idx]), weights[1] * c * targets.fake[idx]])
    norm = coef.sum()
    return (lp * (-coef / norm)).sum()


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def write_csv(self, fh) -> None:
        fh.write("epoch,train_loss,val_loss\n")
        for i, (a, b) in enumerate(zip(self.train_loss, self.val_loss)):
            fh.write(f"{i},{a:.10g},{b:.10g}\n")


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, weight_decay: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, self.wd, self.b1, self.b2, self.eps = lr, weight_decay, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, p in self.params.items():
            g = np.zeros_like(p.data) if p.grad is None else p.grad
            g = g + self.wd * p.data
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p.data -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train(model: DgaModel, gi: GraphInput, train_targets: Targets, val_targets: Targets | None = None
          ) -> TrainHistory:
    """Full-batch training with early stopping; restores the best parameters."""
    cfg = model.config
    if not (train_targets.count > 0).any():
        raise ValueError("no labelled training nodes")
    weights = class_weights(train_targets)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = Adam(model.params, cfg.lr, cfg.weight_decay)
    hist = TrainHistory()
    has_val = val_targets is not None and (val_targets.count > 0).any()
    best, best_state, since = math.inf, model.state(), 0
    for epoch in range(cfg.max_epochs):
        for p in model.params.values():
            p.zero_grad()
        loss = loss_fn(model.logits(gi, training=True, rng=rng), train_targets, weights)
        if not np.isfinite(loss.data):
            raise DivergenceError(f"training loss became {loss.data} at epoch {epoch}")
        loss.backward()
        eval_logits = model.logits(gi)
        tr = float(loss_fn(eval_logits, train_targets, weights).data)
        va = float(loss_fn(eval_logits, val_targets, weights).data) if has_val else tr
        hist.train_loss.append(float(loss.data))
        hist.val_loss.append(va)
        if va < best - 1e-9:
            best, best_state, since, hist.best_epoch = va, model.state(), 0, epoch
        else:
            since += 1
            if since >= cfg.patience:
                hist.stopped_early = True
                break
        opt.step()
    model.load_state(best_state)
    log.info("%s: %d epochs, best val loss %.4f at %d", cfg.ablation, len(hist.train_loss), best, hist.best_epoch)
    return hist


def grad_check(model: DgaModel, gi: GraphInput, targets: Targets, eps: float = 1e-5,
               max_entries: int | None = 24, seed: int = 0, retry_above: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    Evaluated in eval mode (no dropout). For each parameter tensor up to
    ``max_entries`` coordinates are probed (all when None); the relative
    error is ``|g_a - g_n|_2 / (|g_a|_2 + |g_n|_2)`` over those coordinates,
    and tensors whose probed gradients both vanish count as exact. A tensor
    whose error exceeds ``retry_above`` is re-probed with a step of
    ``eps / 10`` and keeps the smaller error.
    """
    weights = class_weights(targets)
    rng = np.random.default_rng(seed)

    def f() -> float:
        return float(loss_fn(model.logits(gi), targets, weights).data)

    for p in model.params.values():
        p.zero_grad()
    loss_fn(model.logits(gi), targets, weights).backward()
    worst = 0.0
    for p in model.params.values():
        size = p.data.size
        entries = np.arange(size) if max_entries is None or size <= max_entries else rng.choice(size, max_entries, replace=False)
        analytic = (np.zeros(size) if p.grad is None else p.grad.reshape(-1))[entries]
        err = _relative_error(analytic, numeric_grad(f, p, eps, entries).reshape(-1)[entries])
        if err > retry_above:
            # a step straddling a LeakyReLU kink inflates the difference quotient
            err = min(err, _relative_error(analytic, numeric_grad(f, p, eps / 10, entries).reshape(-1)[entries]))
        worst = max(worst, err)
    return worst


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return 0.0 if denom < 1e-12 else float(np.linalg.norm(analytic - numeric) / denom)


def with_ablation(config: DgaConfig, ablation: str) -> DgaConfig:
    return replace(config, ablation=resolve_ablation(ablation))
