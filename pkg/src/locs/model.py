"""The LoCS variational forecaster.

Edges use the receiver-major layout of :func:`locs.frames.offdiag_index`:
for ``N`` nodes there are ``E = N (N - 1)`` directed pairs and edge ``e``
carries messages from ``send[e]`` to ``recv[e]``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import torch
from torch import nn
import torch.nn.functional as F

from . import geometry as geo
from .frames import FRAMES, local_frame_pairs, globalize_delta, offdiag_index
from .tensor_core import DTYPE, MLP, GRUCell, Linear, LSTMCell, uniform_init_

DECODERS = ("markovian", "recurrent")
FILTERS = ("anisotropic", "isotropic")


@dataclass
class ModelConfig:
    dim: int = 2
    num_edge_types: int = 2
    hidden: int = 256
    lstm_hidden: int = 64
    prior_hidden: int = 128
    filter_hidden: int = 256
    decoder: str = "markovian"
    frame: str = "roto_translated"
    filters: str = "anisotropic"
    decoder_filters: bool = False
    no_edge_hardcoded: bool = True
    sigma2: float = 1e-5
    gumbel_temp: float = 0.5
    no_edge_prior: float | None = None
    intrinsic_orientation: bool = False

    def validate(self) -> "ModelConfig":
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.num_edge_types < 2:
            raise ValueError("need at least 2 edge types")
        if self.sigma2 <= 0 or self.gumbel_temp <= 0:
            raise ValueError("sigma2 and gumbel_temp must be positive")
        if self.decoder not in DECODERS:
            raise ValueError(f"decoder must be one of {DECODERS}")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")
        if self.filters not in FILTERS:
            raise ValueError(f"filters must be one of {FILTERS}")
        if self.no_edge_prior is not None and not 0 < self.no_edge_prior < 1:
            raise ValueError("no_edge_prior must lie in (0, 1)")
        for name in ("hidden", "lstm_hidden", "prior_hidden", "filter_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def angle_dim(self) -> int:
        return geo.angle_dim(self.dim)

    @property
    def state_width(self) -> int:
        """Width of the per-node pair state ``v_{j|i}``."""
        return 2 * self.dim + self.angle_dim

    @property
    def input_width(self) -> int:
        """Width of raw per-node inputs: ``[p, u]`` plus orientation when intrinsic."""
        return 2 * self.dim + (self.angle_dim if self.intrinsic_orientation else 0)

    @property
    def edge_width(self) -> int:
        return 2 * self.state_width + self.dim

    @property
    def filter_width(self) -> int:
        return self.dim + self.angle_dim


def gumbel_softmax_sample(logits: torch.Tensor, temperature: float = 0.5,
                          generator: torch.Generator | None = None, hard: bool = False,
                          noise: torch.Tensor | None = None) -> torch.Tensor:
    """Relaxed categorical sample ``softmax((logits + g) / temperature)``.

    ``hard`` returns the one-hot argmax with straight-through gradients.
    ``noise`` overrides the Gumbel draw (zeros give a tempered softmax).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if noise is None:
        u = torch.rand(logits.shape, generator=generator, dtype=DTYPE).clamp_min(1e-300)
        noise = -torch.log(-torch.log(u))
    y = F.softmax((logits + noise) / temperature, dim=-1)
    if not hard:
        return y
    one_hot = F.one_hot(y.argmax(-1), y.shape[-1]).to(y.dtype)
    return (one_hot - y).detach() + y


def categorical_kl(log_q: torch.Tensor, log_p: torch.Tensor) -> torch.Tensor:
    """Elementwise ``sum_k q_k (log q_k - log p_k)`` over the last axis."""
    return (log_q.exp() * (log_q - log_p)).sum(-1)


def elbo_loss(mu: torch.Tensor, target: torch.Tensor, posterior_logits: torch.Tensor,
              prior_logits: torch.Tensor, sigma2: float,
              no_edge_prior: float | None = None) -> dict[str, torch.Tensor]:
    """Negative ELBO per scene, averaged over the leading batch axis.

    Reconstruction is the per-dimension Gaussian NLL with fixed variance;
    the KL term compares posterior and learned prior edge distributions.
    With ``no_edge_prior`` the KL is split evenly with a KL against the fixed
    prior ``[p0, (1 - p0)/(K - 1), ...]``.
    """
    b = mu.shape[0]
    nll = ((target - mu) ** 2 / (2 * sigma2) + 0.5 * math.log(2 * math.pi * sigma2)).reshape(b, -1).sum(1)
    log_q = F.log_softmax(posterior_logits, -1)
    kl = categorical_kl(log_q, F.log_softmax(prior_logits, -1))
    if no_edge_prior is not None:
        k = posterior_logits.shape[-1]
        fixed = torch.full((k,), (1 - no_edge_prior) / (k - 1), dtype=DTYPE)
        fixed[0] = no_edge_prior
        kl = 0.5 * kl + 0.5 * categorical_kl(log_q, fixed.log())
    kl = kl.reshape(b, -1).sum(1)
    return {"loss": (nll + kl).mean(), "nll": nll.mean(), "kl": kl.mean()}


class EdgeFilter(nn.Module):
    """Edge weight matrices, optionally generated from relative geometry.

    Anisotropic: a 2-layer MLP maps the filter inputs (relative position in
    spherical form and relative angular position) to ``copies`` matrices of
    shape ``d_out x d_in``. Isotropic: the matrices are plain parameters.
    """

    def __init__(self, filter_width: int, d_in: int, d_out: int, hidden: int,
                 activation: str, anisotropic: bool, copies: int = 1):
        super().__init__()
        self.d_in, self.d_out, self.copies = d_in, d_out, copies
        self.anisotropic = anisotropic
        if anisotropic:
            self.net = MLP([filter_width, hidden, copies * d_out * d_in], [activation, "identity"])
        else:
            self.weight = nn.Parameter(uniform_init_(torch.empty(copies, d_out, d_in, dtype=DTYPE), d_in))

    def weights(self, filter_inputs: torch.Tensor) -> torch.Tensor:
        lead = filter_inputs.shape[:-1]
        if self.anisotropic:
            return self.net(filter_inputs).reshape(*lead, self.copies, self.d_out, self.d_in)
        return self.weight.expand(*lead, self.copies, self.d_out, self.d_in)

    def forward(self, filter_inputs: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        """Apply to ``x`` of shape ``[..., d_in]``; returns ``[..., copies, d_out]``."""
        if self.anisotropic:
            return torch.einsum("...kod,...d->...ko", self.weights(filter_inputs), x)
        return torch.einsum("kod,...d->...ko", self.weight, x)


@dataclass
class PairInputs:
    edges: torch.Tensor     # [..., E, edge_width]: [v_{j|i}, s_{j,i}, v_{i|i}]
    filters: torch.Tensor   # [..., E, filter_width]
    nodes: torch.Tensor     # [..., N, state_width]: v_{i|i}


class LoCS(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = cfg = config.validate()
        h, v = cfg.hidden, cfg.state_width
        k = cfg.num_edge_types
        # encoder
        self.enc_filter = EdgeFilter(cfg.filter_width, cfg.edge_width, h, cfg.filter_hidden, "elu",
                                     cfg.filters == "anisotropic")
        self.enc_g_v1 = Linear(v, h)
        self.enc_f_v1 = MLP([h, h, h], ["elu", "elu"], batch_norm=True)
        self.enc_f_e2 = MLP([3 * h, h, h], ["elu", "elu"], batch_norm=True)
        self.lstm_prior = LSTMCell(h, cfg.lstm_hidden)
        self.lstm_enc = LSTMCell(h, cfg.lstm_hidden)
        self.f_prior = MLP([cfg.lstm_hidden, cfg.prior_hidden, cfg.prior_hidden, k], ["elu", "elu", "identity"])
        self.f_enc = MLP([2 * cfg.lstm_hidden, cfg.prior_hidden, cfg.prior_hidden, k], ["elu", "elu", "identity"])
        # decoder
        self.first_type = 1 if cfg.no_edge_hardcoded else 0
        active = k - self.first_type
        if cfg.decoder_filters:
            self.dec_filter = EdgeFilter(cfg.filter_width, cfg.edge_width, h, cfg.filter_hidden, "tanh",
                                         True, copies=active)
        else:
            self.dec_f = nn.ModuleList(MLP([cfg.edge_width, h, h], ["relu", "relu"]) for _ in range(active))
        self.dec_g_v3 = Linear(v, h)
        if cfg.decoder == "recurrent":
            self.dec_g = nn.ModuleList(MLP([2 * h, h, h], ["tanh", "tanh"]) for _ in range(active))
            self.gru = GRUCell(2 * h, h)
        self.dec_f_v4 = MLP([h, h, h, 2 * cfg.dim], ["relu", "relu", "identity"])
        n_cache: dict[int, tuple[torch.Tensor, torch.Tensor]] = {}
        self._index_cache = n_cache

    # ------------------------------------------------------------------ inputs

    def _index(self, n: int):
        if n not in self._index_cache:
            self._index_cache[n] = offdiag_index(n)
        return self._index_cache[n]

    def split_inputs(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """``[..., N, F]`` inputs to ``(states [..., N, 2D], orientations [..., N, A])``."""
        cfg = self.config
        if x.shape[-1] != cfg.input_width:
            raise ValueError(f"expected {cfg.input_width} input features, got {x.shape[-1]}")
        d = cfg.dim
        states = x[..., :2 * d]
        if cfg.intrinsic_orientation:
            return states, geo.wrap_angle(x[..., 2 * d:])
        return states, geo.orientation_from_velocity(x[..., d:2 * d], d)

    def pair_inputs(self, states: torch.Tensor, orientations: torch.Tensor) -> PairInputs:
        d = self.config.dim
        pairs = local_frame_pairs(states[..., :d], states[..., d:], orientations, self.config.frame)
        recv, send = self._index(states.shape[-2])
        v = pairs.state_features()
        nodes = pairs.self_states()
        edges = torch.cat([v[..., recv, send, :], pairs.spherical_features()[..., recv, send, :],
                           nodes[..., recv, :]], -1)
        return PairInputs(edges, pairs.filter_inputs()[..., recv, send, :], nodes)

    def _mean_over_senders(self, values: torch.Tensor, n: int) -> torch.Tensor:
        return values.reshape(*values.shape[:-2], n, n - 1, values.shape[-1]).mean(-2)

    # ------------------------------------------------------------------ encoder

    def edge_embeddings(self, states: torch.Tensor, orientations: torch.Tensor) -> torch.Tensor:
        """Second-layer pair embeddings ``h^(2)`` of shape ``[..., E, H]``."""
        n = states.shape[-2]
        if n < 2:
            raise ValueError("need at least two nodes")
        inp = self.pair_inputs(states, orientations)
        recv, send = self._index(n)
        h1 = self.enc_filter(inp.filters, inp.edges)[..., 0, :]
        h1_nodes = self.enc_f_v1(self.enc_g_v1(inp.nodes) + self._mean_over_senders(h1, n))
        return self.enc_f_e2(torch.cat([h1_nodes[..., recv, :], h1, h1_nodes[..., send, :]], -1))

    def encode(self, x: torch.Tensor, return_state: bool = False):
        """Prior and posterior edge logits for inputs ``[B, T, N, F]``, each ``[B, T, E, K]``.

        With ``return_state`` the final forward-LSTM state is returned as a
        third element, for continuing the prior beyond ``T``.
        """
        states, ori = self.split_inputs(x)
        h2 = self.edge_embeddings(states, ori)
        steps = h2.shape[1]
        prior_h, state = [], None
        for t in range(steps):
            state = self.lstm_prior(h2[:, t], state)
            prior_h.append(state[0])
        enc_h, enc_state = [None] * steps, None
        for t in reversed(range(steps)):
            enc_state = self.lstm_enc(h2[:, t], enc_state)
            enc_h[t] = enc_state[0]
        prior_h = torch.stack(prior_h, 1)
        enc_h = torch.stack(enc_h, 1)
        prior_logits = self.f_prior(prior_h)
        post_logits = self.f_enc(torch.cat([prior_h, enc_h], -1))
        if return_state:
            return prior_logits, post_logits, state
        return prior_logits, post_logits

    def prior_step(self, states: torch.Tensor, orientations: torch.Tensor, state=None):
        """Advance the prior one timestep from ``[B, N, 2D]`` states; returns ``(logits, state)``."""
        state = self.lstm_prior(self.edge_embeddings(states, orientations), state)
        return self.f_prior(state[0]), state

    # ------------------------------------------------------------------ decoder

    def _typed_sum(self, z: torch.Tensor, per_type: torch.Tensor) -> torch.Tensor:
        """``sum_k z_k f^k`` over active types; ``per_type`` is ``[..., E, K_active, H]``."""
        return (z[..., self.first_type:, None] * per_type).sum(-2)

    def initial_hidden(self, batch_shape, n: int) -> torch.Tensor | None:
        if self.config.decoder != "recurrent":
            return None
        return torch.zeros(*batch_shape, n, self.config.hidden, dtype=DTYPE)

    def local_delta(self, states, orientations, z, hidden=None):
        """Predicted ``[dp, du]`` in each node's local frame, plus the new hidden state."""
        n = states.shape[-2]
        inp = self.pair_inputs(states, orientations)
        if self.config.decoder_filters:
            msgs = self.dec_filter(inp.filters, inp.edges)
        else:
            msgs = torch.stack([f(inp.edges) for f in self.dec_f], -2)
        m = self.dec_g_v3(inp.nodes) + self._mean_over_senders(self._typed_sum(z, msgs), n)
        if self.config.decoder == "markovian":
            return self.dec_f_v4(m), None
        if hidden is None:
            hidden = self.initial_hidden(states.shape[:-2], n)
        recv, send = self._index(n)
        pair_h = torch.cat([hidden[..., send, :], hidden[..., recv, :]], -1)
        h_msgs = torch.stack([g(pair_h) for g in self.dec_g], -2)
        agg = self._mean_over_senders(self._typed_sum(z, h_msgs), n)
        hidden = self.gru(torch.cat([agg, m], -1), hidden)
        return self.dec_f_v4(hidden), hidden

    def decode_step(self, states, orientations, z, hidden=None):
        """Mean of the next global state for ``[..., N, 2D]`` states and ``[..., E, K]`` edges."""
        delta, hidden = self.local_delta(states, orientations, z, hidden)
        return globalize_delta(states, orientations, delta, self.config.frame), hidden

    # ------------------------------------------------------------------ sequences

    def next_orientations(self, states: torch.Tensor, previous: torch.Tensor) -> torch.Tensor:
        if self.config.intrinsic_orientation:
            return previous
        d = self.config.dim
        return geo.orientation_from_velocity(states[..., d:], d)

    def teacher_forced(self, x: torch.Tensor, generator: torch.Generator | None = None,
                       edges: str = "posterior", hard: bool = False):
        """One-step-ahead means for every step of ``[B, T, N, F]`` inputs.

        Returns ``(mu [B, T-1, N, 2D], prior_logits, posterior_logits, z)``.
        """
        if x.shape[1] < 2:
            raise ValueError("need at least two timesteps")
        prior_logits, post_logits = self.encode(x[:, :-1])
        logits = post_logits if edges == "posterior" else prior_logits
        z = gumbel_softmax_sample(logits, self.config.gumbel_temp, generator, hard=hard)
        states, ori = self.split_inputs(x[:, :-1])
        if self.config.decoder == "markovian":
            mu, _ = self.decode_step(states, ori, z)
        else:
            hidden, out = None, []
            for t in range(states.shape[1]):
                m, hidden = self.decode_step(states[:, t], ori[:, t], z[:, t], hidden)
                out.append(m)
            mu = torch.stack(out, 1)
        return mu, prior_logits, post_logits, z

    def loss(self, x: torch.Tensor, generator: torch.Generator | None = None) -> dict[str, torch.Tensor]:
        mu, prior_logits, post_logits, _ = self.teacher_forced(x, generator)
        target = x[:, 1:, :, :2 * self.config.dim]
        return elbo_loss(mu, target, post_logits, prior_logits, self.config.sigma2, self.config.no_edge_prior)

    def forward(self, x: torch.Tensor, generator: torch.Generator | None = None) -> dict[str, torch.Tensor]:
        return self.loss(x, generator)

    def rollout(self, x: torch.Tensor, horizon: int, generator: torch.Generator | None = None):
        """Burn in on observed ``[B, T0, N, F]`` inputs, then predict ``horizon`` steps.

        Edges come from the prior as hard Gumbel samples. Returns
        ``(predictions [B, horizon, N, 2D], edges [B, horizon, E, K])``.
        """
        b, t0, n = x.shape[:3]
        states, ori = self.split_inputs(x)
        prior_state, hidden = None, self.initial_hidden((b,), n)
        if t0 > 1:
            prior_logits, _, prior_state = self.encode(x[:, :-1], return_state=True)
            z = gumbel_softmax_sample(prior_logits, self.config.gumbel_temp, generator, hard=True)
            if hidden is not None:
                for t in range(t0 - 1):
                    _, hidden = self.decode_step(states[:, t], ori[:, t], z[:, t], hidden)
        cur, cur_ori = states[:, -1], ori[:, -1]
        preds, all_z = [], []
        for _ in range(horizon):
            logits, prior_state = self.prior_step(cur, cur_ori, prior_state)
            z = gumbel_softmax_sample(logits, self.config.gumbel_temp, generator, hard=True)
            cur, hidden = self.decode_step(cur, cur_ori, z, hidden)
            cur_ori = self.next_orientations(cur, cur_ori)
            preds.append(cur)
            all_z.append(z)
        if not preds:
            return x.new_zeros(b, 0, n, 2 * self.config.dim), x.new_zeros(b, 0, n * (n - 1), self.config.num_edge_types)
        return torch.stack(preds, 1), torch.stack(all_z, 1)
