"""Permutation-equivariant denoiser over expanded bipartite graphs.

The network consumes a child-resolution bipartite graph (edges plus per-node
conditioning replicated from the parent level) together with the current flow
state of every head, and predicts clean endpoints for all of them:

* per left node: an expansion score and a budget-split fraction,
* per left and right node: feature vectors,
* per right node: an expansion score,
* per edge: a keep score.

Inputs carry the spectral rows precomputed on the parent graph, so the
forward pass itself is a fixed composition of row-wise maps, gathers, and
segment sums and is therefore equivariant to relabelling either side or the
edge list.  All learnable components live in a :class:`ParameterStore`, so
gradients flow through sign-invariant spectral encoders, FiLM feature
modulation, and the gated edge-message stack.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .hypergraph import BipartiteGraph, normalized_laplacian, smallest_nonzero_eigs

__all__ = [
    "DenoiserConfig",
    "DenoiserInput",
    "Denoiser",
    "HEAD_KEYS",
    "sinusoidal_encoding",
    "fourier_time_encoding",
    "spectral_rows",
]

HEAD_KEYS = (
    "left_expansion",
    "left_split",
    "left_features",
    "right_expansion",
    "right_features",
    "edge_keep",
)


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture hyperparameters.

    ``node_feature_dim`` / ``edge_feature_dim`` are the widths of the left
    and right feature vectors of the data (either may be zero).
    """

    hidden_dim: int = 64
    num_layers: int = 4
    mlp_hidden: int = 128
    spectral_k: int = 8
    pe_dim: int = 32
    phi_dim: int = 16
    attr_embed_dim: int = 16
    feat_embed_dim: int = 32
    budget_encoding_dim: int = 32
    budget_base_freq: float = 1e-4
    time_enc_dim: int = 8
    node_feature_dim: int = 0
    edge_feature_dim: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1 or self.num_layers < 1:
            raise ValueError("hidden_dim and num_layers must be positive")
        if self.spectral_k < 1:
            raise ValueError("spectral_k must be positive")
        if self.budget_encoding_dim % 2 or self.time_enc_dim % 2:
            raise ValueError("encoding dims must be even")
        if self.node_feature_dim < 0 or self.edge_feature_dim < 0:
            raise ValueError("feature dims must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "DenoiserConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    @classmethod
    def large(cls, **overrides) -> "DenoiserConfig":
        """Full-size preset used for the headline experiments."""
        base = dict(hidden_dim=128, num_layers=10, mlp_hidden=256)
        base.update(overrides)
        return cls(**base)


@dataclass
class DenoiserInput:
    """Everything the forward pass needs, at child resolution.

    Spectral rows are computed on the parent graph and replicated to the
    children ahead of time; ``eigenvalues`` has ``spectral_k`` entries.
    """

    edges: np.ndarray
    left_spectral: np.ndarray
    right_spectral: np.ndarray
    eigenvalues: np.ndarray
    left_budgets: np.ndarray
    left_parent_features: np.ndarray
    right_parent_features: np.ndarray
    left_state: np.ndarray
    right_state: np.ndarray
    edge_state: np.ndarray
    left_feature_state: np.ndarray
    right_feature_state: np.ndarray
    t: float
    rho_hat: float
    total_left: float

    @property
    def num_left(self) -> int:
        return self.left_state.shape[0]

    @property
    def num_right(self) -> int:
        return self.right_state.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]


def sinusoidal_encoding(values: np.ndarray, dim: int, base_freq: float) -> np.ndarray:
    """Interleaved sin/cos features with geometrically spaced frequencies.

    Frequencies run from 1 down to ``base_freq`` across ``dim / 2`` channels,
    so integer magnitudes from single digits up to roughly ``1 / base_freq``
    stay distinguishable.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    half = dim // 2
    exponents = np.arange(half) / max(half - 1, 1)
    freqs = base_freq**exponents
    args = values[:, None] * freqs[None, :]
    out = np.empty((values.shape[0], dim))
    out[:, 0::2] = np.sin(args)
    out[:, 1::2] = np.cos(args)
    return out


def fourier_time_encoding(t: float, dim: int) -> np.ndarray:
    """Low-dimensional encoding of a scalar in [0, 1]."""
    half = dim // 2
    freqs = np.pi * (2.0 ** np.arange(half))
    args = t * freqs
    out = np.empty(dim)
    out[0::2] = np.sin(args)
    out[1::2] = np.cos(args)
    return out


def spectral_rows(b: BipartiteGraph, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eigenvector rows of the star-expansion normalized Laplacian.

    Returns (left rows (n, k), right rows (m, k), eigenvalues (k,)), zero
    padded when fewer than ``k`` nonzero eigenpairs exist.
    """
    lap = normalized_laplacian(b)
    basis = smallest_nonzero_eigs(lap, k)
    vecs = basis.eigenvectors
    return vecs[: b.num_left], vecs[b.num_left :], basis.eigenvalues


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    if fan_in == 0:
        return np.zeros((0, fan_out))
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


class _Linear:
    def __init__(
        self,
        store: ParameterStore,
        name: str,
        fan_in: int,
        fan_out: int,
        rng: np.random.Generator,
        bias_fill: float = 0.0,
        zero_weights: bool = False,
    ):
        if zero_weights:
            init = lambda: np.zeros((fan_in, fan_out))
        else:
            init = lambda: _glorot(rng, fan_in, fan_out)
        self.w = _param(store, f"{name}.w", (fan_in, fan_out), init)
        self.b = _param(store, f"{name}.b", (fan_out,), lambda: np.full(fan_out, bias_fill))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


class _MLP:
    def __init__(self, store, name, fan_in, hidden, fan_out, rng):
        self.lin1 = _Linear(store, f"{name}.lin1", fan_in, hidden, rng)
        self.lin2 = _Linear(store, f"{name}.lin2", hidden, fan_out, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(ad.silu(self.lin1(x)))


class _LayerNorm:
    def __init__(self, store, name, dim):
        self.g = _param(store, f"{name}.g", (dim,), lambda: np.ones(dim))
        self.b = _param(store, f"{name}.b", (dim,), lambda: np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.g, self.b)


def _param(store: ParameterStore, name: str, shape: tuple, init_fn) -> Tensor:
    if name in store:
        t = store[name]
        if t.data.shape != shape:
            raise ValueError(f"checkpoint parameter {name!r} has shape {t.data.shape}, expected {shape}")
        return t
    return store.create(name, init_fn())


class Denoiser:
    """Endpoint predictor for all flow heads of one expansion step."""

    def __init__(
        self,
        config: DenoiserConfig,
        rng: np.random.Generator | None = None,
        store: ParameterStore | None = None,
    ):
        self.config = config
        self.store = store if store is not None else ParameterStore()
        rng = rng if rng is not None else np.random.default_rng(0)
        c = config
        s = self.store

        self.phi = _MLP(s, "signnet.phi", 2, c.phi_dim, c.phi_dim, rng)
        self.rho = _MLP(s, "signnet.rho", c.spectral_k * c.phi_dim, c.pe_dim, c.pe_dim, rng)

        self.budget_proj = _Linear(s, "cond.budget", c.budget_encoding_dim, c.attr_embed_dim, rng)
        self.nnodes_proj = _Linear(s, "cond.nnodes", c.budget_encoding_dim, c.attr_embed_dim, rng)

        self.left_state_embed = _Linear(s, "embed.left_state", 2, c.attr_embed_dim, rng)
        self.right_state_embed = _Linear(s, "embed.right_state", 1, c.attr_embed_dim, rng)
        self.edge_state_embed = _Linear(s, "embed.edge_state", 1, c.attr_embed_dim, rng)
        self.left_feat_embed = _Linear(s, "embed.left_feat", c.node_feature_dim, c.feat_embed_dim, rng)
        self.right_feat_embed = _Linear(s, "embed.right_feat", c.edge_feature_dim, c.feat_embed_dim, rng)
        self.left_film_gain = _Linear(s, "film.left.gain", c.node_feature_dim, c.feat_embed_dim, rng)
        self.left_film_bias = _Linear(s, "film.left.bias", c.node_feature_dim, c.feat_embed_dim, rng)
        self.right_film_gain = _Linear(s, "film.right.gain", c.edge_feature_dim, c.feat_embed_dim, rng)
        self.right_film_bias = _Linear(s, "film.right.bias", c.edge_feature_dim, c.feat_embed_dim, rng)

        left_in = c.pe_dim + 2 * c.attr_embed_dim + c.attr_embed_dim + c.feat_embed_dim + c.time_enc_dim + 1
        right_in = c.pe_dim + c.attr_embed_dim + c.attr_embed_dim + c.feat_embed_dim + c.time_enc_dim + 1
        edge_in = 2 * c.pe_dim + c.attr_embed_dim + c.time_enc_dim + 1
        self.left_in = _Linear(s, "in.left", left_in, c.hidden_dim, rng)
        self.right_in = _Linear(s, "in.right", right_in, c.hidden_dim, rng)
        self.edge_in = _Linear(s, "in.edge", edge_in, c.hidden_dim, rng)
        self.left_in_ln = _LayerNorm(s, "in.left_ln", c.hidden_dim)
        self.right_in_ln = _LayerNorm(s, "in.right_ln", c.hidden_dim)
        self.edge_in_ln = _LayerNorm(s, "in.edge_ln", c.hidden_dim)

        h = c.hidden_dim
        self.layers = []
        for i in range(c.num_layers):
            p = f"layer{i}"
            self.layers.append(
                {
                    "mlp_a": _MLP(s, f"{p}.mlp_a", 3 * h, c.mlp_hidden, h, rng),
                    "mlp_b": _MLP(s, f"{p}.mlp_b", 3 * h, c.mlp_hidden, h, rng),
                    "lin_o": _Linear(s, f"{p}.lin_o", h, h, rng),
                    "ln_e": _LayerNorm(s, f"{p}.ln_e", h),
                    "mlp_left": _MLP(s, f"{p}.mlp_left", 2 * h, c.mlp_hidden, h, rng),
                    "ln_left": _LayerNorm(s, f"{p}.ln_left", h),
                    "mlp_right": _MLP(s, f"{p}.mlp_right", 2 * h, c.mlp_hidden, h, rng),
                    "ln_right": _LayerNorm(s, f"{p}.ln_right", h),
                }
            )

        # Heads start at exactly "change nothing": zero weights with fixed
        # biases, so an untrained model clones no node, keeps every edge,
        # and never inflates the graph while sampling.
        self.head_left_exp = _Linear(s, "head.left_exp", h, 1, rng, bias_fill=-1.0, zero_weights=True)
        self.head_left_split = _Linear(s, "head.left_split", h, 1, rng, zero_weights=True)
        self.head_left_feat = _Linear(s, "head.left_feat", h, c.node_feature_dim, rng, zero_weights=True)
        self.head_right_exp = _Linear(s, "head.right_exp", h, 1, rng, bias_fill=-1.0, zero_weights=True)
        self.head_right_feat = _Linear(s, "head.right_feat", h, c.edge_feature_dim, rng, zero_weights=True)
        self.head_edge_keep = _Linear(s, "head.edge_keep", h, 1, rng, bias_fill=1.0, zero_weights=True)

    def encode_spectral(self, rows: np.ndarray, eigenvalues: np.ndarray) -> Tensor:
        """Sign-invariant positional encoding of eigenvector rows.

        Each eigenvector column is paired with its eigenvalue and passed
        through the shared map in both signs; the summed responses are mixed
        across eigenvectors.  Flipping any column's sign leaves the output
        unchanged.
        """
        k = self.config.spectral_k
        blocks = []
        for i in range(k):
            col = rows[:, i : i + 1]
            lam_col = np.full_like(col, eigenvalues[i])
            pos = self.phi(Tensor(np.concatenate([col, lam_col], axis=1)))
            neg = self.phi(Tensor(np.concatenate([-col, lam_col], axis=1)))
            blocks.append(ad.add(pos, neg))
        return self.rho(ad.concat(blocks, axis=1))

    def spectral_embed(
        self,
        b: BipartiteGraph,
        v=None,
        k: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Positional embeddings for the expansion of ``b`` by ``v``.

        Eigenvector rows are encoded sign-invariantly and parent embeddings
        are copied to all of their children.  With ``k = 0`` the embeddings
        are i.i.d. standard normal draws instead of spectral encodings.
        """
        k = self.config.spectral_k if k is None else k
        if k == 0:
            if rng is None:
                raise ValueError("k = 0 embeddings require an rng")
            left = rng.standard_normal((b.num_left, self.config.pe_dim))
            right = rng.standard_normal((b.num_right, self.config.pe_dim))
        else:
            lrows, rrows, lam = spectral_rows(b, k)
            if k != self.config.spectral_k:
                raise ValueError("k must match config.spectral_k for encoded embeddings")
            with ad.no_grad():
                left = self.encode_spectral(lrows, lam).data
                right = self.encode_spectral(rrows, lam).data
        if v is not None:
            left = np.repeat(left, v.left, axis=0)
            right = np.repeat(right, v.right, axis=0)
        return left, right

    def _film(self, embed: Tensor, parent_feats: np.ndarray, side: str) -> Tensor:
        pf = Tensor(parent_feats)
        if side == "left":
            gain = self.left_film_gain(pf)
            bias = self.left_film_bias(pf)
        else:
            gain = self.right_film_gain(pf)
            bias = self.right_film_bias(pf)
        one = Tensor(1.0)
        return ad.add(ad.mul(embed, ad.add(one, gain)), bias)

    def forward(self, inp: DenoiserInput) -> dict[str, Tensor]:
        c = self.config
        n, m, e = inp.num_left, inp.num_right, inp.num_edges
        t_vec = fourier_time_encoding(inp.t, c.time_enc_dim)

        pe_left = self.encode_spectral(inp.left_spectral, inp.eigenvalues)
        pe_right = self.encode_spectral(inp.right_spectral, inp.eigenvalues)

        budget_enc = sinusoidal_encoding(inp.left_budgets, c.budget_encoding_dim, c.budget_base_freq)
        n_enc = sinusoidal_encoding(np.array([inp.total_left]), c.budget_encoding_dim, c.budget_base_freq)

        lf_embed = self._film(self.left_feat_embed(Tensor(inp.left_feature_state)), inp.left_parent_features, "left")
        rf_embed = self._film(self.right_feat_embed(Tensor(inp.right_feature_state)), inp.right_parent_features, "right")

        left_parts = [
            pe_left,
            self.budget_proj(Tensor(budget_enc)),
            self.nnodes_proj(Tensor(np.tile(n_enc, (n, 1)))),
            self.left_state_embed(Tensor(inp.left_state)),
            lf_embed,
            Tensor(np.tile(t_vec, (n, 1))),
            Tensor(np.full((n, 1), inp.rho_hat)),
        ]
        right_parts = [
            pe_right,
            self.nnodes_proj(Tensor(np.tile(n_enc, (m, 1)))),
            self.right_state_embed(Tensor(inp.right_state)),
            rf_embed,
            Tensor(np.tile(t_vec, (m, 1))),
            Tensor(np.full((m, 1), inp.rho_hat)),
        ]
        src = inp.edges[:, 0]
        dst = inp.edges[:, 1]
        edge_parts = [
            ad.gather_rows(pe_left, src),
            ad.gather_rows(pe_right, dst),
            self.edge_state_embed(Tensor(inp.edge_state)),
            Tensor(np.tile(t_vec, (e, 1))),
            Tensor(np.full((e, 1), inp.rho_hat)),
        ]

        h_left = self.left_in_ln(ad.silu(self.left_in(ad.concat(left_parts, axis=1))))
        h_right = self.right_in_ln(ad.silu(self.right_in(ad.concat(right_parts, axis=1))))
        h_edge = self.edge_in_ln(ad.silu(self.edge_in(ad.concat(edge_parts, axis=1))))

        for layer in self.layers:
            x_e = ad.concat([h_edge, ad.gather_rows(h_left, src), ad.gather_rows(h_right, dst)], axis=1)
            gate = ad.mul(layer["mlp_a"](x_e), layer["mlp_b"](x_e))
            h_edge = layer["ln_e"](ad.add(h_edge, layer["lin_o"](gate)))
            agg_l = ad.segment_sum(h_edge, src, n)
            agg_r = ad.segment_sum(h_edge, dst, m)
            h_left = layer["ln_left"](ad.add(h_left, layer["mlp_left"](ad.concat([h_left, agg_l], axis=1))))
            h_right = layer["ln_right"](ad.add(h_right, layer["mlp_right"](ad.concat([h_right, agg_r], axis=1))))

        out = {
            "left_expansion": self.head_left_exp(h_left),
            "left_split": self.head_left_split(h_left),
            "left_features": self.head_left_feat(h_left),
            "right_expansion": self.head_right_exp(h_right),
            "right_features": self.head_right_feat(h_right),
            "edge_keep": self.head_edge_keep(h_edge),
        }
        for key, tensor in out.items():
            if not np.all(np.isfinite(tensor.data)):
                raise FloatingPointError(f"non-finite activations in head {key!r}")
        return out

    def predict(self, inp: DenoiserInput) -> dict[str, np.ndarray]:
        """Forward pass without tape construction; plain arrays out."""
        with ad.no_grad():
            out = self.forward(inp)
        return {k: v.data for k, v in out.items()}

    def save(self, path, extra_config: dict | None = None) -> None:
        cfg = self.config.to_dict()
        if extra_config:
            cfg = {**cfg, **{k: v for k, v in extra_config.items() if k not in cfg}}
        ad.save_checkpoint(path, self.store, cfg)

    @classmethod
    def from_checkpoint(cls, path) -> "Denoiser":
        store, manifest = ad.load_checkpoint(path)
        config = DenoiserConfig.from_dict(manifest["config"])
        return cls(config, rng=np.random.default_rng(0), store=store)
