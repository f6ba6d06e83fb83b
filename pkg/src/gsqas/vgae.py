"""Variational graph autoencoder with a GIN encoder (the pretext task)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .circuit_ir import TaskPreset
from .graph_encoding import CircuitGraph, stack_graphs
from .nn import Adam, Linear, LinearBNReLU, Module, Tensor, bernoulli_log_likelihood, gaussian_kl, no_grad, parameter
from .nn.losses import LOG_SIGMA_CLAMP

log = logging.getLogger(__name__)


def gin_layer(H: Tensor, A_hat, mlp, eps) -> Tensor:
    """``MLP((1 + eps) * H + A_hat @ H)``."""
    A_hat = A_hat if isinstance(A_hat, Tensor) else Tensor(A_hat)
    if A_hat.shape[-1] != H.shape[-2]:
        raise ValueError(f"adjacency {A_hat.shape} does not match node features {H.shape}")
    return mlp(H * (eps + 1.0) + A_hat @ H)


class GINLayer(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.mlp = LinearBNReLU(in_dim, out_dim, rng)
        self.eps = parameter(np.zeros(1))

    def forward(self, H: Tensor, A_hat) -> Tensor:
        return gin_layer(H, A_hat, self.mlp, self.eps)


class GraphEncoder(Module):
    """L GIN layers followed by two linear heads for ``mu`` and ``log sigma``."""

    def __init__(self, in_dim: int, latent_dim: int, rng: np.random.Generator, num_layers: int = 2, hidden: int | None = None):
        hidden = hidden or in_dim
        dims = [in_dim] + [hidden] * num_layers
        self.layers = [GINLayer(dims[k], dims[k + 1], rng) for k in range(num_layers)]
        self.mu_head = Linear(hidden, latent_dim, rng)
        self.log_sigma_head = Linear(hidden, latent_dim, rng)
        self.in_dim, self.latent_dim = in_dim, latent_dim

    def forward(self, X, A_hat) -> tuple[Tensor, Tensor]:
        H = X if isinstance(X, Tensor) else Tensor(X)
        if H.shape[-1] != self.in_dim:
            raise ValueError(f"feature dim {H.shape[-1]} != encoder input {self.in_dim}")
        for layer in self.layers:
            H = layer(H, A_hat)
        return self.mu_head(H), self.log_sigma_head(H)


class GraphDecoder(Module):
    def __init__(self, num_nodes: int, latent_dim: int, num_types: int, num_qubits: int, rng: np.random.Generator):
        self.adjacency = Linear(num_nodes, num_nodes, rng)
        self.gate_type = Linear(latent_dim, num_types, rng)
        self.position = Linear(latent_dim, num_qubits, rng)


def reparameterize(mu: Tensor, sigma: Tensor, rng: np.random.Generator) -> Tensor:
    if mu.shape != sigma.shape:
        raise ValueError("mu and sigma shapes differ")
    return mu + sigma * rng.standard_normal(mu.shape)


def adjacency_logits(Z: Tensor, dec: GraphDecoder) -> Tensor:
    # row i of Z Z^T passes through W_a, so the head is tied to a fixed node count
    return dec.adjacency(Z @ Z.T)


def decode_adjacency(Z: Tensor, dec: GraphDecoder) -> Tensor:
    return adjacency_logits(Z, dec).sigmoid()


def decode_type(Z: Tensor, dec: GraphDecoder) -> Tensor:
    return dec.gate_type(Z).softmax(axis=-1)


def decode_position(Z: Tensor, dec: GraphDecoder) -> Tensor:
    return dec.position(Z).sigmoid()


def sigma_of(log_sigma: Tensor) -> Tensor:
    return log_sigma.clip(-LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP).exp()


@dataclass
class ElboTerms:
    loss: Tensor
    objective: Tensor
    type_ll: float
    position_ll: float
    adjacency_ll: float
    kl: float


def elbo_terms(
    model: VGAE, X: np.ndarray, A_hat: np.ndarray, A: np.ndarray, type_idx: np.ndarray, num_types: int, rng, kl_weight: float = 1.0
) -> ElboTerms:
    """Negative ELBO averaged over the batch, single reparameterized sample per graph.

    ``loss`` is the true -ELBO; ``objective`` is the same sum with the KL scaled by ``kl_weight``.
    """
    B = X.shape[0]
    mu, log_sigma = model.encoder(X, A_hat)
    Z = reparameterize(mu, sigma_of(log_sigma), rng)
    type_logp = model.decoder.gate_type(Z).log_softmax(axis=-1)
    onehot = np.zeros(type_logp.shape)
    np.put_along_axis(onehot, type_idx[..., None], 1.0, axis=-1)
    type_ll = (type_logp * onehot).sum()
    pos_ll = bernoulli_log_likelihood(model.decoder.position(Z), X[..., num_types:])
    adj_ll = bernoulli_log_likelihood(adjacency_logits(Z, model.decoder), A)
    kl = gaussian_kl(mu, log_sigma=log_sigma)
    recon = type_ll + pos_ll + adj_ll
    loss = (kl - recon) * (1.0 / B)
    objective = loss if kl_weight == 1.0 else (kl * kl_weight - recon) * (1.0 / B)
    return ElboTerms(loss, objective, type_ll.item() / B, pos_ll.item() / B, adj_ll.item() / B, kl.item() / B)


class VGAE(Module):
    def __init__(self, preset: TaskPreset, seed: int = 0, num_layers: int = 2, hidden: int | None = None):
        rng = np.random.default_rng(seed)
        F = preset.feature_dim
        self.preset = preset
        self.latent_dim = F
        self.encoder = GraphEncoder(F, F, rng, num_layers=num_layers, hidden=hidden)
        self.decoder = GraphDecoder(preset.num_nodes, F, preset.num_types, preset.n, rng)

    def tags(self) -> dict:
        p = self.preset
        return {"preset": p.task.value, "F": p.feature_dim, "l": self.latent_dim, "N": p.num_nodes}

    def check_graphs(self, graphs: list[CircuitGraph]) -> None:
        p = self.preset
        if any(g.N != p.num_nodes or g.F != p.feature_dim for g in graphs):
            raise ValueError(f"graphs do not match preset {p.task.value} (N={p.num_nodes}, F={p.feature_dim})")
        if any(g.task and g.task != p.task.value for g in graphs):
            raise ValueError("dataset mixes presets")

    def terms(self, graphs: list[CircuitGraph], rng: np.random.Generator, kl_weight: float = 1.0) -> ElboTerms:
        X, A_hat = stack_graphs(graphs)
        A = np.stack([g.A for g in graphs])
        type_idx = np.stack([g.type_index for g in graphs])
        return elbo_terms(self, X, A_hat, A, type_idx, self.preset.num_types, rng, kl_weight)

    def elbo_loss(self, graphs: list[CircuitGraph], rng: np.random.Generator) -> Tensor:
        return self.terms(graphs, rng).loss

    def embed(self, graphs: list[CircuitGraph]) -> np.ndarray:
        """Posterior means ``(B, N, l)`` in eval mode."""
        was = self.training
        self.eval()
        with no_grad():
            X, A_hat = stack_graphs(graphs)
            mu, _ = self.encoder(X, A_hat)
        self.train(was)
        return mu.data

    def type_accuracy(self, graphs: list[CircuitGraph]) -> float:
        """Gate-type argmax reconstruction accuracy from the posterior mean."""
        was = self.training
        self.eval()
        with no_grad():
            X, A_hat = stack_graphs(graphs)
            mu, _ = self.encoder(X, A_hat)
            pred = self.decoder.gate_type(mu).data.argmax(axis=-1)
        self.train(was)
        truth = np.stack([g.type_index for g in graphs])
        return float((pred == truth).mean())

    def mean_neg_elbo(self, graphs: list[CircuitGraph], seed: int = 0, batch_size: int = 256) -> float:
        """Eval-mode mean -ELBO (fixed sampling seed)."""
        return self.mean_objective(graphs, 1.0, seed, batch_size)

    def mean_objective(self, graphs: list[CircuitGraph], kl_weight: float, seed: int = 0, batch_size: int = 256) -> float:
        rng = np.random.default_rng(seed)
        was = self.training
        self.eval()
        total = 0.0
        with no_grad():
            for s in range(0, len(graphs), batch_size):
                chunk = graphs[s : s + batch_size]
                total += self.terms(chunk, rng, kl_weight).objective.item() * len(chunk)
        self.train(was)
        return total / len(graphs)


@dataclass
class PretrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    val_fraction: float = 0.1
    seed: int = 0
    # None means 1/N: the KL is spread per node as in common VGAE code. 1.0 trains the plain ELBO.
    kl_weight: float | None = None

    def resolved_kl_weight(self, preset: TaskPreset) -> float:
        return 1.0 / preset.num_nodes if self.kl_weight is None else float(self.kl_weight)


@dataclass
class PretrainResult:
    model: VGAE
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0


def pretrain(graphs: list[CircuitGraph], preset: TaskPreset, cfg: PretrainConfig = PretrainConfig()) -> PretrainResult:
    """Mini-batch Adam on the (KL-weighted) mean negative ELBO; keeps the best-validation parameters.

    Under the unweighted ELBO the KL price of a per-node gate type is about what it saves in
    reconstruction, so the encoder learns to drop it; the default per-node weight avoids that.
    """
    if not graphs:
        raise ValueError("empty pretext dataset")
    if cfg.epochs < 1 or cfg.batch_size < 2:
        raise ValueError("need epochs >= 1 and batch_size >= 2")
    model = VGAE(preset, seed=cfg.seed)
    model.check_graphs(graphs)
    w = cfg.resolved_kl_weight(preset)
    if w < 0:
        raise ValueError("kl_weight must be non-negative")
    rng = np.random.default_rng(cfg.seed + 1)
    order = rng.permutation(len(graphs))
    n_val = int(round(len(graphs) * cfg.val_fraction)) if len(graphs) > 1 else 0
    val = [graphs[i] for i in order[:n_val]]
    train = [graphs[i] for i in order[n_val:]]
    opt = Adam(model.parameters(), lr=cfg.lr)
    best = (np.inf, model.state_dict(), 0)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        perm = rng.permutation(len(train))
        total = total_obj = seen = 0
        for s in range(0, len(train), cfg.batch_size):
            batch = [train[i] for i in perm[s : s + cfg.batch_size]]
            if len(batch) < 2:
                continue  # batch statistics need more than one graph
            opt.zero_grad()
            t = model.terms(batch, rng, w)
            t.objective.backward()
            opt.step()
            total += t.loss.item() * len(batch)
            total_obj += t.objective.item() * len(batch)
            seen += len(batch)
        row = {"epoch": epoch, "train_neg_elbo": total / max(seen, 1), "train_objective": total_obj / max(seen, 1)}
        if val:
            row["val_neg_elbo"] = model.mean_neg_elbo(val, seed=cfg.seed)
            row["val_objective"] = model.mean_objective(val, w, seed=cfg.seed)
        score = row.get("val_objective", row["train_objective"])
        history.append(row)
        log.info("pretrain epoch %d %s", epoch, row)
        if score < best[0]:
            best = (score, model.state_dict(), epoch)
    model.load_state_dict(best[1])
    model.eval()
    return PretrainResult(model, history, best[2])
