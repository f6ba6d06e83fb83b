"""Downstream heads on pooled graph representations (GQAS, GSQAS-URL, GSQAS-PF)."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .circuit_ir import TaskPreset, task_preset
from .graph_encoding import CircuitGraph, stack_graphs
from .nn import Adam, BatchNorm, Linear, Module, Tensor, bce_loss, mse_loss, no_grad
from .nn.checkpoint import dump_tensors, parse_tensors
from .vgae import GraphEncoder, VGAE

log = logging.getLogger(__name__)

HIDDEN = 30


class Mode(str, Enum):
    GQAS = "GQAS"
    URL = "URL"
    PF = "PF"


class HeadKind(str, Enum):
    REGRESSOR = "reg"
    CLASSIFIER = "clf"


def parse_mode(value: str | Mode) -> Mode:
    key = str(value.value if isinstance(value, Mode) else value).upper()
    key = {"GSQAS_URL": "URL", "GSQAS_PF": "PF", "GSQAS(URL)": "URL", "GSQAS(PF)": "PF"}.get(key, key)
    try:
        return Mode(key)
    except ValueError:
        raise ValueError(f"unknown mode {value!r}") from None


def parse_head(value: str | HeadKind) -> HeadKind:
    key = str(value.value if isinstance(value, HeadKind) else value).lower()
    key = {"regressor": "reg", "classifier": "clf"}.get(key, key)
    try:
        return HeadKind(key)
    except ValueError:
        raise ValueError(f"unknown head kind {value!r}") from None


def pool(Z):
    """Mean over the node axis (``-2``)."""
    if isinstance(Z, Tensor):
        return Z.mean(axis=-2)
    return np.asarray(Z).mean(axis=-2)


class PredictorHead(Module):
    """Linear -> BatchNorm -> ReLU -> Linear -> Sigmoid."""

    def __init__(self, in_dim: int, rng: np.random.Generator, hidden: int = HIDDEN):
        self.fc1 = Linear(in_dim, hidden, rng)
        self.bn = BatchNorm(hidden)
        self.fc2 = Linear(hidden, 1, rng)

    def forward(self, h: Tensor) -> Tensor:
        return self.fc2(self.bn(self.fc1(h)).relu()).sigmoid().reshape(-1)


@dataclass
class DownstreamModel:
    preset: TaskPreset
    mode: Mode
    head_kind: HeadKind
    head: PredictorHead
    encoder: GraphEncoder | None = None
    history: list[dict] = field(default_factory=list)

    def features(self, graphs: list[CircuitGraph], training: bool = False) -> Tensor:
        if any(g.N != self.preset.num_nodes or g.F != self.preset.feature_dim for g in graphs):
            raise ValueError(f"graph does not match preset {self.preset.task.value}")
        X, A_hat = stack_graphs(graphs)
        if self.mode is Mode.GQAS:
            return Tensor(pool(X))
        if self.mode is Mode.URL or not training:
            self.encoder.eval()
            with no_grad():
                mu, _ = self.encoder(X, A_hat)
            return Tensor(pool(mu.data))
        self.encoder.train()
        mu, _ = self.encoder(X, A_hat)
        return pool(mu)

    def forward(self, graphs: list[CircuitGraph], training: bool = False) -> Tensor:
        self.head.train(training)
        return self.head(self.features(graphs, training))

    def trainable_parameters(self) -> list[Tensor]:
        params = self.head.parameters()
        if self.mode is Mode.PF:
            params += self.encoder.parameters()
        return params

    def tags(self) -> dict:
        return {"preset": self.preset.task.value, "mode": self.mode.value, "head": self.head_kind.value}

    def to_dict(self) -> dict:
        return {
            "tags": self.tags(),
            "encoder": dump_tensors(self.encoder.state_dict()) if self.encoder is not None else None,
            "head": dump_tensors(self.head.state_dict()),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, doc: dict) -> DownstreamModel:
        tags = doc["tags"]
        preset = task_preset(tags["preset"])
        model = init_model(preset, parse_mode(tags["mode"]), parse_head(tags["head"]), None if doc["encoder"] is None else _blank_encoder(preset))
        if doc["encoder"] is not None:
            model.encoder.load_state_dict(parse_tensors(doc["encoder"])[0])
        model.head.load_state_dict(parse_tensors(doc["head"])[0])
        return model

    @classmethod
    def load(cls, path: str | Path) -> DownstreamModel:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _blank_encoder(preset: TaskPreset) -> GraphEncoder:
    return VGAE(preset).encoder


def init_model(preset: TaskPreset, mode: Mode, head_kind: HeadKind, encoder: GraphEncoder | None = None, seed: int = 0) -> DownstreamModel:
    mode, head_kind = parse_mode(mode), parse_head(head_kind)
    if mode is not Mode.GQAS and encoder is None:
        raise ValueError(f"{mode.value} mode needs a pretrained encoder")
    if mode is Mode.GQAS:
        encoder = None
    elif mode is Mode.PF:
        encoder = copy.deepcopy(encoder)  # fine-tuning must not leak into the shared encoder
    in_dim = preset.feature_dim if encoder is None else encoder.latent_dim
    head = PredictorHead(in_dim, np.random.default_rng(seed))
    return DownstreamModel(preset, mode, head_kind, head, encoder)


def predict(graphs: list[CircuitGraph], model: DownstreamModel, batch_size: int = 1024) -> np.ndarray:
    """Eval-mode sigmoid outputs, one per graph."""
    out = []
    with no_grad():
        for s in range(0, len(graphs), batch_size):
            out.append(model.forward(graphs[s : s + batch_size]).data)
    return np.concatenate(out) if out else np.zeros(0)


def classify(graphs: list[CircuitGraph], model: DownstreamModel, threshold: float = 0.5) -> np.ndarray:
    if model.head_kind is not HeadKind.CLASSIFIER:
        raise ValueError("classify needs a classifier head")
    return predict(graphs, model) > threshold


@dataclass
class DownstreamConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    encoder_lr: float = 1e-4
    val_fraction: float = 0.2
    patience: int = 30
    seed: int = 0


def _loss(model: DownstreamModel, pred: Tensor, y: np.ndarray) -> Tensor:
    return mse_loss(pred, y) if model.head_kind is HeadKind.REGRESSOR else bce_loss(pred, y)


def evaluate_loss(model: DownstreamModel, graphs: list[CircuitGraph], y: np.ndarray) -> float:
    with no_grad():
        return _loss(model, model.forward(graphs), np.asarray(y, dtype=float)).item()


def train_downstream(
    graphs: list[CircuitGraph],
    y,
    preset: TaskPreset,
    mode: Mode | str,
    head_kind: HeadKind | str,
    encoder: GraphEncoder | None = None,
    cfg: DownstreamConfig = DownstreamConfig(),
) -> DownstreamModel:
    """Mini-batch Adam; URL trains the head only, PF also fine-tunes its own encoder copy.

    A ``val_fraction`` split drives early stopping and best-checkpoint selection.
    """
    y = np.asarray(y, dtype=float)
    if not graphs:
        raise ValueError("empty training set")
    if len(y) != len(graphs):
        raise ValueError("labels and graphs differ in length")
    model = init_model(preset, mode, head_kind, encoder, seed=cfg.seed)
    if model.head_kind is HeadKind.REGRESSOR and not ((y >= 0) & (y <= 1)).all():
        raise ValueError("regression labels must lie in [0, 1]")
    if model.head_kind is HeadKind.CLASSIFIER and not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("classifier labels must be 0 or 1")
    if model.head_kind is HeadKind.REGRESSOR:
        # Start the sigmoid at the mean target; normalized energies sit near 0.03, far from 0.5.
        mean = float(np.clip(y.mean(), 1e-3, 1 - 1e-3))
        model.head.fc2.bias.data[:] = np.log(mean / (1 - mean))

    rng = np.random.default_rng(cfg.seed + 1)
    order = rng.permutation(len(graphs))
    n_val = int(round(len(graphs) * cfg.val_fraction)) if len(graphs) >= 10 else 0
    val_idx, tr_idx = order[:n_val], order[n_val:]
    tr_g, tr_y = [graphs[i] for i in tr_idx], y[tr_idx]
    val_g, val_y = [graphs[i] for i in val_idx], y[val_idx]

    opts = [Adam(model.head.parameters(), lr=cfg.lr)]
    if model.mode is Mode.PF:
        opts.append(Adam(model.encoder.parameters(), lr=cfg.encoder_lr))

    def snapshot():
        return (model.head.state_dict(), model.encoder.state_dict() if model.mode is Mode.PF else None)

    best_loss, best_state, stale, epoch = np.inf, snapshot(), 0, 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(tr_g))
        total, seen = 0.0, 0
        for s in range(0, len(perm), cfg.batch_size):
            idx = perm[s : s + cfg.batch_size]
            if len(idx) < 2:
                continue
            for o in opts:
                o.zero_grad()
            loss = _loss(model, model.forward([tr_g[i] for i in idx], training=True), tr_y[idx])
            loss.backward()
            for o in opts:
                o.step()
            total += loss.item() * len(idx)
            seen += len(idx)
        train_loss = total / max(seen, 1)
        val_loss = evaluate_loss(model, val_g, val_y) if n_val else evaluate_loss(model, tr_g, tr_y)
        model.history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss, best_state, stale = val_loss, snapshot(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.head.load_state_dict(best_state[0])
    if best_state[1] is not None:
        model.encoder.load_state_dict(best_state[1])
    log.debug("%s/%s stopped at epoch %d, best val %.5f", model.mode.value, model.head_kind.value, epoch, best_loss)
    return model
