"""Search workflow: label a few circuits, train predictors, screen a pool, evaluate top-K candidates."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import kendalltau

from .circuit_ir import Circuit, Task, TaskPreset, generate_circuits, task_preset
from .graph_encoding import CircuitGraph, encode
from .labeling import LabelCache, Labeler, normalized_energy
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .predictor import DownstreamConfig, DownstreamModel, HeadKind, Mode, classify, predict, train_downstream
from .sim.classifier import VqcOptions
from .sim.vqe import VqeOptions
from .vgae import VGAE, PretrainConfig, pretrain

log = logging.getLogger(__name__)


class SearchMode(str, Enum):
    GQAS = "GQAS"
    GSQAS_URL = "GSQAS_URL"
    GSQAS_PF = "GSQAS_PF"
    RANDOM = "RANDOM"

    @property
    def predictor_mode(self) -> Mode | None:
        return {"GQAS": Mode.GQAS, "GSQAS_URL": Mode.URL, "GSQAS_PF": Mode.PF}.get(self.value)

    @property
    def needs_encoder(self) -> bool:
        return self in (SearchMode.GSQAS_URL, SearchMode.GSQAS_PF)


def derive_seed(base: int, *tags) -> int:
    """Stable 32-bit seed from a base seed and tags (independent of Python's hash randomization)."""
    return int(hashlib.sha1(repr((int(base),) + tags).encode()).hexdigest()[:8], 16)


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class CeOptions:
    per_class: int = 400
    tol: float = 0.01
    seed: int = 0


PAPER_SCALE = {"pool_size": 50_000, "n_train": 400, "K": 400, "runs": 50}
_NESTED = {"vqe": VqeOptions, "vqc": VqcOptions, "pretrain": PretrainConfig, "downstream": DownstreamConfig, "ce": CeOptions}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return cls(**data)


@dataclass
class ExperimentConfig:
    task: str = "VQE_TFIM"
    pool_size: int = 5000
    pretext_size: int = 5000
    n_train: int = 100
    K: int = 100
    runs: int = 5
    seed: int = 0
    modes: list[str] = field(default_factory=lambda: [m.value for m in SearchMode])
    good_threshold: float = -7.55
    success_threshold: float = -7.7
    success_accuracy: float = 0.7
    label_pool: bool = True
    eval_size: int = 0
    until_success_cap: int = 0
    workers: int = 1
    encoder_checkpoint: str | None = None
    output_dir: str | None = None
    write_embeddings: bool = False
    paper_scale: bool = False
    vqe: VqeOptions = field(default_factory=VqeOptions)
    vqc: VqcOptions = field(default_factory=VqcOptions)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    downstream: DownstreamConfig = field(default_factory=DownstreamConfig)
    ce: CeOptions = field(default_factory=CeOptions)

    def __post_init__(self) -> None:
        self.validate()

    @property
    def preset(self) -> TaskPreset:
        return task_preset(self.task)

    @property
    def search_modes(self) -> list[SearchMode]:
        return [SearchMode(m) for m in self.modes]

    def validate(self) -> None:
        Task.parse(self.task)
        if not self.modes:
            raise ValueError("at least one mode is required")
        for m in self.modes:
            try:
                SearchMode(m)
            except ValueError:
                raise ValueError(f"unknown mode {m!r}; expected one of {[s.value for s in SearchMode]}") from None
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("modes repeat")
        for name in ("pool_size", "n_train", "runs", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("eval_size", "until_success_cap", "pretext_size"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.n_train > self.pool_size:
            raise ValueError("n_train exceeds pool_size")
        if self.success_threshold > self.good_threshold:
            raise ValueError("success threshold must not exceed the good threshold")
        if any(SearchMode(m).needs_encoder for m in self.modes) and self.encoder_checkpoint is None and self.pretext_size < 2:
            raise ValueError("GSQAS modes need pretext_size >= 2 or an encoder_checkpoint")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        if data.get("paper_scale"):
            data = {**PAPER_SCALE, **data}
        for key, sub in _NESTED.items():
            if key in data:
                data[key] = _build(sub, data[key], key)
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed JSON ({exc.msg}, line {exc.lineno})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ------------------------------------------------------------------ screening and selection


@dataclass
class Screening:
    order: np.ndarray  # pool indices, best first
    n_rest: int
    survivors: np.ndarray
    fallback: bool = False


def two_stage_screen(
    graphs: list[CircuitGraph],
    classifier: DownstreamModel | None,
    regressor: DownstreamModel,
    higher_is_better: bool = False,
) -> Screening:
    """Stage 1 keeps graphs the classifier accepts; stage 2 sorts survivors by predicted score.

    Ties keep pool order (stable sort). Without a classifier every graph survives. If no graph
    survives, the whole pool is ranked and ``fallback`` is set.
    """
    if classifier is not None and classifier.preset.task is not regressor.preset.task:
        raise ValueError("classifier and regressor were trained on different presets")
    keep = classify(graphs, classifier) if classifier is not None else np.ones(len(graphs), bool)
    survivors = np.flatnonzero(keep)
    fallback = len(survivors) == 0 and len(graphs) > 0
    ranked = np.arange(len(graphs)) if fallback else survivors
    if len(ranked) == 0:
        return Screening(ranked, 0, survivors, fallback)
    score = predict([graphs[i] for i in ranked], regressor)
    order = np.argsort(-score if higher_is_better else score, kind="stable")
    return Screening(ranked[order], len(survivors), survivors, fallback)


@dataclass
class Selection:
    best_rank: int  # position in the ranking, 0-based
    best_metric: float
    metrics: np.ndarray
    candidates_used: int
    clamped: bool
    success: bool


def final_select(
    ranked: np.ndarray,
    K: int,
    evaluate: Callable[[np.ndarray], np.ndarray],
    success: Callable[[float], bool],
    higher_is_better: bool = False,
) -> Selection:
    """Ground-truth the top ``K`` of ``ranked`` (clamped to its length) and keep the best."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(ranked) == 0:
        raise ValueError("nothing to select from")
    k = min(K, len(ranked))
    metrics = np.asarray(evaluate(np.asarray(ranked[:k])), dtype=float)
    filled = np.where(np.isnan(metrics), -np.inf if higher_is_better else np.inf, metrics)
    best = int(np.argmax(filled) if higher_is_better else np.argmin(filled))
    return Selection(best, float(metrics[best]), metrics, k, k < K, bool(success(float(metrics[best]))))


def candidates_until_success(
    ranked: np.ndarray, evaluate: Callable[[np.ndarray], np.ndarray], success: Callable[[float], bool], cap: int, chunk: int = 1
) -> int | None:
    """1-based rank of the first successful candidate, or ``None`` if none within ``cap``.

    ``chunk`` > 1 labels ahead in blocks (cheaper with batched simulators); the answer is unchanged.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    limit = min(cap, len(ranked))
    for s in range(0, limit, chunk):
        block = np.asarray(ranked[s : min(s + chunk, limit)])
        for j, m in enumerate(evaluate(block)):
            if not np.isnan(m) and success(float(m)):
                return s + j + 1
    return None


def dedup(circuits: list[Circuit]) -> list[Circuit]:
    seen, out = set(), []
    for c in circuits:
        key = c.structure()
        if key not in seen:
            seen.add(key)
            out.append(c)
    return out


# ------------------------------------------------------------------ experiment


RUN_COLUMNS = [
    "run",
    "seed",
    "mode",
    "success",
    "best_metric",
    "candidates_used",
    "n_rest",
    "density",
    "n_good_in_rest",
    "pool_size",
    "pool_good",
    "pool_density",
    "success_density",
    "fallback",
    "clamped",
    "until_success",
    "kendall_tau",
    "kendall_p",
]


@dataclass
class RunRow:
    run: int
    seed: int
    mode: str
    success: bool
    best_metric: float
    candidates_used: int
    n_rest: int
    density: float | None = None
    n_good_in_rest: int | None = None
    pool_size: int = 0
    pool_good: int | None = None
    pool_density: float | None = None
    success_density: float | None = None
    fallback: bool = False
    clamped: bool = False
    until_success: int | None = None
    kendall_tau: float | None = None
    kendall_p: float | None = None


@dataclass
class RunReport:
    rows: list[RunRow]
    summary: dict
    config: dict
    pretrain: dict | None = None

    def to_dict(self) -> dict:
        return {"config": self.config, "pretrain": self.pretrain, "summary": self.summary, "runs": [dataclasses.asdict(r) for r in self.rows]}

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in self.rows:
            w.writerow(["" if getattr(r, c) is None else getattr(r, c) for c in RUN_COLUMNS])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        (out / "runs.csv").write_text(self.runs_csv())


def summarize(rows: list[RunRow], modes: list[str]) -> dict:
    out = {}
    for mode in modes:
        mine = [r for r in rows if r.mode == mode]
        found = [r.until_success for r in mine if r.until_success is not None]
        dens = [r.density for r in mine if r.density is not None]
        taus = [r.kendall_tau for r in mine if r.kendall_tau is not None]
        out[mode] = {
            "runs": len(mine),
            "success_probability": float(np.mean([r.success for r in mine])) if mine else 0.0,
            "mean_best_metric": float(np.mean([r.best_metric for r in mine])) if mine else None,
            "mean_candidates_until_success": float(np.mean(found)) if found else None,
            "runs_with_success_found": len(found),
            "mean_density": float(np.mean(dens)) if dens else None,
            "fallbacks": sum(r.fallback for r in mine),
            "mean_kendall_tau": float(np.mean(taus)) if taus else None,
        }
    return out


def obtain_encoder(cfg: ExperimentConfig, preset: TaskPreset) -> tuple[VGAE, dict]:
    """Load ``encoder_checkpoint`` or pretrain once on a fresh unlabeled set."""
    if cfg.encoder_checkpoint:
        return load_vgae(cfg.encoder_checkpoint, preset), {"checkpoint": str(cfg.encoder_checkpoint)}
    circuits = generate_circuits(preset, cfg.pretext_size, derive_seed(cfg.seed, "pretext"))
    graphs = [encode(c, preset) for c in circuits]
    res = pretrain(graphs, preset, cfg.pretrain)
    last = res.history[res.best_epoch - 1] if res.best_epoch else {}
    return res.model, {"best_epoch": res.best_epoch, "epochs": len(res.history), **{k: v for k, v in last.items() if k != "epoch"}}


def save_vgae(model: VGAE, path: str | Path) -> None:
    save_checkpoint(path, model.state_dict(), model.tags())


def load_vgae(path: str | Path, preset: TaskPreset) -> VGAE:
    model = VGAE(preset)
    tensors, _ = load_checkpoint(path, expect_tags=model.tags())
    model.load_state_dict(tensors)
    model.eval()
    return model


def run_experiment(cfg: ExperimentConfig, cache: LabelCache | None = None, encoder: VGAE | None = None) -> RunReport:
    """Run ``cfg.runs`` independent searches for every mode; deterministic given ``cfg.seed``."""
    cfg.validate()
    preset = cfg.preset
    vqe = preset.task is Task.VQE_TFIM
    labeler = Labeler(
        preset, cfg.vqe, cfg.vqc, seed=cfg.seed, ce_per_class=cfg.ce.per_class, ce_tol=cfg.ce.tol,
        ce_seed=cfg.ce.seed, workers=cfg.workers, cache=cache if cache is not None else LabelCache.from_env(),
    )
    pre_info = None
    if encoder is None and any(m.needs_encoder for m in cfg.search_modes):
        encoder, pre_info = obtain_encoder(cfg, preset)

    def labels_of(circuits: list[Circuit]) -> np.ndarray:
        return np.array([np.nan if r.label is None else r.label for r in labeler.label(circuits)])

    if vqe:
        success = lambda m: m < cfg.success_threshold  # noqa: E731
    else:
        success = lambda m: m >= cfg.success_accuracy  # noqa: E731

    rows: list[RunRow] = []
    for run in range(cfg.runs):
        run_seed = derive_seed(cfg.seed, "run", run)
        pool = dedup(generate_circuits(preset, cfg.pool_size, run_seed))
        if cfg.n_train > len(pool):
            raise ValueError(f"run {run}: only {len(pool)} distinct circuits for n_train={cfg.n_train}")
        graphs = [encode(c, preset) for c in pool]
        rng = np.random.default_rng(run_seed)
        train_idx = np.sort(rng.choice(len(pool), cfg.n_train, replace=False))
        y_raw = labels_of([pool[i] for i in train_idx])
        ok = ~np.isnan(y_raw)
        train_g = [graphs[i] for i, good in zip(train_idx, ok) if good]
        y_raw = y_raw[ok]
        pool_labels = labels_of(pool) if vqe and cfg.label_pool else None

        eval_g, eval_y = [], None
        if cfg.eval_size:
            known = {c.structure() for c in pool}
            extra = [c for c in dedup(generate_circuits(preset, cfg.eval_size, derive_seed(run_seed, "eval"))) if c.structure() not in known]
            ev = labels_of(extra)
            eval_g = [encode(c, preset) for c, v in zip(extra, ev) if not np.isnan(v)]
            eval_y = ev[~np.isnan(ev)]

        def evaluate(idx: np.ndarray) -> np.ndarray:
            return labels_of([pool[i] for i in idx])

        for mode in cfg.search_modes:
            mode_seed = derive_seed(run_seed, mode.value)
            tau = p_val = None
            if mode is SearchMode.RANDOM:
                screen = Screening(np.random.default_rng(mode_seed).permutation(len(pool)), len(pool), np.arange(len(pool)))
            else:
                dcfg = dataclasses.replace(cfg.downstream, seed=mode_seed)
                y_reg = normalized_energy(y_raw) if vqe else np.clip(y_raw, 0.0, 1.0)
                reg = train_downstream(train_g, y_reg, preset, mode.predictor_mode, HeadKind.REGRESSOR, encoder_of(encoder, mode), dcfg)
                clf = None
                if vqe:
                    y_clf = (y_raw < cfg.good_threshold).astype(float)
                    clf = train_downstream(train_g, y_clf, preset, mode.predictor_mode, HeadKind.CLASSIFIER, encoder_of(encoder, mode), dcfg)
                screen = two_stage_screen(graphs, clf, reg, higher_is_better=not vqe)
                if eval_g:
                    pred = predict(eval_g, reg)
                    tau, p_val = kendall(pred, eval_y)
            sel = final_select(screen.order, cfg.K, evaluate, success, higher_is_better=not vqe)
            row = RunRow(
                run=run, seed=run_seed, mode=mode.value, success=sel.success, best_metric=sel.best_metric,
                candidates_used=sel.candidates_used, n_rest=screen.n_rest, pool_size=len(pool),
                fallback=screen.fallback, clamped=sel.clamped, kendall_tau=tau, kendall_p=p_val,
            )
            if pool_labels is not None:
                rest = pool_labels[screen.survivors]
                row.n_good_in_rest = int(np.sum(rest < cfg.good_threshold))
                row.density = row.n_good_in_rest / screen.n_rest if screen.n_rest else None
                row.success_density = float(np.sum(rest < cfg.success_threshold)) / screen.n_rest if screen.n_rest else None
                row.pool_good = int(np.sum(pool_labels < cfg.good_threshold))
                row.pool_density = row.pool_good / len(pool)
            if cfg.until_success_cap:
                row.until_success = candidates_until_success(
                    screen.order, evaluate, success, cfg.until_success_cap, chunk=64 if vqe else 1
                )
            rows.append(row)
            log.info("run %d %s best %.5f success %s", run, mode.value, row.best_metric, row.success)
        if run == 0 and cfg.write_embeddings and cfg.output_dir and encoder is not None:
            write_embeddings(Path(cfg.output_dir) / "embeddings.csv", pool, graphs, encoder, pool_labels)

    report = RunReport(rows, summarize(rows, cfg.modes), cfg.to_dict(), pre_info)
    if cfg.output_dir:
        report.write(cfg.output_dir)
    return report


def encoder_of(model: VGAE | None, mode: SearchMode):
    return model.encoder if (model is not None and mode.needs_encoder) else None


def kendall(pred: np.ndarray, truth: np.ndarray) -> tuple[float | None, float | None]:
    if len(pred) < 2:
        return None, None
    res = kendalltau(pred, truth)
    tau, p = float(res.statistic), float(res.pvalue)
    return (None, None) if np.isnan(tau) else (tau, p)


def write_embeddings(path: Path, pool: list[Circuit], graphs: list[CircuitGraph], model: VGAE, labels: np.ndarray | None) -> None:
    """Pooled posterior means of the pool, one row per circuit, for external visualization."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Z = model.embed(graphs).mean(axis=1)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "digest", "label", *(f"z{d}" for d in range(Z.shape[1]))])
        for i, (c, z) in enumerate(zip(pool, Z)):
            lab = "" if labels is None or np.isnan(labels[i]) else labels[i]
            w.writerow([i, c.digest(), lab, *z.tolist()])
