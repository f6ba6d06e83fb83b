"""Ground-truth labeling: per-circuit seeds, an on-disk label cache, JSONL datasets with resume."""
from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit_ir import Circuit, Task, TaskPreset
from .sim.classifier import CeTask, VqcOptions, build_ce_task, train_vqc
from .sim.vqe import TFIM_GROUND_ENERGY_6, VqeOptions, exact_ground_energy, tfim_hamiltonian, train_vqe_many

log = logging.getLogger(__name__)

CACHE_ENV = "GSQAS_CACHE_DIR"
ENERGY_SPAN = 14.0
VQE_CHUNK = 64


@dataclass
class LabeledCircuit:
    circuit: Circuit
    label: float | None
    metric: str
    seed: int
    error: str | None = None

    def to_dict(self) -> dict:
        d = self.circuit.to_dict()
        d.update(label=self.label, metric=self.metric, seed=self.seed)
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: dict) -> LabeledCircuit:
        for key in ("label", "metric", "seed"):
            if key not in d:
                raise ValueError(f"labeled record lacks {key!r}")
        label = None if d["label"] is None else float(d["label"])
        return cls(Circuit.from_dict(d), label, str(d["metric"]), int(d["seed"]), d.get("error"))


def metric_name(task: Task) -> str:
    return "vqe_energy" if task is Task.VQE_TFIM else "test_accuracy"


def circuit_seed(c: Circuit, base_seed: int) -> int:
    """Seed depending only on the circuit structure and the base seed, so labels ignore batching."""
    h = hashlib.sha1(f"{base_seed}:{c.digest()}".encode()).hexdigest()
    return int(h[:8], 16)


def normalized_energy(energy, e0: float = TFIM_GROUND_ENERGY_6, span: float = ENERGY_SPAN) -> np.ndarray:
    """``y = (E - E0) / 14`` clamped into ``[0, 1)``."""
    y = (np.asarray(energy, dtype=float) - e0) / span
    return np.clip(y, 0.0, np.nextafter(1.0, 0.0))


class LabelCache:
    """Append-only JSONL store ``{"key", "label"}``; one process writes it."""

    def __init__(self, directory: str | Path | None = None):
        self.path = None if directory is None else Path(directory) / "labels.jsonl"
        self.values: dict[str, float] = {}
        if self.path is not None and self.path.exists():
            with self.path.open() as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self.values[rec["key"]] = rec["label"]

    @classmethod
    def from_env(cls) -> LabelCache:
        return cls(os.environ.get(CACHE_ENV) or None)

    def get(self, key: str) -> float | None:
        return self.values.get(key)

    def put(self, key: str, value: float) -> None:
        if key in self.values:
            return
        self.values[key] = value
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                fh.write(json.dumps({"key": key, "label": value}) + "\n")


@dataclass
class Labeler:
    """Labels circuits of one preset; results are cached by circuit hash and protocol."""

    preset: TaskPreset
    vqe: VqeOptions = VqeOptions()
    vqc: VqcOptions = VqcOptions()
    seed: int = 0
    ce_per_class: int = 400
    ce_tol: float = 0.01
    ce_seed: int = 0
    workers: int = 1
    cache: LabelCache = field(default_factory=LabelCache)
    _task: CeTask | None = field(default=None, repr=False)

    @property
    def metric(self) -> str:
        return metric_name(self.preset.task)

    def protocol(self) -> dict:
        if self.preset.task is Task.VQE_TFIM:
            return {"metric": self.metric, "vqe": self.vqe.to_dict(), "seed": self.seed}
        return {
            "metric": self.metric,
            "vqc": self.vqc.to_dict(),
            "seed": self.seed,
            "ce": [self.ce_per_class, self.ce_tol, self.ce_seed],
        }

    def cache_key(self, c: Circuit) -> str:
        return hashlib.sha1(json.dumps([self.protocol(), c.structure()], sort_keys=True).encode()).hexdigest()

    def ce_task(self) -> CeTask:
        if self._task is None:
            self._task = build_ce_task(self.preset.n, self.ce_per_class, tol=self.ce_tol, seed=self.ce_seed)
        return self._task

    def label(self, circuits: list[Circuit]) -> list[LabeledCircuit]:
        out: list[LabeledCircuit | None] = [None] * len(circuits)
        todo: dict[str, list[int]] = {}
        for i, c in enumerate(circuits):
            if c.n != self.preset.n:
                out[i] = LabeledCircuit(c, None, self.metric, circuit_seed(c, self.seed), "qubit count differs from preset")
                continue
            key = self.cache_key(c)
            hit = self.cache.get(key)
            if hit is not None:
                out[i] = LabeledCircuit(c, hit, self.metric, circuit_seed(c, self.seed))
            else:
                todo.setdefault(key, []).append(i)  # duplicates are trained once
        keys = list(todo)
        fresh = self._compute([circuits[todo[k][0]] for k in keys])
        for key, (value, err) in zip(keys, fresh):
            if err is None:
                self.cache.put(key, value)
            for i in todo[key]:
                out[i] = LabeledCircuit(circuits[i], value, self.metric, circuit_seed(circuits[i], self.seed), err)
        return out

    def label_one(self, c: Circuit) -> float:
        res = self.label([c])[0]
        if res.error is not None:
            raise RuntimeError(res.error)
        return res.label

    def _compute(self, circuits: list[Circuit]) -> list[tuple[float | None, str | None]]:
        if not circuits:
            return []
        seeds = [circuit_seed(c, self.seed) for c in circuits]
        if self.preset.task is Task.VQE_TFIM:
            chunks = [list(range(s, min(s + VQE_CHUNK, len(circuits)))) for s in range(0, len(circuits), VQE_CHUNK)]
            jobs = [([circuits[i].to_dict() for i in ch], [seeds[i] for i in ch], self.vqe) for ch in chunks]
            fn, init, initargs = _vqe_job, None, ()
        else:
            jobs = [([c.to_dict()], [s], self.vqc) for c, s in zip(circuits, seeds)]
            fn, init = _vqc_job, _vqc_worker_init
            initargs = (self.preset.n, self.ce_per_class, self.ce_tol, self.ce_seed)
        if self.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(self.workers, initializer=init, initargs=initargs) as pool:
                return [r for part in pool.map(fn, jobs) for r in part]
        if self.preset.task is Task.VQC_CE:
            global _WORKER_TASK
            _WORKER_TASK = self.ce_task()
        parts = [fn(job) for job in jobs]
        return [r for part in parts for r in part]


_WORKER_TASK: CeTask | None = None


def _vqc_worker_init(n: int, per_class: int, tol: float, seed: int) -> None:
    global _WORKER_TASK
    _WORKER_TASK = build_ce_task(n, per_class, tol=tol, seed=seed)


def _vqe_job(job) -> list[tuple[float | None, str | None]]:
    dicts, seeds, opts = job
    circuits = [Circuit.from_dict(d) for d in dicts]
    try:
        results = train_vqe_many(circuits, tfim_hamiltonian(circuits[0].n), opts, seeds)
        return [(float(r.energy), None) for r in results]
    except Exception as exc:  # a failing batch is retried circuit by circuit
        if len(circuits) == 1:
            return [(None, f"{type(exc).__name__}: {exc}")]
        return [r for d, s in zip(dicts, seeds) for r in _vqe_job(([d], [s], opts))]


def _vqc_job(job) -> list[tuple[float | None, str | None]]:
    dicts, seeds, opts = job
    try:
        res = train_vqc(Circuit.from_dict(dicts[0]), _WORKER_TASK, opts, seeds[0])
        return [(float(res.test_accuracy), None)]
    except Exception as exc:
        return [(None, f"{type(exc).__name__}: {exc}")]


# ------------------------------------------------------------------ JSONL files


def read_jsonl(path: str | Path) -> list[dict]:
    """Parse a JSONL file; a malformed line raises ``ValueError`` naming its line number."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
    return rows


def read_circuits(path: str | Path) -> list[Circuit]:
    out = []
    for lineno, d in enumerate(read_jsonl(path), start=1):
        try:
            out.append(Circuit.from_dict(d))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad circuit record ({exc})") from None
    return out


def read_labeled(path: str | Path) -> list[LabeledCircuit]:
    out = []
    for lineno, d in enumerate(read_jsonl(path), start=1):
        try:
            out.append(LabeledCircuit.from_dict(d))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad labeled record ({exc})") from None
    return out


def write_circuits(path: str | Path, circuits: list[Circuit]) -> None:
    with open(path, "w") as fh:
        for c in circuits:
            fh.write(c.to_json() + "\n")


def label_file(src: str | Path, dst: str | Path, labeler: Labeler, chunk: int = 64, checkpoint: str | Path | None = None) -> int:
    """Label ``src`` into ``dst`` in chunks; a checkpoint file holds the count of finished lines.

    Re-running after an interruption truncates ``dst`` to the checkpointed prefix and continues,
    so the final file equals an uninterrupted run. Returns the number of unlabeled (failed) records.
    """
    circuits = read_circuits(src)
    dst = Path(dst)
    ckpt = Path(checkpoint) if checkpoint is not None else dst.with_name(dst.name + ".ckpt")
    done = int(json.loads(ckpt.read_text())["done"]) if ckpt.exists() and dst.exists() else 0
    if done:
        keep = dst.read_text().splitlines(keepends=True)[:done]
        dst.write_text("".join(keep))
    else:
        dst.write_text("")
    failed = sum(json.loads(line).get("error") is not None for line in dst.read_text().splitlines())
    for s in range(done, len(circuits), chunk):
        part = labeler.label(circuits[s : s + chunk])
        with dst.open("a") as fh:
            for rec in part:
                fh.write(json.dumps(rec.to_dict(), separators=(",", ":")) + "\n")
                failed += rec.error is not None
        ckpt.write_text(json.dumps({"done": s + len(part)}))
    ckpt.write_text(json.dumps({"done": len(circuits)}))
    return failed


def oracle_energy(n: int) -> float:
    return exact_ground_energy(tfim_hamiltonian(n), n)
