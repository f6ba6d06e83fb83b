"""``gsqas`` command line: generate, label, pretrain, train-predictor, run, oracle."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .circuit_ir import Task, generate_circuits, task_preset
from .graph_encoding import encode
from .labeling import LabelCache, Labeler, label_file, metric_name, normalized_energy, read_circuits, read_labeled, write_circuits
from .pipeline import ExperimentConfig, load_vgae, run_experiment, save_vgae
from .predictor import DownstreamConfig, HeadKind, Mode, parse_head, parse_mode, train_downstream
from .sim.classifier import build_ce_task
from .sim.entanglement import concentratable_entanglement
from .sim.vqe import VqeOptions, exact_ground_energy, tfim_hamiltonian
from .vgae import PretrainConfig, pretrain


class CliError(Exception):
    pass


class JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        sys.stderr.write(json.dumps({"error": message, "kind": "usage"}) + "\n")
        sys.exit(2)


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")


def _existing(path: str) -> Path:
    p = Path(path).resolve()
    if not p.exists():
        raise CliError(f"no such file: {path}")
    return p


def cmd_generate(args) -> None:
    if args.count < 0:
        raise CliError("--count must be >= 0")
    preset = task_preset(args.task)
    circuits = generate_circuits(preset, args.count, args.seed)
    write_circuits(args.out, circuits)
    _emit({"written": len(circuits), "out": str(Path(args.out).resolve()), "task": preset.task.value})


def cmd_label(args) -> None:
    preset = task_preset(args.task)
    src = _existing(args.inp)
    for i, c in enumerate(read_circuits(src), start=1):
        if not preset.conforms(c):
            raise CliError(f"{src}:{i}: circuit does not match preset {preset.task.value}")
    labeler = Labeler(
        preset, VqeOptions(restarts=args.restarts), seed=args.seed, workers=args.workers, cache=LabelCache.from_env()
    )
    failed = label_file(src, args.out, labeler, checkpoint=args.checkpoint)
    _emit({"out": str(Path(args.out).resolve()), "failed": failed, "metric": labeler.metric})


def cmd_pretrain(args) -> None:
    preset = task_preset(args.task)
    src = _existing(args.inp)
    circuits = read_circuits(src)
    for i, c in enumerate(circuits, start=1):
        if not preset.conforms(c):
            raise CliError(f"{src}:{i}: circuit does not match preset {preset.task.value}")
    graphs = [encode(c, preset) for c in circuits]
    cfg = PretrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed, kl_weight=args.kl_weight)
    res = pretrain(graphs, preset, cfg)
    save_vgae(res.model, args.out_checkpoint)
    Path(str(args.out_checkpoint) + ".log.json").write_text(json.dumps(res.history))
    _emit({"checkpoint": str(Path(args.out_checkpoint).resolve()), "best_epoch": res.best_epoch, "graphs": len(graphs)})


def cmd_train_predictor(args) -> None:
    preset = task_preset(args.task)
    mode, head = parse_mode(args.mode), parse_head(args.head)
    records = read_labeled(_existing(args.labeled))
    want = metric_name(preset.task)
    records = [r for r in records if r.label is not None]
    if not records:
        raise CliError("no labeled records")
    if any(r.metric != want for r in records):
        raise CliError(f"labeled data metric does not match task {preset.task.value} ({want})")
    graphs = [encode(r.circuit, preset) for r in records]
    raw = np.array([r.label for r in records])
    if head is HeadKind.CLASSIFIER:
        if preset.task is not Task.VQE_TFIM:
            raise CliError("the classifier head is defined for the VQE task only")
        y = (raw < args.good_threshold).astype(float)
    else:
        y = normalized_energy(raw) if preset.task is Task.VQE_TFIM else np.clip(raw, 0.0, 1.0)
    encoder = None
    if mode is not Mode.GQAS:
        if not args.encoder:
            raise CliError(f"mode {mode.value} needs --encoder")
        encoder = load_vgae(_existing(args.encoder), preset).encoder
    model = train_downstream(graphs, y, preset, mode, head, encoder, DownstreamConfig(epochs=args.epochs, seed=args.seed))
    model.save(args.out)
    last = model.history[-1] if model.history else {}
    _emit({"model": str(Path(args.out).resolve()), "mode": mode.value, "head": head.value, "n": len(graphs), **last})


def cmd_run(args) -> None:
    cfg_path = _existing(args.config)
    try:
        doc = json.loads(cfg_path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{cfg_path}: malformed JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise CliError("config must be a JSON object")
    overrides = {k: v for k, v in (("output_dir", args.out_dir), ("workers", args.workers), ("seed", args.seed)) if v is not None}
    cfg = ExperimentConfig.from_dict({**doc, **overrides})
    cfg.output_dir = str(Path(cfg.output_dir or ".").resolve())
    if cfg.encoder_checkpoint:
        cfg.encoder_checkpoint = str(_existing(cfg.encoder_checkpoint))
    report = run_experiment(cfg)
    _emit({"output_dir": cfg.output_dir, "summary": report.summary})


def cmd_oracle(args) -> None:
    preset = task_preset(args.task)
    if preset.task is Task.VQE_TFIM:
        e = exact_ground_energy(tfim_hamiltonian(preset.n), preset.n)
        _emit({"task": preset.task.value, "n": preset.n, "ground_energy": e})
        return
    task = build_ce_task(preset.n, args.per_class, seed=args.seed)
    means = {}
    for label, target in enumerate(task.targets):
        states = np.concatenate([task.train_states[task.train_labels == label], task.test_states[task.test_labels == label]])
        means[str(target)] = float(np.mean(concentratable_entanglement(states)))
    _emit({"task": preset.task.value, "n": preset.n, "per_class": args.per_class, "class_mean_ce": means})


def build_parser() -> argparse.ArgumentParser:
    p = JsonArgumentParser(prog="gsqas", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=JsonArgumentParser)

    g = sub.add_parser("generate", help="sample layerwise circuits to JSONL")
    g.add_argument("--task", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    lb = sub.add_parser("label", help="ground-truth label a circuit JSONL (resumable)")
    lb.add_argument("--task", required=True)
    lb.add_argument("--in", dest="inp", required=True)
    lb.add_argument("--out", required=True)
    lb.add_argument("--workers", type=int, default=1)
    lb.add_argument("--restarts", type=int, default=1)
    lb.add_argument("--seed", type=int, default=0)
    lb.add_argument("--checkpoint", default=None, help="defaults to <out>.ckpt")
    lb.set_defaults(fn=cmd_label)

    pt = sub.add_parser("pretrain", help="pretrain the graph autoencoder on unlabeled circuits")
    pt.add_argument("--task", required=True)
    pt.add_argument("--in", dest="inp", required=True)
    pt.add_argument("--out-checkpoint", required=True)
    pt.add_argument("--epochs", type=int, default=PretrainConfig.epochs)
    pt.add_argument("--batch-size", type=int, default=PretrainConfig.batch_size)
    pt.add_argument("--lr", type=float, default=PretrainConfig.lr)
    pt.add_argument("--kl-weight", type=float, default=None, help="default 1/N")
    pt.add_argument("--seed", type=int, default=0)
    pt.set_defaults(fn=cmd_pretrain)

    tp = sub.add_parser("train-predictor", help="train a regressor or classifier head")
    tp.add_argument("--task", default="VQE_TFIM")
    tp.add_argument("--mode", required=True, help="URL | PF | GQAS")
    tp.add_argument("--head", required=True, help="reg | clf")
    tp.add_argument("--labeled", required=True)
    tp.add_argument("--encoder", default=None)
    tp.add_argument("--out", required=True)
    tp.add_argument("--epochs", type=int, default=DownstreamConfig.epochs)
    tp.add_argument("--good-threshold", type=float, default=-7.55)
    tp.add_argument("--seed", type=int, default=0)
    tp.set_defaults(fn=cmd_train_predictor)

    r = sub.add_parser("run", help="run a full search experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out-dir", default=None)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--seed", type=int, default=None)
    r.set_defaults(fn=cmd_run)

    o = sub.add_parser("oracle", help="exact reference values")
    o.add_argument("--task", required=True)
    o.add_argument("--per-class", type=int, default=50)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(fn=cmd_oracle)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except (CliError, ValueError, KeyError, OSError, RuntimeError) as exc:
        sys.stderr.write(json.dumps({"error": str(exc), "kind": type(exc).__name__}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
