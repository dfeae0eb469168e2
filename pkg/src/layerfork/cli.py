"""Command-line entry points for the full pipeline and the serving loop."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import encoder as enc
from . import fixtures_data, merger, report
from .allocator import load_ladders, select_layers, tradeoff_report
from .checkpoint import read_checkpoint, write_checkpoint
from .distiller import StudentPlan, distill_train
from .errors import DataError, LayerforkError
from .metrics import evaluate_metric
from .service import InferenceServer
from .tasks import TaskSpec, Vocab, batch_encode, build_vocab, load_tsv, synth_task
from .trainer import (SearchRange, TrainConfig, evaluate, finetune_with_search,
                      partial_finetune, run_seeded_trials, search_layer_count)


def _load_job(path):
    """Training job manifest: task + data + encoder + train config."""
    with open(path, encoding="utf-8") as fh:
        job = json.load(fh)
    if "synth" in job["task"]:
        s = job["task"]["synth"]
        spec, train_ds, dev_ds = synth_task(s["kind"], s.get("difficulty", 1),
                                            s.get("seed", 0),
                                            s.get("train_size", 64),
                                            s.get("dev_size", 32))
    else:
        spec = TaskSpec.from_dict(job["task"]["spec"])
        train_ds = load_tsv(job["task"]["train_tsv"], spec, "train")
        dev_ds = load_tsv(job["task"]["dev_tsv"], spec, "dev")
    enc_cfg = job.get("encoder", {})
    if enc_cfg.get("preset") == "full":
        cfg = enc.EncoderConfig()
    else:
        cfg = enc.EncoderConfig.toy(**{k: v for k, v in enc_cfg.items()
                                       if k != "preset"})
    tcfg = TrainConfig(**job.get("train", {}))
    if isinstance(job.get("vocab"), list):
        # explicit word list, so several tasks can share one tokenizer
        vocab = Vocab(job["vocab"])
    else:
        vocab = build_vocab(train_ds, job.get("vocab_size", cfg.vocab_size - 4))
    return job, spec, train_ds, dev_ds, cfg, tcfg, vocab


def _emit(args, payload: dict, text: str):
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


def cmd_train(args):
    job, spec, train_ds, dev_ds, cfg, tcfg, vocab = _load_job(args.manifest)
    base = enc.init_params(cfg, seed=job.get("base_seed", 0))
    trials = job.get("trials", 1)
    if "search" in job:
        lo, hi = job["search"]
        best_l, ckpt, scores = finetune_with_search(
            base, cfg, spec, SearchRange(lo, hi), tcfg, train_ds, dev_ds, vocab,
            n_trials=trials)
        score = scores[best_l]
        extra = {"L": best_l, "scores": {str(k): v for k, v in scores.items()}}
    else:
        L = job["L"]
        ckpt, score = run_seeded_trials(
            lambda seed: partial_finetune(base, cfg, spec, L,
                                          TrainConfig(**{**tcfg.to_dict(), "seed": seed}),
                                          train_ds, dev_ds, vocab),
            n_trials=trials, base_seed=tcfg.seed)
        extra = {"L": L}
    out = job.get("out") or args.out
    if out:
        write_checkpoint(ckpt, out)
    payload = {"task": spec.task_id, "dev_score": score,
               "frozen_depth": ckpt.frozen_depth, "out": out, **extra}
    _emit(args, payload, f"{spec.task_id}: L={payload['L']} f={ckpt.frozen_depth} "
          f"dev={score:.4f}" + (f" -> {out}" if out else ""))
    return 0


def cmd_search_l(args):
    if args.table1:
        scores, default_range = fixtures_data.load_table1()
        if args.table1 not in scores:
            raise DataError(f"unknown fixture task {args.table1!r}")
        table = scores[args.table1]
    else:
        with open(args.scores, encoding="utf-8") as fh:
            table = {int(k): float(v) for k, v in json.load(fh).items()}
        default_range = None
    lo = args.min if args.min is not None else default_range.n_min
    hi = args.max if args.max is not None else default_range.n_max
    best = search_layer_count(table, SearchRange(lo, hi))
    _emit(args, {"L": best, "score": table[best]}, f"L*={best} (dev {table[best]})")
    return 0


def cmd_distill(args):
    job, spec, train_ds, dev_ds, cfg, tcfg, vocab = _load_job(args.manifest)
    teacher = read_checkpoint(args.teacher)
    plan = StudentPlan(teacher, args.n, args.temperature, args.alpha)
    student, score = distill_train(plan, tcfg, train_ds, dev_ds,
                                   teacher.vocab_obj())
    if args.out:
        write_checkpoint(student, args.out)
    _emit(args, {"task": teacher.task.task_id, "n": args.n, "dev_score": score,
                 "out": args.out},
          f"{teacher.task.task_id}: n={args.n} dev={score:.4f}"
          + (f" -> {args.out}" if args.out else ""))
    return 0


def cmd_merge(args):
    ckpts = [read_checkpoint(p) for p in args.ckpts]
    problems = merger.validate_mergeable(ckpts)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    merger.write_merged_manifest(args.ckpts, args.out)
    merged = merger.load_merged(args.out)
    rep = merger.merged_overhead(merged, base_layers=merged.cfg.num_layers)
    _emit(args, {"out": args.out, "tasks": merged.task_ids(),
                 "shared_depth": merged.shared_depth, "layers": rep.layers},
          f"merged {len(ckpts)} tasks, shared depth {merged.shared_depth}, "
          f"overhead {rep} -> {args.out}")
    return 0


def cmd_allocate(args):
    ladders = load_ladders(args.ladders)
    rows = tradeoff_report(ladders, args.c, base_layers=args.base_layers)
    if args.report_dir:
        report.write_report(rows, args.report_dir)
    payload = []
    for row in rows:
        payload.append({"c": row.c,
                        "selections": {t: list(v) for t, v in row.selections.items()},
                        "average": row.average_score,
                        "layers": row.overhead.layers,
                        "overhead": str(row.overhead)})
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for row in rows:
            cells = ", ".join(f"{t}=({f}, {n})" for t, (f, n, _) in
                              sorted(row.selections.items()))
            print(f"c={row.c:g}: {cells}")
            print(f"  average {row.average_score:.1f}, overhead {row.overhead}")
    return 0


def cmd_eval(args):
    ckpt = read_checkpoint(args.ckpt)
    dataset = load_tsv(args.tsv, ckpt.task, "dev")
    score = evaluate(ckpt.store, ckpt.cfg, ckpt.head, ckpt.task, dataset,
                     ckpt.vocab_obj())
    _emit(args, {"task": ckpt.task.task_id, "metric": ckpt.task.metric,
                 "score": score},
          f"{ckpt.task.task_id}: {ckpt.task.metric}={score:.4f}")
    return 0


def _encode_one(vocab, max_len, text, text2):
    from .tasks import Example
    ids, mask, _ = batch_encode([Example(text, text2, 0)], vocab, max_len)
    return ids, mask


def cmd_infer(args):
    if args.merged:
        model = merger.load_merged(args.merged)
        vocab = Vocab(model.vocab)
        ids, mask = _encode_one(vocab, model.cfg.max_seq_len, args.text, args.text2)
        tasks = args.task or model.task_ids()
        counter = enc.LayerCounter()
        outputs = merger.infer(model, ids, mask, tasks, counter)
        payload = {t: [float(v) for v in np.atleast_1d(out[0])]
                   for t, out in outputs.items()}
        extra = {"layers": counter.count}
    else:
        ckpt = read_checkpoint(args.ckpt)
        ids, mask = _encode_one(ckpt.vocab_obj(), ckpt.cfg.max_seq_len,
                                args.text, args.text2)
        out = ckpt.logits(ids, mask)
        payload = {ckpt.task.task_id: [float(v) for v in np.atleast_1d(out[0])]}
        extra = {}
    _emit(args, {"outputs": payload, **extra},
          "\n".join(f"{t}: {vals}" for t, vals in sorted(payload.items())))
    return 0


def cmd_serve(args):
    merged = merger.load_merged(args.merged)
    server = InferenceServer(merged, host=args.host, port=args.port,
                             batch_window_ms=args.window_ms)
    print(f"serving {len(merged.branches)} tasks on "
          f"{server.address[0]}:{server.address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_report_overhead(args):
    with open(args.ladders, encoding="utf-8") as fh:
        data = json.load(fh)
    if "descriptors" in data:
        descs = [tuple(d) for d in data["descriptors"]]
        shared = data.get("shared", True)
        base = data.get("base_layers", 12)
    else:
        ladders = load_ladders(args.ladders)
        if args.c is None:
            raise DataError("ladder input needs --c to pick layer counts")
        descs = [(l.frozen_depth, select_layers(l, args.c)) for l in ladders]
        shared, base = True, args.base_layers
    rep = merger.overhead(descs, shared=shared, base_layers=base)
    _emit(args, {"layers": rep.layers, "percent": rep.percent,
                 "formatted": str(rep)}, str(rep))
    return 0


def cmd_fixtures_check(args):
    results = fixtures_data.fixtures_check()
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        if not ok:
            failed += 1
        print(f"{status} {name}: {detail}")
    print(f"{len(results) - failed}/{len(results)} fixture checks passed")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="layerfork")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common])
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("search-l", parents=[common])
    p.add_argument("--scores")
    p.add_argument("--table1", help="use a bundled sweep fixture column by task id")
    p.add_argument("--min", type=int)
    p.add_argument("--max", type=int)
    p.set_defaults(fn=cmd_search_l)

    p = sub.add_parser("distill", parents=[common])
    p.add_argument("--teacher", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--temperature", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("merge", parents=[common])
    p.add_argument("ckpts", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_merge)

    p = sub.add_parser("allocate", parents=[common])
    p.add_argument("--ladders", required=True)
    p.add_argument("--c", type=float, nargs="+", default=[1.0])
    p.add_argument("--base-layers", type=int, default=12)
    p.add_argument("--report-dir")
    p.set_defaults(fn=cmd_allocate)

    p = sub.add_parser("eval", parents=[common])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--tsv", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", parents=[common])
    p.add_argument("--ckpt")
    p.add_argument("--merged")
    p.add_argument("--task", nargs="*")
    p.add_argument("--text", required=True)
    p.add_argument("--text2")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("serve", parents=[common])
    p.add_argument("--merged", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--window-ms", type=float, default=5.0)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("report-overhead", parents=[common])
    p.add_argument("--ladders", required=True,
                   help="descriptor file or ladder file (the latter needs --c)")
    p.add_argument("--c", type=float)
    p.add_argument("--base-layers", type=int, default=12)
    p.set_defaults(fn=cmd_report_overhead)

    p = sub.add_parser("fixtures-check", parents=[common])
    p.set_defaults(fn=cmd_fixtures_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except LayerforkError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
