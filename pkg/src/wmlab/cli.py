"""Command-line front end: ``wmlab <command> ...``.

Exit status is 0 on success, 1 when a verification fails and 2 for usage or
input errors.  Output headers record the run seed and parameters but never
the key.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .baselines import GreenRedParams, gumbelmax_detect, gumbelmax_generate, kgw_detect, kgw_generate
from .errors import DomainError
from .evaluation import (AttackConfig, SOURCES, calibrate_mask_rate, roc, substitution_attack, tpr_at_fpr,
                         write_csv, write_roc_csv)
from .lm import NgramModel, read_corpus, sample_sequence, train
from .prg import WatermarkKey, derive_aux_alphabet
from .token_wm import SchemeParams, detect, generate, read_jsonl, write_jsonl
from .uniform_wm import uniform_detect, uniform_generate
from . import verify as verify_mod

SCHEMES = ("optimal", "uniform", "kgw", "gumbelmax")


class UsageError(Exception):
    pass


def _load_key(args) -> WatermarkKey:
    if getattr(args, "key_hex", None):
        return WatermarkKey.from_hex(args.key_hex)
    if getattr(args, "key_file", None):
        raw = Path(args.key_file).read_bytes()
        try:
            return WatermarkKey.from_hex(raw.decode("ascii"))
        except (UnicodeDecodeError, DomainError):
            return WatermarkKey(raw)
    raise UsageError("a key is required: pass --key-hex or --key-file")


def _load_model(path, what="model") -> NgramModel:
    if path is None:
        raise UsageError(f"--{what} is required for this scheme")
    return NgramModel.load(path)


def _add_key(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--key-hex", help="watermark key as hex (16-64 bytes)")
    g.add_argument("--key-file", help="file holding the key as hex or raw bytes")


def _add_scheme(p):
    p.add_argument("--scheme", choices=SCHEMES, default="optimal")
    p.add_argument("--eta", type=float, default=0.2, help="token-level false-alarm budget")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5, help="detection threshold on the score")
    p.add_argument("--n", dest="context_window", type=int, default=1, help="hash window in tokens")
    p.add_argument("--rho", type=float, default=0.5, help="green-list fraction (kgw)")
    p.add_argument("--delta", type=float, default=2.0, help="green-list logit boost (kgw)")
    p.add_argument("--per-sequence-keys", action="store_true",
                   help="sequence i uses a key derived from the master key and i")


def _header(args, **extra) -> dict:
    out = {"version": __version__, "command": args.command}
    for k in ("scheme", "eta", "lam", "context_window", "rho", "delta", "T", "num", "seed",
              "prompt_len", "mask_rate", "source", "target_replaced", "per_sequence_keys"):
        if hasattr(args, k) and getattr(args, k) is not None:
            out[k] = getattr(args, k)
    out.update(extra)
    return out


def cmd_train_lm(args) -> int:
    corpus = read_corpus(args.corpus)
    model = train(corpus, args.order, args.smoothing, vocab_size=args.vocab_size)
    model.save(args.out)
    print(f"trained order-{model.order} model, vocabulary {model.vocab_size}, "
          f"{len(model.counts)} contexts -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    key = _load_key(args)
    model = _load_model(args.model)
    ss = np.random.SeedSequence(args.seed)
    records = []
    params = SchemeParams(eta=args.eta, lam=args.lam, context_window=args.context_window, T=args.T)
    for child, seq_key in zip(ss.spawn(args.num), _keys(args, key, args.num)):
        aux = derive_aux_alphabet(seq_key, model.vocab_size)
        s1, s2 = (int(v) for v in child.generate_state(2))
        prompt = sample_sequence(model, [], args.prompt_len, s1) if args.prompt_len else []
        if args.scheme == "optimal":
            tr = generate(model, prompt, seq_key, params, seed=s2, aux=aux)
            rec = {"tokens": tr.tokens, "redundant": [int(f) for f in tr.redundant_flags]}
        elif args.scheme == "uniform":
            tr = uniform_generate(model, prompt, seq_key, args.T, args.context_window, seed=s2, aux=aux)
            rec = {"tokens": tr.tokens}
        elif args.scheme == "kgw":
            gr = GreenRedParams(args.rho, args.delta, args.context_window)
            rec = {"tokens": kgw_generate(model, prompt, seq_key, gr, args.T, seed=s2)}
        else:
            rec = {"tokens": gumbelmax_generate(model, prompt, seq_key, args.context_window, args.T)}
        if prompt:
            rec["prompt"] = prompt
        records.append(rec)
    write_jsonl(args.out, records, header=_header(args))
    print(f"wrote {len(records)} {args.scheme} sequences -> {args.out}")
    return 0


def _keys(args, key: WatermarkKey, num: int) -> List[WatermarkKey]:
    if getattr(args, "per_sequence_keys", False):
        return [key.child(i) for i in range(num)]
    return [key] * num


def _score_texts(args, texts: List[List[int]], key: WatermarkKey):
    """Detection reports for every text under the selected scheme."""
    keys = _keys(args, key, len(texts))
    if args.scheme == "optimal":
        surrogate = _load_model(args.surrogate, "surrogate")
        params = SchemeParams(eta=args.eta, lam=args.lam, context_window=args.context_window, T=1)
        return [detect(surrogate, t, k, params) for t, k in zip(texts, keys)]
    m = args.vocab_size
    if m is None and args.surrogate:
        m = NgramModel.load(args.surrogate).vocab_size
    if m is None:
        raise UsageError("--vocab-size (or --surrogate) is required for this scheme")
    if args.scheme == "uniform":
        return [uniform_detect(t, k, args.lam, m, args.context_window) for t, k in zip(texts, keys)]
    if args.scheme == "kgw":
        gr = GreenRedParams(args.rho, args.delta, args.context_window)
        return [kgw_detect(t, k, gr, m, args.lam) for t, k in zip(texts, keys)]
    return [gumbelmax_detect(t, k, args.context_window, m, args.lam) for t, k in zip(texts, keys)]


def _texts(path) -> List[List[int]]:
    recs = read_jsonl(path)
    if not recs:
        raise DomainError(f"{path} holds no sequences")
    return [list(map(int, r["tokens"])) for r in recs]


def cmd_detect(args) -> int:
    key = _load_key(args)
    texts = _texts(args.input)
    reports = _score_texts(args, texts, key)
    recs = [{"tokens": t, "score": r.score, "matches": [int(v) for v in r.per_token_match],
             "decision": r.decision, "redundant_count": r.redundant_count}
            for t, r in zip(texts, reports)]
    write_jsonl(args.out, recs, header=_header(args))
    flagged = sum(r.watermarked for r in reports)
    print(f"{flagged}/{len(reports)} flagged as watermarked; mean score "
          f"{np.mean([r.score for r in reports]):.4f} -> {args.out}")
    return 0


def cmd_attack(args) -> int:
    texts = _texts(args.input)
    source_model = NgramModel.load(args.source_model) if args.source_model else None
    rate = args.mask_rate
    if args.target_replaced is not None:
        rate = calibrate_mask_rate(texts[: args.calibration_size], args.source, source_model,
                                   args.target_replaced, seed=args.seed)
    ss = np.random.SeedSequence(args.seed)
    recs, rows = [], []
    for i, (t, child) in enumerate(zip(texts, ss.spawn(len(texts)))):
        cfg = AttackConfig(rate, args.source, int(child.generate_state(1)[0]))
        attacked, frac = substitution_attack(t, cfg, source_model)
        recs.append({"tokens": attacked, "replaced_fraction": frac})
        rows.append({"index": i, "length": len(t), "replaced_fraction": frac})
    write_jsonl(args.out, recs, header=_header(args, mask_rate=rate))
    mean = float(np.mean([r["replaced_fraction"] for r in rows]))
    if args.report:
        rows.append({"index": "mean", "length": "", "replaced_fraction": mean})
        write_csv(args.report, rows, ["index", "length", "replaced_fraction"])
    print(f"mask rate {rate:.4f}; mean replaced fraction {mean:.4f} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    key = _load_key(args)
    wm = _texts(args.watermarked)
    hu = _texts(args.human)
    sw = [r.score for r in _score_texts(args, wm, key)]
    sh = [r.score for r in _score_texts(args, hu, key)]
    curve = roc(sw, sh)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_roc_csv(out / "roc.csv", curve)
    summary = {"auc": curve.auc, "tpr_at_1pct_fpr": tpr_at_fpr(curve, 0.01),
               "tpr_at_10pct_fpr": tpr_at_fpr(curve, 0.10),
               "num_watermarked": len(sw), "num_human": len(sh), "header": _header(args)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"auc {curve.auc:.4f}  tpr@1% {summary['tpr_at_1pct_fpr']:.4f}  "
          f"tpr@10% {summary['tpr_at_10pct_fpr']:.4f} -> {out}")
    return 0


VERIFY_FIELDS = {
    "theorem1": ["q", "alpha", "eps", "closed_form", "sweep_min", "delta", "matching_detector_shape", "pass"],
    "scheme": ["m", "alpha", "eps", "type1", "type2", "closed_form", "delta", "pass"],
    "frobust": ["m", "K", "alpha", "eps", "robust_type1", "robust_type2", "robust_min", "delta", "pass"],
    "distortion": ["m", "eta", "max_deviation", "pass"],
    "type1": ["count", "lambda", "theoretical", "empirical", "n", "pass"],
}


def cmd_verify(args) -> int:
    if args.kind == "theorem1":
        vocab = args.vocab or 2
        v = verify_mod.verify_universal_minimum(vocab, args.aux or vocab + 1, args.grid, args.seed)
    elif args.kind == "scheme":
        v = verify_mod.verify_scheme(args.trials, args.seed)
    elif args.kind == "frobust":
        v = verify_mod.verify_frobust(args.trials, args.seed)
    elif args.kind == "distortion":
        v = verify_mod.verify_distortion(args.trials, args.seed)
    else:
        v = verify_mod.verify_type1(args.eta, args.T, args.n, vocab=args.vocab or 16, seed=args.seed)
    if args.out:
        write_csv(args.out, v.rows, VERIFY_FIELDS[v.kind])
    failed = [r for r in v.rows if not r["pass"]]
    worst = max((r.get("delta", r.get("max_deviation", 0.0)) for r in v.rows), default=0.0)
    print(json.dumps({"kind": v.kind, "cases": len(v.rows), "failed": len(failed),
                      "max_delta": worst, "passed": v.passed}, sort_keys=True))
    return 0 if v.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wmlab", description="Token-sequence watermarking laboratory.")
    p.add_argument("--version", action="version", version=f"wmlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train-lm", help="train an n-gram model from a corpus")
    t.add_argument("--corpus", required=True, help="one whitespace-separated token sequence per line")
    t.add_argument("--order", type=int, default=1)
    t.add_argument("--smoothing", type=float, default=1.0)
    t.add_argument("--vocab-size", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_lm)

    g = sub.add_parser("generate", help="generate watermarked sequences")
    g.add_argument("--model", required=True)
    _add_key(g)
    _add_scheme(g)
    g.add_argument("--T", type=int, default=200)
    g.add_argument("--num", type=int, default=1)
    g.add_argument("--prompt-len", type=int, default=0, help="sample a prompt of this length per sequence")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", help="score sequences for a watermark")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--surrogate", help="model used to rebuild auxiliary symbols (optimal scheme)")
    d.add_argument("--vocab-size", type=int)
    _add_key(d)
    _add_scheme(d)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_detect)

    a = sub.add_parser("attack", help="random token substitution")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--mask-rate", type=float, default=0.5)
    a.add_argument("--source", choices=SOURCES, default="contextual-ngram")
    a.add_argument("--source-model")
    a.add_argument("--target-replaced", type=float, help="tune the mask rate to this replaced fraction")
    a.add_argument("--calibration-size", type=int, default=100)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--report", help="attack_report.csv path")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_attack)

    e = sub.add_parser("eval", help="ROC analysis of watermarked vs human sequences")
    e.add_argument("--watermarked", required=True)
    e.add_argument("--human", required=True)
    e.add_argument("--surrogate")
    e.add_argument("--vocab-size", type=int)
    _add_key(e)
    _add_scheme(e)
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="check theoretical guarantees numerically")
    v.add_argument("kind", choices=sorted(VERIFY_FIELDS))
    v.add_argument("--vocab", type=int, help="alphabet size (theorem1: 2, type1: 16)")
    v.add_argument("--aux", type=int)
    v.add_argument("--grid", type=int, default=20)
    v.add_argument("--trials", type=int, default=200)
    v.add_argument("--eta", type=float, default=0.1)
    v.add_argument("--T", type=int, default=50)
    v.add_argument("--n", type=int, default=8000, help="number of sequences (type1)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="CSV report path")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wmlab {args.command}: {exc}", file=sys.stderr)
        return 2
    except (DomainError, OSError, ValueError) as exc:
        print(f"wmlab {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
