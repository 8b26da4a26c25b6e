"""Command-line entry point.

Subcommands: synth, train, ll, score, eval, probe, bench. Every run writes
run_config.json (the resolved arguments plus the toolkit version) into the
output directory so results are reproducible from the echoed config alone.
Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import resource
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .imaging import Dataset, SyntheticSpec, generate_synthetic, load_dataset, save_dataset, split
from .llcache import CacheHeader, CacheRecord, read_cache, write_cache
from .metrics import (
    METHODS,
    CacheSource,
    EvalGridConfig,
    IdCase,
    ModelSource,
    OodCase,
    eval_grid,
    write_reports,
)
from .scoring import conditional_score, fit_cutoff, lr_score, passed
from .transforms import FAMILIES, SAMPLED_FAMILIES, apply_batch, enumerate_family, family_with_identity


class _UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{message}\n{self.format_usage()}")


def _parse_shape(text: str) -> tuple[int, int, int]:
    try:
        h, w, c = (int(p) for p in text.lower().split("x"))
        return (h, w, c)
    except Exception as exc:
        raise _UsageError(f"bad shape {text!r}, expected HxWxC") from exc


def _parse_taps(text: str):
    if text == "none":
        return ()
    if text == "default":
        return None
    try:
        return tuple(tuple(int(v) for v in pair.split(",")) for pair in text.split(";"))
    except Exception as exc:
        raise _UsageError(f"bad tap list {text!r}, expected 'dr,dc;dr,dc' or none|default") from exc


def _echo_config(out_dir: Path, subcommand: str, params: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"version": __version__, "subcommand": subcommand, "params": params}
    (out_dir / "run_config.json").write_text(json.dumps(payload, indent=2, sort_keys=True,
                                                        default=str) + "\n", encoding="utf-8")


def _build_parser() -> _Parser:
    parser = _Parser(prog="oodkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"oodkit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--kind", required=True,
                   choices=("noise", "constant", "colorseq", "oriented-gradient", "sprite-grid"))
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--shape", default="32x32x1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--orientation", choices=("vertical", "horizontal"), default=None)
    p.add_argument("--enumerate-levels", action="store_true")
    p.add_argument("--name", default=None, help="dataset id override")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the built-in density model")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--radius", type=int, default=4)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--mix", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-positional", action="store_true")
    p.add_argument("--lr-taps", default="default", help="'dr,dc;dr,dc', 'none' or 'default'")
    p.add_argument("--lr-unit-fraction", type=float, default=0.0)
    p.add_argument("--mutate", type=float, default=None,
                   help="train a background model on data mutated at this rate")
    p.add_argument("--shape", default=None, help="target HxWxC when --data is an image directory")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ll", help="evaluate log-likelihoods into an llcache file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--family", default="identity", choices=("identity",) + FAMILIES)
    p.add_argument("--family-seed", type=int, default=0)
    p.add_argument("--model-id", default=None)
    p.add_argument("--dataset-id", default=None)
    p.add_argument("--shape", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("score", help="score one cache against a training cache")
    p.add_argument("--cache", required=True)
    p.add_argument("--train-cache", required=True)
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--family-seed", type=int, default=0)
    p.add_argument("--cutoff", default="mad3", choices=("mad3", "percentile"))
    p.add_argument("--tail-mass", type=float, default=0.005)
    p.add_argument("--no-conditional", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="run the evaluation grid")
    p.add_argument("--id", action="append", required=True, metavar="SPEC",
                   help="key=value pairs: name=,test=|cache=,train=|train-cache=,"
                        "model=,background=|background-cache=")
    p.add_argument("--ood", action="append", required=True, metavar="SPEC",
                   help="key=value pairs: name=,test=|cache=[,background-cache=]")
    p.add_argument("--model", default=None, help="default model checkpoint for --id specs")
    p.add_argument("--train-data", default=None, help="default training dataset for --id specs")
    p.add_argument("--background-model", default=None)
    p.add_argument("--methods", default="ll,stir")
    p.add_argument("--family-seed", type=int, default=0)
    p.add_argument("--cutoff", default="mad3", choices=("mad3", "percentile"))
    p.add_argument("--tail-mass", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-eval", type=int, default=5000)
    p.add_argument("--no-conditional", action="store_true")
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("--shape", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("probe", help="diagnostic probes")
    p.add_argument("--probe", required=True, choices=("degradation", "complexity-ll", "ablation"))
    p.add_argument("--model", required=True)
    p.add_argument("--data", action="append", default=None)
    p.add_argument("--id-data", default=None)
    p.add_argument("--ood-data", default=None)
    p.add_argument("--patch", type=int, default=3)
    p.add_argument("--n-sites", type=int, default=64)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--codec", default="png", choices=("png", "deflate-raw"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="time per-sample scoring")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--family", default="stir", choices=FAMILIES)
    p.add_argument("--family-seed", type=int, default=0)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--shape", default=None)
    p.add_argument("--out", required=True)
    return parser


def _load(path, shape_text, split_name=None) -> Dataset:
    shape = _parse_shape(shape_text) if shape_text else None
    return load_dataset(path, shape=shape, split=split_name)


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(kind=args.kind, count=args.count, seed=args.seed,
                         shape=_parse_shape(args.shape), seq_len=args.seq_len,
                         orientation=args.orientation,
                         enumerate_levels=args.enumerate_levels)
    ds = generate_synthetic(spec)
    if args.name:
        ds.id = args.name
    out = Path(args.out)
    save_dataset(ds, out)
    _echo_config(out, "synth", {k: getattr(args, k) for k in
                                ("kind", "count", "shape", "seed", "seq_len",
                                 "orientation", "enumerate_levels", "name")})
    print(f"wrote {len(ds)} {args.kind} images to {out}")
    return 0


def _cmd_train(args) -> int:
    from .density import ModelConfig, mutate_dataset, save_checkpoint, train

    data = _load(args.data, args.shape, "train")
    if args.mutate is not None:
        data = mutate_dataset(data, args.mutate, args.seed + 9)
    train_set, val_set = split(data, args.val_fraction, args.seed)
    config = ModelConfig(
        context_radius=args.radius,
        long_range_taps=_parse_taps(args.lr_taps),
        positional_features=not args.no_positional,
        hidden_width=args.hidden,
        num_mix=args.mix,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        long_range_unit_fraction=args.lr_unit_fraction,
    )
    state = train(config, train_set, val_set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state, out / "model.npz")
    (out / "history.json").write_text(json.dumps(state.history, indent=2) + "\n",
                                      encoding="utf-8")
    _echo_config(out, "train", {k: getattr(args, k) for k in
                                ("data", "val_fraction", "epochs", "radius", "hidden",
                                 "mix", "lr", "batch_size", "seed", "no_positional",
                                 "lr_taps", "lr_unit_fraction", "mutate")})
    best = min(h["val_nll"] for h in state.history)
    print(f"trained {config.epochs} epochs; best val nll/subpixel {best:.4f}; "
          f"checkpoint at {out / 'model.npz'}")
    return 0


def _families_for(name: str, seed: int):
    if name == "identity":
        return None
    return enumerate_family(name, seed if name in SAMPLED_FAMILIES else None)


def _cmd_ll(args) -> int:
    from .density import load_checkpoint, log_likelihood_batch

    state = load_checkpoint(args.model)
    data = _load(args.data, args.shape)
    fam = _families_for(args.family, args.family_seed)
    tids = ["identity"] if fam is None else [t.canonical_id for t in family_with_identity(fam)]
    header = CacheHeader(model_id=args.model_id or Path(args.model).stem,
                         dataset_id=args.dataset_id or data.id,
                         transform_ids=tuple(tids))
    records = []
    stack = data.stack()
    identity_lls = log_likelihood_batch(state, stack)
    for i, ll in enumerate(identity_lls):
        records.append(CacheRecord(data.sample_id(i), "identity", float(ll)))
    if fam is not None:
        for tid in fam:
            lls = log_likelihood_batch(state, apply_batch(tid, stack))
            records.extend(CacheRecord(data.sample_id(i), tid.canonical_id, float(v))
                           for i, v in enumerate(lls))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache_path = out / "cache.ndjson"
    write_cache(header, records, cache_path)
    _echo_config(out, "ll", {k: getattr(args, k) for k in
                             ("model", "data", "family", "family_seed", "model_id",
                              "dataset_id")})
    print(f"wrote {len(records)} records ({len(tids)} transforms x {len(data)} samples) "
          f"to {cache_path}")
    return 0


def _cmd_score(args) -> int:
    fam = enumerate_family(args.family,
                           args.family_seed if args.family in SAMPLED_FAMILIES else None)
    train_header, train_records = read_cache(args.train_cache)
    train_lls = [r.loglik for r in train_records if r.transform_id == "identity"]
    cutoff = fit_cutoff(train_lls, args.cutoff, args.tail_mass)
    header, records = read_cache(args.cache)
    from .llcache import join

    table = join([(header, records)], fam)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for sample_id in sorted(table):
        ll_map = table[sample_id]
        agg = lr_score(ll_map, fam)
        score = (conditional_score(ll_map["identity"], agg, cutoff)
                 if not args.no_conditional else passed(agg))
        rows.append({"sample_id": sample_id, "identity_ll": ll_map["identity"],
                     "lr_score": agg, "tier": score.tier.name.lower(),
                     "score": score.value})
    import csv as _csv

    score_path = out / "scores.csv"
    with open(score_path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    _echo_config(out, "score", {k: getattr(args, k) for k in
                                ("cache", "train_cache", "family", "family_seed",
                                 "cutoff", "tail_mass", "no_conditional")})
    print(f"scored {len(rows)} samples (cutoff tau={cutoff.tau:.3f}) into {score_path}")
    return 0


def _parse_spec(text: str, allowed: set[str]) -> dict:
    spec = {}
    for part in text.split(","):
        if "=" not in part:
            raise _UsageError(f"bad spec fragment {part!r}; expected key=value")
        key, value = part.split("=", 1)
        if key not in allowed:
            raise _UsageError(f"unknown spec key {key!r}; allowed: {sorted(allowed)}")
        spec[key] = value
    if "name" not in spec:
        raise _UsageError(f"spec {text!r} needs a name=")
    return spec


def _cmd_eval(args) -> int:
    from .density import load_checkpoint, log_likelihood_batch

    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise _UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    model_cache: dict[str, object] = {}

    def model_for(path):
        if path not in model_cache:
            model_cache[path] = load_checkpoint(path)
        return model_cache[path]

    id_cases = []
    id_keys = {"name", "test", "cache", "train", "train-cache", "model",
               "background", "background-cache"}
    for text in args.id:
        spec = _parse_spec(text, id_keys)
        name = spec["name"]
        if "cache" in spec:
            source = CacheSource([read_cache(spec["cache"])])
            if "train-cache" not in spec:
                raise _UsageError(f"id {name!r}: cache mode needs train-cache=")
            _, train_records = read_cache(spec["train-cache"])
            train_lls = np.array([r.loglik for r in train_records
                                  if r.transform_id == "identity"])
            background = (CacheSource([read_cache(spec["background-cache"])])
                          if "background-cache" in spec else None)
        else:
            model_path = spec.get("model", args.model)
            train_path = spec.get("train", args.train_data)
            if not model_path or not train_path or "test" not in spec:
                raise _UsageError(f"id {name!r}: model mode needs test=, model=, train=")
            state = model_for(model_path)
            source = ModelSource(state, _load(spec["test"], args.shape))
            train_lls = log_likelihood_batch(state, _load(train_path, args.shape))
            bg_path = spec.get("background", args.background_model)
            background = (ModelSource(model_for(bg_path), source.dataset)
                          if bg_path else None)
        id_cases.append(IdCase(name=name, source=source, train_lls=train_lls,
                               background=background))

    ood_cases = []
    ood_keys = {"name", "test", "cache", "background-cache"}
    for text in args.ood:
        spec = _parse_spec(text, ood_keys)
        if "cache" in spec:
            source = CacheSource([read_cache(spec["cache"])])
            background = (CacheSource([read_cache(spec["background-cache"])])
                          if "background-cache" in spec else None)
        else:
            if "test" not in spec:
                raise _UsageError(f"ood {spec['name']!r}: needs test= or cache=")
            if not id_cases or not isinstance(id_cases[0].source, ModelSource):
                raise _UsageError("dataset-mode --ood requires a model-mode --id")
            source = ModelSource(id_cases[0].source.state, _load(spec["test"], args.shape))
            background = None
        ood_cases.append(OodCase(name=spec["name"], source=source, background=background))

    config = EvalGridConfig(
        id_cases=id_cases, ood_cases=ood_cases, methods=methods,
        family_seed=args.family_seed, cutoff_method=args.cutoff,
        tail_mass=args.tail_mass, conditional=not args.no_conditional,
        n_eval=args.n_eval, seed=args.seed,
    )
    results = eval_grid(config)
    out = Path(args.out)
    paths = write_reports(results, out, seed=args.seed, svg=not args.no_svg)
    _echo_config(out, "eval", {k: getattr(args, k) for k in
                               ("id", "ood", "model", "train_data", "background_model",
                                "methods", "family_seed", "cutoff", "tail_mass", "seed",
                                "n_eval", "no_conditional")})
    for r in results:
        print(f"{r.id_dataset} vs {r.ood_dataset} [{r.method}]: "
              f"auroc={r.auroc:.4f} auprc={r.auprc:.4f} fpr@{r.tpr_target:.0%}tpr={r.fpr_at_tpr:.4f}")
    print(f"reports in {paths['csv'].parent}")
    return 0


def _cmd_probe(args) -> int:
    from .density import load_checkpoint
    from .probes import ablation_delta, complexity_vs_ll_table, degradation_probe, write_table

    state = load_checkpoint(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo_keys = ("probe", "model", "data", "id_data", "ood_data", "patch",
                 "n_sites", "exhaustive", "codec", "seed")
    if args.probe == "degradation":
        if not args.data:
            raise _UsageError("probe degradation needs --data")
        ds = _load(args.data[0], args.shape)
        n_sites = None if args.exhaustive else args.n_sites
        result = degradation_probe(state, ds, args.patch, n_sites, args.seed)
        rows = [{"dataset": ds.id, "sample_id": ds.sample_id(i), "degradation_pct": v}
                for i, v in enumerate(result.degradation_pct)]
        write_table(rows, out / "degradation.csv")
        summary = {"q25": result.q25, "median": result.median, "q75": result.q75}
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        print(f"degradation%: q25={result.q25:.3f} median={result.median:.3f} "
              f"q75={result.q75:.3f}")
    elif args.probe == "complexity-ll":
        if not args.data:
            raise _UsageError("probe complexity-ll needs --data (repeatable)")
        datasets = [_load(p, args.shape) for p in args.data]
        rows = complexity_vs_ll_table(state, datasets, args.codec)
        write_table(rows, out / "complexity_ll.csv")
        print(f"wrote {len(rows)} rows to {out / 'complexity_ll.csv'}")
    else:
        if not args.id_data or not args.ood_data:
            raise _UsageError("probe ablation needs --id-data and --ood-data")
        deltas = ablation_delta(state, _load(args.id_data, args.shape),
                                _load(args.ood_data, args.shape))
        (out / "ablation.json").write_text(json.dumps(deltas, indent=2) + "\n",
                                           encoding="utf-8")
        print(json.dumps(deltas))
    _echo_config(out, "probe", {k: getattr(args, k) for k in echo_keys})
    return 0


def _cmd_bench(args) -> int:
    from .density import load_checkpoint, log_likelihood_batch

    state = load_checkpoint(args.model)
    data = _load(args.data, args.shape)
    n = min(args.n, len(data))
    stack = data.stack()[:n]
    fam = enumerate_family(args.family,
                           args.family_seed if args.family in SAMPLED_FAMILIES else None)
    start = time.perf_counter()
    identity = log_likelihood_batch(state, stack)
    scores = np.zeros(n)
    for tid in fam:
        scores += identity - log_likelihood_batch(state, apply_batch(tid, stack))
    elapsed = time.perf_counter() - start
    peak_mib = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
    report = {
        "family": args.family,
        "n_samples": int(n),
        "ms_per_sample": 1000.0 * elapsed / n,
        "peak_mem_mib": peak_mib,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    _echo_config(out, "bench", {k: getattr(args, k) for k in
                                ("model", "data", "family", "family_seed", "n")})
    print(f"{args.family}: {report['ms_per_sample']:.2f} ms/sample over {n} samples; "
          f"peak memory {peak_mib:.1f} MiB")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "ll": _cmd_ll,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "probe": _cmd_probe,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.subcommand](args)
    except _UsageError as exc:
        print(f"oodkit: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"oodkit: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"oodkit: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
