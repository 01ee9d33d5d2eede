"""Command-line front door.

Subcommands compose the library into reproducible pipelines:

    simulate  config + seed        -> corpus directory
    extract   corpus utterance(s)  -> vibration traces
    align     corpus + vibrations  -> paired Mel segments
    train     segments             -> model checkpoint
    score     model + segments     -> per-window coherence scores
    tamper    corpus + config      -> tampered utterance directories
    bench     model + corpus       -> report.json / roc.csv / scores.csv
    report    report.json          -> human-readable summary

Every run writes a run_manifest.json next to its outputs. Exit codes:
0 success, 1 runtime failure, 2 usage/config error, 3 modality absence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
import typing
from pathlib import Path

import numpy as np

from . import __version__, bench, coherence_net, corpus, pipeline, synth
from .errors import ConfigSchemaError, MmvoiceError, NoSpeechError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_MODALITY_ABSENT = 3


# ---------------------------------------------------------------------------
# Strict config loading
# ---------------------------------------------------------------------------

def _build_dataclass(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigSchemaError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigSchemaError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = typing.get_type_hints(cls).get(name, fields[name].type)
        kwargs[name] = _coerce(ftype, value, f"{where}.{name}")
    try:
        obj = cls(**kwargs)
    except TypeError as e:
        raise ConfigSchemaError(f"{where}: {e}")
    return obj


def _coerce(ftype, value, where: str):
    origin = typing.get_origin(ftype)
    if dataclasses.is_dataclass(ftype):
        return _build_dataclass(ftype, value, where)
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigSchemaError(f"{where}: expected an array")
        args = typing.get_args(ftype)
        if origin is tuple and len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, where) for v in value)
        if origin is tuple and args:
            if len(value) != len(args):
                raise ConfigSchemaError(f"{where}: expected {len(args)} entries")
            return tuple(_coerce(a, v, where) for a, v in zip(args, value))
        inner = args[0] if args else float
        out = [_coerce(inner, v, where) for v in value]
        return tuple(out) if origin is tuple else out
    if ftype is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if ftype is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigSchemaError(f"{where}: expected an integer")
        return value
    if ftype is bool:
        if not isinstance(value, bool):
            raise ConfigSchemaError(f"{where}: expected a boolean")
        return value
    if ftype is str:
        if not isinstance(value, str):
            raise ConfigSchemaError(f"{where}: expected a string")
        return value
    # optional / union types: accept as-is for plain JSON scalars
    return value


def load_config(path: str | None, cls, where: str):
    if path is None:
        return cls()
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigSchemaError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigSchemaError(f"{path}: invalid JSON ({e})")
    return _build_dataclass(cls, data, where)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                   inputs: list[str], outputs: list[str], started: float):
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": getattr(args, "config", None),
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "inputs": inputs,
        "outputs": outputs,
        "wall_time_s": time.time() - started,
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True))


def _set_threads(args):
    n = int(os.environ.get("MMVOICE_THREADS", getattr(args, "threads", 1) or 1))
    try:
        import torch
        torch.set_num_threads(n)
    except ImportError:
        pass


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = time.time()
    spec = load_config(args.config, synth.DatasetSpec, "dataset")
    utts = synth.make_dataset(spec, args.seed)
    out = Path(args.out)
    written = []
    for utt in utts:
        written.append(str(corpus.write_utterance(out, utt)))
    write_manifest(out, "simulate", args, [args.config or "<defaults>"], written,
                   started)
    print(f"wrote {len(written)} utterances to {out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    started = time.time()
    src = Path(args.input)
    dirs = [src] if (src / "meta.json").exists() else corpus.list_utterances(src)
    if not dirs:
        raise MmvoiceError(f"no utterances under {src}")
    out = Path(args.out)
    any_absent = False
    outputs = []
    pcfg = pipeline.PipelineConfig()
    for d in dirs:
        utt = corpus.read_utterance(d)
        res = pipeline.extraction_of(utt, pcfg)
        outputs.append(str(corpus.write_extraction(out / d.name, res)))
        if res.modality_absent:
            any_absent = True
            print(f"{d.name}: modality absent (confidence "
                  f"{res.confidence:.3f})", file=sys.stderr)
    write_manifest(out, "extract", args, [str(src)], outputs, started)
    return EXIT_MODALITY_ABSENT if any_absent else EXIT_OK


def cmd_align(args) -> int:
    started = time.time()
    corpus_dir = Path(args.corpus)
    vib_dir = Path(args.vib)
    out = Path(args.out)
    outputs = []
    pcfg = pipeline.PipelineConfig()
    n_pairs = 0
    for d in corpus.list_utterances(corpus_dir):
        utt = corpus.read_utterance(d, load_capture=False)
        res = corpus.read_extraction(vib_dir / d.name)
        up = pipeline.pairs_from_parts(utt.audio, res, pcfg, utterance_id=d.name)
        outputs.append(str(corpus.write_segments(out / d.name, up.pairs)))
        n_pairs += len(up.pairs)
    write_manifest(out, "align", args, [str(corpus_dir), str(vib_dir)],
                   outputs, started)
    print(f"aligned {n_pairs} segment pairs")
    return EXIT_OK


def _load_all_segments(segs_dir: Path):
    pairs = []
    for d in sorted(p for p in segs_dir.iterdir() if (p / "segs.json").exists()):
        pairs.extend(corpus.read_segments(d))
    return pairs


def cmd_train(args) -> int:
    started = time.time()
    _set_threads(args)
    tcfg = load_config(args.config, coherence_net.TrainConfig, "train")
    if args.seed is not None:
        tcfg.seed = args.seed
    pairs = _load_all_segments(Path(args.segs))
    if not pairs:
        raise MmvoiceError("no segment pairs to train on")
    a, m = coherence_net.pairs_to_tensors(pairs)
    model = coherence_net.CoherenceNet(coherence_net.ModelConfig(), seed=tcfg.seed)
    result = coherence_net.train_model(model, a, m, tcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    coherence_net.save_model(model, out / "model.bin",
                             extra={"final_loss": result.final_loss})
    write_manifest(out, "train", args, [str(args.segs)],
                   [str(out / "model.bin"), str(out / "model.json")], started)
    print(f"trained {tcfg.steps} steps on {len(pairs)} pairs; "
          f"final loss {result.final_loss:.4f}")
    return EXIT_OK


def cmd_score(args) -> int:
    _set_threads(args)
    model, _ = coherence_net.load_model(Path(args.model))
    coherence_net.require_trained(model)
    pairs = corpus.read_segments(Path(args.segs))
    if not pairs:
        print("no segments to score", file=sys.stderr)
        return EXIT_RUNTIME
    a, m = coherence_net.pairs_to_tensors(pairs)
    scores = coherence_net.score_batch(a, m, model)
    for p, s in zip(pairs, scores):
        print(f"{p.utterance_id}\t{p.seg_index}\t{s:.6f}")
    return EXIT_OK


def cmd_tamper(args) -> int:
    started = time.time()
    utts = [corpus.read_utterance(d) for d in corpus.list_utterances(Path(args.corpus))]
    if not utts:
        raise MmvoiceError(f"no utterances under {args.corpus}")
    rng = np.random.default_rng(args.seed)
    kind = args.kind
    out = Path(args.out)
    outputs = []
    made = 0
    for utt in utts:
        if made >= args.count:
            break
        try:
            spec = bench._draw_spec(kind, utt, utts, rng)
            tampered = bench.apply_tamper(utt, spec, utts,
                                          replay_seed=int(rng.integers(2**31)))
        except MmvoiceError as e:
            print(f"{utt.utt_id}: skipped ({e})", file=sys.stderr)
            continue
        tampered.utt_id = f"{utt.utt_id}_{kind}"
        outputs.append(str(corpus.write_utterance(out, tampered)))
        made += 1
    write_manifest(out, "tamper", args, [str(args.corpus)], outputs, started)
    print(f"wrote {made} tampered utterances ({kind})")
    return EXIT_OK


def cmd_bench(args) -> int:
    started = time.time()
    _set_threads(args)
    scfg = load_config(args.config, bench.SuiteConfig, "suite")
    if args.seed is not None:
        scfg.seed = args.seed
    model, _ = coherence_net.load_model(Path(args.model))
    utts = [corpus.read_utterance(d) for d in corpus.list_utterances(Path(args.corpus))]
    out = Path(args.out)
    report = bench.run_suite(utts, model, scfg, out_dir=out)
    write_manifest(out, "bench", args, [str(args.model), str(args.corpus)],
                   [str(out / "report.json"), str(out / "roc.csv"),
                    str(out / "scores.csv")], started)
    print(f"eer={report.eer:.4f} auc={report.auc:.4f} "
          f"threshold={report.eer_threshold:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    data = json.loads(Path(args.input).read_text())
    print(f"EER: {data['eer']:.4f}   AUC: {data['auc']:.4f}   "
          f"threshold: {data['eer_threshold']:.4f}")
    per = data.get("per_attack", {})
    for kind in sorted(k for k in per if not k.startswith("_")):
        row = per[kind]
        print(f"{kind:32s} far={row['far']:.3f} tar={row['tar']:.3f} "
              f"mode={row['mode']} n={row['n']}")
    if "_genuine" in per:
        print(f"genuine windows: {per['_genuine']['n_windows']} "
              f"(mean score {per['_genuine']['mean_score']:.3f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmvoice", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic corpus")
    p.add_argument("--config", help="DatasetSpec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("extract", help="extract vibration traces")
    p.add_argument("--in", dest="input", required=True,
                   help="corpus dir or one utterance dir")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("align", help="build paired Mel segments")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vib", required=True, help="extraction output dir")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("train", help="train the coherence model")
    p.add_argument("--segs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainConfig JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("score", help="score segment pairs")
    p.add_argument("--model", required=True, help="model.bin path")
    p.add_argument("--segs", required=True, help="one utterance's segments dir")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("tamper", help="write tampered utterances")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", required=True, choices=bench.ALL_KINDS)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_tamper)

    p = sub.add_parser("bench", help="run the attack suite")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="SuiteConfig JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("report", help="summarize a report.json")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except ConfigSchemaError as e:
        print(json.dumps({"category": e.category, "message": str(e)}),
              file=sys.stderr)
        return EXIT_USAGE
    except NoSpeechError as e:
        print(json.dumps({"category": e.category, "message": str(e)}),
              file=sys.stderr)
        return EXIT_MODALITY_ABSENT
    except MmvoiceError as e:
        print(json.dumps({"category": e.category, "message": str(e)}),
              file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as e:
        print(json.dumps({"category": "missing-input", "message": str(e)}),
              file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
