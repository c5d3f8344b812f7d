"""Command-line surface tying the toolkit into reproducible runs.

Subcommands: align-train, align, detect, calibrate, eval, synth.
Options can come from a JSON config file (--config, or the
OVERGEN_CONFIG environment variable); explicit flags win. Every run
that writes an output file also writes a resolved-config snapshot next
to it, so a result can always be traced back to its exact parameters.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

from . import __version__
from .aligner import (
    AlignDiagnostics,
    Alignment,
    load_model,
    align_pair,
    parse_pharaoh,
    save_model,
    serialize_pharaoh,
    train_ibm1,
)
from .corpus import Corpus, CorpusError, load_jsonl, load_tsv, stream_jsonl, write_jsonl
from .detector import (
    DetectionMethod,
    DetectorParams,
    checkalign_detect,
    load_verdicts_jsonl,
    verdict_to_record,
)
from .evalkit import EvalMode, ReportFormat, evaluate_run, render_report
from .qe_ensemble import (
    CalibrationError,
    ScoreDirection,
    calibrate_threshold,
    ensemble_or,
    qe_verdict,
)
from .synthgen import (
    InjectionKind,
    InjectionSpec,
    ManifestEntry,
    build_synthetic_corpus,
    load_lexicon,
    load_templates,
)
from .tokenizer import tokenize

CONFIG_ENV_VAR = "OVERGEN_CONFIG"

_DIRECTIONS = {
    "low": ScoreDirection.LOW_SCORE_IS_OVERGEN,
    "high": ScoreDirection.HIGH_SCORE_IS_OVERGEN,
    ScoreDirection.LOW_SCORE_IS_OVERGEN.value: ScoreDirection.LOW_SCORE_IS_OVERGEN,
    ScoreDirection.HIGH_SCORE_IS_OVERGEN.value: ScoreDirection.HIGH_SCORE_IS_OVERGEN,
}


class UsageError(Exception):
    def __init__(self, parser: argparse.ArgumentParser, message: str):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit, so dispatch owns
    the exit code."""

    def error(self, message: str):
        raise UsageError(self, message)


def _load_corpus(path: str, has_header: bool = False) -> Corpus:
    if path.endswith(".tsv"):
        return load_tsv(path, has_header=has_header)
    return load_jsonl(path)


def _resolve(args: argparse.Namespace, name: str, default):
    value = getattr(args, name, None)
    return default if value is None else value


def _detector_params(args: argparse.Namespace) -> DetectorParams:
    return DetectorParams(
        n=_resolve(args, "n", 2),
        theta_detached=_resolve(args, "theta_detached", 0.8),
        k_partial=_resolve(args, "k_partial", 5),
        ngram_order=_resolve(args, "ngram_order", 2),
        tng_margin=_resolve(args, "tng_margin", 3),
    )


def _write_snapshot(out_path: str, command: str, resolved: dict) -> None:
    doc = {"command": command, "version": __version__}
    doc.update(resolved)
    with open(out_path + ".config.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _apply_config(args: argparse.Namespace) -> None:
    """Fill options the user left unset from the JSON config file, if any."""
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_align_train(args: argparse.Namespace) -> int:
    corpus = _load_corpus(args.input, has_header=bool(_resolve(args, "has_header", False)))
    pairs = [(tokenize(seg.src), tokenize(seg.tgt)) for seg in corpus]
    iterations = int(_resolve(args, "iterations", 10))
    uses_null = not bool(_resolve(args, "no_null", False))
    model = train_ibm1(pairs, iterations=iterations, uses_null=uses_null)
    save_model(model, args.model)
    _write_snapshot(
        args.model,
        "align-train",
        {
            "input": args.input,
            "model": args.model,
            "iterations": iterations,
            "uses_null": uses_null,
        },
    )
    final_ll = model.log_likelihood[-1] if model.log_likelihood else float("nan")
    print(
        f"trained on {len(pairs) - model.skipped_pairs} pairs "
        f"({model.skipped_pairs} skipped), {iterations} iterations, "
        f"log-likelihood {final_ll:.4f}"
    )
    return 0


def _cmd_align(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    p_min = float(_resolve(args, "p_min", 0.05))
    diagnostics = AlignDiagnostics()
    with open(args.out, "w", encoding="utf-8") as fh:
        for seg in stream_jsonl(args.input):
            alignment = align_pair(
                model, tokenize(seg.src), tokenize(seg.tgt), p_min, diagnostics
            )
            fh.write(serialize_pharaoh(alignment) + "\n")
    _write_snapshot(
        args.out,
        "align",
        {"input": args.input, "model": args.model, "out": args.out, "p_min": p_min},
    )
    print(
        f"aligned corpus; {diagnostics.unaligned_tokens} unaligned target tokens "
        f"({diagnostics.oov_tokens} OOV)"
    )
    return 0


def _oracle_alignment_for(seg, spans: list[tuple[int, int]]) -> Alignment:
    n_src = len(tokenize(seg.src))
    n_tgt = len(tokenize(seg.tgt))
    blocked = set()
    for start, end in spans:
        blocked.update(range(start, end + 1))
    covered = [j for j in range(n_tgt) if j not in blocked]
    if covered and not n_src:
        raise ValueError(
            f"segment {seg.id!r}: cannot reconstruct an oracle alignment with an empty source"
        )
    return Alignment(frozenset((min(j, n_src - 1), j) for j in covered))


def _detect_worker(payload):
    seg, alignment, params = payload
    return checkalign_detect(seg, alignment, params)


def _cmd_detect(args: argparse.Namespace) -> int:
    params = _detector_params(args)
    qe_threshold = getattr(args, "qe_threshold", None)
    method = _resolve(args, "method", "ensemble" if qe_threshold is not None else "checkalign")
    if method not in ("checkalign", "qe", "ensemble"):
        raise ValueError(f"unknown detection method {method!r}")
    direction = _DIRECTIONS[_resolve(args, "qe_direction", "low")]

    sources = [
        name
        for name, value in (
            ("alignments", getattr(args, "alignments", None)),
            ("model", getattr(args, "model", None)),
            ("oracle-manifest", getattr(args, "oracle_manifest", None)),
        )
        if value is not None
    ]
    if method in ("checkalign", "ensemble"):
        if len(sources) != 1:
            raise ValueError(
                "detect needs exactly one alignment source: "
                "--alignments, --model or --oracle-manifest"
            )
    elif sources:
        raise ValueError("--method qe does not take an alignment source")
    if method in ("qe", "ensemble") and qe_threshold is None:
        raise ValueError(f"--method {method} requires --qe-threshold")

    model = load_model(args.model) if getattr(args, "model", None) else None
    p_min = float(_resolve(args, "p_min", 0.05))

    manifest_spans: dict[str, list[tuple[int, int]]] = {}
    if getattr(args, "oracle_manifest", None):
        with open(args.oracle_manifest, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = ManifestEntry.from_record(json.loads(line))
                if entry.span is not None:
                    manifest_spans.setdefault(entry.id, []).append(entry.span)

    align_lines = None
    if getattr(args, "alignments", None):
        with open(args.alignments, "r", encoding="utf-8") as fh:
            align_lines = fh.read().splitlines()

    def alignment_for(idx: int, seg) -> Alignment:
        if align_lines is not None:
            if idx >= len(align_lines):
                raise ValueError(
                    f"alignment file {args.alignments} has fewer lines than the corpus"
                )
            return parse_pharaoh(align_lines[idx])
        if model is not None:
            return align_pair(model, tokenize(seg.src), tokenize(seg.tgt), p_min)
        return _oracle_alignment_for(seg, manifest_spans.get(seg.id, []))

    seen_ids: set[str] = set()
    jobs = int(_resolve(args, "jobs", 1))

    def checkalign_inputs():
        for idx, seg in enumerate(stream_jsonl(args.input)):
            if seg.id in seen_ids:
                raise CorpusError(f"duplicate segment id {seg.id!r}")
            seen_ids.add(seg.id)
            yield seg, alignment_for(idx, seg), params

    n_written = 0
    with open(args.out, "w", encoding="utf-8") as out_fh:

        def emit(verdict) -> None:
            nonlocal n_written
            out_fh.write(json.dumps(verdict_to_record(verdict), ensure_ascii=False) + "\n")
            n_written += 1

        if method == "qe":
            for seg in stream_jsonl(args.input):
                if seg.id in seen_ids:
                    raise CorpusError(f"duplicate segment id {seg.id!r}")
                seen_ids.add(seg.id)
                emit(qe_verdict(seg.id, seg.qe_score, float(qe_threshold), direction))
        elif jobs > 1:
            # Parallel mode trades streaming for batching; order is kept
            # by the executor map.
            items = list(checkalign_inputs())
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                for (seg, _, _), verdict in zip(
                    items, pool.map(_detect_worker, items, chunksize=64)
                ):
                    if method == "ensemble":
                        verdict = ensemble_or(
                            verdict,
                            qe_verdict(seg.id, seg.qe_score, float(qe_threshold), direction),
                        )
                    emit(verdict)
        else:
            for seg, alignment, p in checkalign_inputs():
                verdict = checkalign_detect(seg, alignment, p)
                if method == "ensemble":
                    verdict = ensemble_or(
                        verdict,
                        qe_verdict(seg.id, seg.qe_score, float(qe_threshold), direction),
                    )
                emit(verdict)

    if align_lines is not None and n_written != len(align_lines):
        raise ValueError(
            f"alignment file {args.alignments} has {len(align_lines)} lines "
            f"but the corpus has {n_written} segments"
        )

    resolved = {
        "input": args.input,
        "out": args.out,
        "method": method,
        "n": params.n,
        "theta_detached": params.theta_detached,
        "k_partial": params.k_partial,
        "ngram_order": params.ngram_order,
        "tng_margin": params.tng_margin,
        "jobs": jobs,
    }
    if getattr(args, "alignments", None):
        resolved["alignments"] = args.alignments
    if getattr(args, "model", None):
        resolved["model"] = args.model
        resolved["p_min"] = p_min
    if getattr(args, "oracle_manifest", None):
        resolved["oracle_manifest"] = args.oracle_manifest
    if qe_threshold is not None:
        resolved["qe_threshold"] = float(qe_threshold)
        resolved["qe_direction"] = direction.value
    _write_snapshot(args.out, "detect", resolved)
    print(f"wrote {n_written} verdicts to {args.out}")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    corpus = _load_corpus(args.input)
    direction = _DIRECTIONS[_resolve(args, "qe_direction", "low")]
    dev = [
        (seg.qe_score, seg.gold_label.value != "none")
        for seg in corpus
        if seg.qe_score is not None and seg.gold_label is not None
    ]
    if not dev:
        raise CalibrationError(
            "no segments with both qe_score and gold_label in the development corpus"
        )
    result = calibrate_threshold(dev, direction)
    text = result.to_json() + "\n"
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_snapshot(
            args.out,
            "calibrate",
            {"input": args.input, "out": args.out, "qe_direction": direction.value},
        )
    else:
        sys.stdout.write(text)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    gold = _load_corpus(args.gold)
    verdicts = load_verdicts_jsonl(args.verdicts)
    mode = EvalMode.PER_LABEL if _resolve(args, "mode", "binary") in ("per-label", "per_label") else EvalMode.BINARY
    fmt = ReportFormat.PLAIN_TABLE if _resolve(args, "format", "json") == "table" else ReportFormat.JSON
    report = evaluate_run(gold, verdicts, mode)
    text = render_report(report, fmt) + "\n"
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_snapshot(
            args.out,
            "eval",
            {
                "gold": args.gold,
                "verdicts": args.verdicts,
                "mode": mode.value,
                "format": fmt.value,
                "out": args.out,
            },
        )
    else:
        sys.stdout.write(text)
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    clean = _load_corpus(args.input)
    kind = InjectionKind(_resolve(args, "kind", "prefix"))
    seed = int(_resolve(args, "seed", 0))
    rate = float(_resolve(args, "rate", 1.0))
    spec = InjectionSpec(
        kind=kind,
        templates=load_templates(getattr(args, "templates", None))
        if kind is InjectionKind.PREFIX
        else [],
        insert_lexicon=load_lexicon(getattr(args, "lexicon", None))
        if kind is InjectionKind.CONFABULATION
        else [],
        repeat_token_range=(
            int(_resolve(args, "repeat_min", 8)),
            int(_resolve(args, "repeat_max", 12)),
        ),
        rate=rate,
        seed=seed,
    )
    synthetic, alignments, manifest = build_synthetic_corpus(clean, [spec])
    write_jsonl(synthetic, args.out)
    manifest_path = _resolve(args, "manifest", args.out + ".manifest.jsonl")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for entry in manifest:
            fh.write(json.dumps(entry.to_record(), ensure_ascii=False) + "\n")
    oracle_path = _resolve(args, "oracle_alignments", args.out + ".oracle.pharaoh")
    with open(oracle_path, "w", encoding="utf-8") as fh:
        for alignment in alignments:
            fh.write(serialize_pharaoh(alignment) + "\n")
    _write_snapshot(
        args.out,
        "synth",
        {
            "input": args.input,
            "out": args.out,
            "manifest": manifest_path,
            "oracle_alignments": oracle_path,
            "kind": kind.value,
            "rate": rate,
            "seed": seed,
        },
    )
    injected = sum(1 for e in manifest if not e.skipped)
    print(f"wrote {len(synthetic)} segments ({injected} injected) to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="overgen", description=__doc__)
    parser.add_argument("--version", action="version", version=f"overgen {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, help="seed for any randomized step")

    p = sub.add_parser("align-train", parents=[], help="train the statistical aligner")
    p.add_argument("--input", required=True, help="parallel corpus (.jsonl or .tsv)")
    p.add_argument("--model", required=True, help="output model path")
    p.add_argument("--iterations", type=int, help="EM iterations (default 10)")
    p.add_argument("--no-null", action="store_const", const=True, dest="no_null",
                   help="train without a NULL source word")
    p.add_argument("--has-header", action="store_const", const=True, dest="has_header",
                   help="skip the first line of a .tsv input")
    common(p)
    p.set_defaults(func=_cmd_align_train)

    p = sub.add_parser("align", help="align a corpus with a trained model")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output Pharaoh alignment file")
    p.add_argument("--p-min", type=float, dest="p_min",
                   help="minimum link probability (default 0.05)")
    common(p)
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("detect", help="run overgeneration detection")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output verdicts (JSONL)")
    p.add_argument("--alignments", help="Pharaoh alignment file parallel to the corpus")
    p.add_argument("--model", help="trained aligner model")
    p.add_argument("--oracle-manifest", dest="oracle_manifest",
                   help="synthesis manifest to reconstruct oracle alignments from")
    p.add_argument("--method", choices=("checkalign", "qe", "ensemble"))
    p.add_argument("--n", type=int, help="minimum unaligned run length (default 2)")
    p.add_argument("--theta-detached", type=float, dest="theta_detached")
    p.add_argument("--k-partial", type=int, dest="k_partial")
    p.add_argument("--ngram-order", type=int, dest="ngram_order")
    p.add_argument("--tng-margin", type=int, dest="tng_margin")
    p.add_argument("--p-min", type=float, dest="p_min")
    p.add_argument("--qe-threshold", type=float, dest="qe_threshold")
    p.add_argument("--qe-direction", dest="qe_direction", choices=sorted(_DIRECTIONS))
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    common(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("calibrate", help="calibrate the QE flagging threshold")
    p.add_argument("--input", required=True, help="dev corpus with qe_score and gold_label")
    p.add_argument("--qe-direction", dest="qe_direction", choices=sorted(_DIRECTIONS))
    p.add_argument("--out", help="output JSON path (default stdout)")
    common(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("eval", help="score verdicts against gold labels")
    p.add_argument("--gold", required=True, help="gold-labelled corpus")
    p.add_argument("--verdicts", required=True, help="verdicts JSONL")
    p.add_argument("--mode", choices=("binary", "per-label", "per_label"))
    p.add_argument("--format", choices=("json", "table"))
    p.add_argument("--out", help="output path (default stdout)")
    common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="build a labelled synthetic corpus")
    p.add_argument("--input", required=True, help="clean parallel corpus")
    p.add_argument("--out", required=True, help="output corpus (JSONL)")
    p.add_argument("--manifest", help="manifest path (default <out>.manifest.jsonl)")
    p.add_argument("--oracle-alignments", dest="oracle_alignments",
                   help="oracle Pharaoh path (default <out>.oracle.pharaoh)")
    p.add_argument("--kind", choices=tuple(k.value for k in InjectionKind))
    p.add_argument("--rate", type=float, help="fraction of segments to perturb (default 1.0)")
    p.add_argument("--templates", help="prefix template file (default: packaged set)")
    p.add_argument("--lexicon", help="confabulation lexicon file (default: packaged set)")
    p.add_argument("--repeat-min", type=int, dest="repeat_min")
    p.add_argument("--repeat-max", type=int, dest="repeat_max")
    common(p)
    p.set_defaults(func=_cmd_synth)

    return parser


def dispatch(argv: list[str]) -> int:
    """Parse and run one invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required", file=sys.stderr)
            return 1
        _apply_config(args)
        return args.func(args)
    except UsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
