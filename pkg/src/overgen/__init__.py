"""Toolkit for detecting, categorizing and evaluating overgenerations
in machine-translation output."""

__version__ = "0.1.0"

from .aligner import (
    Alignment,
    TranslationModel,
    align_pair,
    load_model,
    parse_pharaoh,
    save_model,
    serialize_pharaoh,
    train_ibm1,
)
from .corpus import (
    Corpus,
    CorpusError,
    SegmentPair,
    filter_score_band,
    load_jsonl,
    load_tsv,
    write_jsonl,
)
from .detector import (
    DetachedSpan,
    DetectionMethod,
    DetectorParams,
    OvergenLabel,
    Verdict,
    checkalign_detect,
    classify,
    detect_oscillatory,
    find_unaligned_spans,
    top_ngram_count,
)
from .evalkit import (
    ConfusionMatrix,
    EvalMode,
    EvalReport,
    PRF,
    confusion_matrix,
    evaluate_run,
    prf,
    render_report,
)
from .qe_ensemble import (
    CalibrationResult,
    ScoreDirection,
    calibrate_threshold,
    ensemble_or,
    flag_from_score,
)
from .synthgen import (
    InjectionKind,
    InjectionSpec,
    SyntheticSegment,
    build_synthetic_corpus,
    inject_confabulation,
    inject_oscillation,
    inject_prefix,
)
from .tokenizer import TokenSeq, span_text, tokenize
