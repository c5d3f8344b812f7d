import json

import pytest

from overgen.cli import dispatch
from overgen.corpus import Corpus, SegmentPair, load_jsonl, write_jsonl
from overgen.detector import OvergenLabel, load_verdicts_jsonl
from overgen.evalkit import parse_report

from toybitext import toy_corpus


@pytest.fixture
def workdir(tmp_path):
    return tmp_path


def _write_corpus(path, corpus):
    write_jsonl(corpus, str(path))
    return str(path)


def _clean_corpus(n=40, seed=3):
    return toy_corpus(n, n_words=15, seed=seed)


def _synth(workdir, clean_path, rate="1.0", seed="7", extra=()):
    out = str(workdir / "synth.jsonl")
    code = dispatch(
        [
            "synth",
            "--input",
            clean_path,
            "--out",
            out,
            "--kind",
            "prefix",
            "--rate",
            rate,
            "--seed",
            seed,
            *extra,
        ]
    )
    assert code == 0
    return out


# --- dispatch basics -----------------------------------------------------------


def test_no_subcommand_is_usage_error(capsys):
    assert dispatch([]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_subcommand_exit_1(capsys):
    assert dispatch(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_exit_1(capsys):
    assert dispatch(["eval", "--gold", "x", "--verdicts", "y", "--bogus"]) == 1


def test_missing_input_file_exit_2(workdir, capsys):
    out = str(workdir / "v.jsonl")
    code = dispatch(
        ["detect", "--input", str(workdir / "nope.jsonl"), "--alignments",
         str(workdir / "nope.align"), "--out", out]
    )
    assert code == 2


def test_validation_error_exit_1(workdir, capsys):
    bad = workdir / "bad.jsonl"
    bad.write_text('{"id":"s1","src":"a","tgt":"b","lang_pair":"en-it","qe_score":9}\n')
    out = str(workdir / "v.jsonl")
    code = dispatch(
        ["detect", "--input", str(bad), "--oracle-manifest", _empty_manifest(workdir),
         "--out", out]
    )
    assert code == 1


def _empty_manifest(workdir):
    path = workdir / "manifest.jsonl"
    path.write_text("")
    return str(path)


# --- synth -----------------------------------------------------------------------


def test_synth_outputs(workdir):
    clean = _clean_corpus()
    clean_path = _write_corpus(workdir / "clean.jsonl", clean)
    out = _synth(workdir, clean_path)

    synthetic = load_jsonl(out)
    assert len(synthetic) == len(clean)
    assert all(seg.gold_label is not None for seg in synthetic)

    manifest_lines = open(out + ".manifest.jsonl", encoding="utf-8").read().splitlines()
    assert len(manifest_lines) == len(clean)
    oracle_lines = open(out + ".oracle.pharaoh", encoding="utf-8").read().splitlines()
    assert len(oracle_lines) == len(clean)
    snapshot = json.loads(open(out + ".config.json", encoding="utf-8").read())
    assert snapshot["command"] == "synth"
    assert snapshot["seed"] == 7


def test_synth_byte_determinism(workdir):
    clean_path = _write_corpus(workdir / "clean.jsonl", _clean_corpus())
    out = _synth(workdir, clean_path, rate="0.5", seed="11")
    first = open(out, "rb").read()
    first_manifest = open(out + ".manifest.jsonl", "rb").read()
    _synth(workdir, clean_path, rate="0.5", seed="11")
    assert open(out, "rb").read() == first
    assert open(out + ".manifest.jsonl", "rb").read() == first_manifest


# --- align-train / align ------------------------------------------------------------


def test_train_align_detect_eval_pipeline(workdir, capsys):
    bitext = toy_corpus(800, n_words=25, seed=19, prefix="train")
    bitext_path = _write_corpus(workdir / "bitext.jsonl", bitext)
    model_path = str(workdir / "model.txt")
    assert dispatch(
        ["align-train", "--input", bitext_path, "--model", model_path,
         "--iterations", "8"]
    ) == 0

    clean = _clean_corpus(60, seed=23)
    clean_path = _write_corpus(workdir / "clean.jsonl", clean)
    synth_path = _synth(workdir, clean_path, rate="0.5", seed="29")

    align_path = str(workdir / "synth.align")
    assert dispatch(
        ["align", "--input", synth_path, "--model", model_path, "--out", align_path]
    ) == 0
    assert len(open(align_path, encoding="utf-8").read().splitlines()) == len(clean)

    verdicts_path = str(workdir / "verdicts.jsonl")
    assert dispatch(
        ["detect", "--input", synth_path, "--alignments", align_path,
         "--out", verdicts_path, "--n", "2"]
    ) == 0
    verdicts = load_verdicts_jsonl(verdicts_path)
    assert len(verdicts) == len(clean)

    report_path = str(workdir / "report.json")
    assert dispatch(
        ["eval", "--gold", synth_path, "--verdicts", verdicts_path,
         "--mode", "binary", "--out", report_path]
    ) == 0
    report = parse_report(open(report_path, encoding="utf-8").read())
    assert report.n_segments == len(clean)
    # toy bitext trains a sharp lexicon; the prefix injections are found
    assert report.binary.recall >= 0.9
    assert report.binary.precision >= 0.9


def test_detect_with_oracle_pharaoh_gives_perfect_recall(workdir):
    clean_path = _write_corpus(workdir / "clean.jsonl", _clean_corpus(50, seed=31))
    synth_path = _synth(workdir, clean_path, rate="0.6", seed="37")
    verdicts_path = str(workdir / "verdicts.jsonl")
    assert dispatch(
        ["detect", "--input", synth_path, "--alignments", synth_path + ".oracle.pharaoh",
         "--out", verdicts_path]
    ) == 0
    report_path = str(workdir / "report.json")
    assert dispatch(
        ["eval", "--gold", synth_path, "--verdicts", verdicts_path,
         "--mode", "binary", "--out", report_path]
    ) == 0
    report = parse_report(open(report_path, encoding="utf-8").read())
    assert report.binary.recall == 1.0
    assert report.binary.precision == 1.0


def test_detect_with_oracle_manifest_matches_pharaoh_route(workdir):
    clean_path = _write_corpus(workdir / "clean.jsonl", _clean_corpus(40, seed=41))
    synth_path = _synth(workdir, clean_path, rate="0.5", seed="43")
    via_pharaoh = str(workdir / "v1.jsonl")
    via_manifest = str(workdir / "v2.jsonl")
    assert dispatch(
        ["detect", "--input", synth_path, "--alignments", synth_path + ".oracle.pharaoh",
         "--out", via_pharaoh]
    ) == 0
    assert dispatch(
        ["detect", "--input", synth_path, "--oracle-manifest",
         synth_path + ".manifest.jsonl", "--out", via_manifest]
    ) == 0
    a = [(v.segment_id, v.flagged, v.label) for v in load_verdicts_jsonl(via_pharaoh)]
    b = [(v.segment_id, v.flagged, v.label) for v in load_verdicts_jsonl(via_manifest)]
    assert a == b


def test_detect_requires_exactly_one_alignment_source(workdir, capsys):
    clean_path = _write_corpus(workdir / "c.jsonl", _clean_corpus(5))
    out = str(workdir / "v.jsonl")
    assert dispatch(["detect", "--input", clean_path, "--out", out]) == 1
    assert dispatch(
        ["detect", "--input", clean_path, "--out", out,
         "--alignments", "x", "--oracle-manifest", "y"]
    ) == 1


def test_detect_monotone_in_n(workdir):
    clean_path = _write_corpus(workdir / "clean.jsonl", _clean_corpus(40, seed=51))
    synth_path = _synth(workdir, clean_path, rate="1.0", seed="53")
    spans = {}
    for n in ("2", "3"):
        out = str(workdir / f"v{n}.jsonl")
        assert dispatch(
            ["detect", "--input", synth_path, "--alignments",
             synth_path + ".oracle.pharaoh", "--out", out, "--n", n]
        ) == 0
        spans[n] = {
            v.segment_id: {(s.start, s.end) for s in v.spans}
            for v in load_verdicts_jsonl(out)
        }
    for sid, at_n3 in spans["3"].items():
        assert at_n3 <= spans["2"][sid]


def test_detect_jobs_parallel_output_identical(workdir):
    clean_path = _write_corpus(workdir / "clean.jsonl", _clean_corpus(30, seed=61))
    synth_path = _synth(workdir, clean_path, rate="0.5", seed="67")
    serial = str(workdir / "serial.jsonl")
    parallel = str(workdir / "parallel.jsonl")
    assert dispatch(
        ["detect", "--input", synth_path, "--alignments",
         synth_path + ".oracle.pharaoh", "--out", serial]
    ) == 0
    assert dispatch(
        ["detect", "--input", synth_path, "--alignments",
         synth_path + ".oracle.pharaoh", "--out", parallel, "--jobs", "2"]
    ) == 0
    assert open(serial, "rb").read() == open(parallel, "rb").read()


def test_detect_byte_determinism(workdir):
    clean_path = _write_corpus(workdir / "clean.jsonl", _clean_corpus(20, seed=71))
    synth_path = _synth(workdir, clean_path, rate="0.5", seed="73")
    out = str(workdir / "v.jsonl")
    argv = ["detect", "--input", synth_path, "--alignments",
            synth_path + ".oracle.pharaoh", "--out", out]
    assert dispatch(argv) == 0
    first = open(out, "rb").read()
    assert dispatch(argv) == 0
    assert open(out, "rb").read() == first


def test_alignment_line_count_mismatch(workdir):
    clean_path = _write_corpus(workdir / "clean.jsonl", _clean_corpus(10))
    short = workdir / "short.align"
    short.write_text("0-0\n")
    out = str(workdir / "v.jsonl")
    assert dispatch(
        ["detect", "--input", clean_path, "--alignments", str(short), "--out", out]
    ) == 1


# --- qe and ensemble ---------------------------------------------------------------


def _qe_corpus(workdir):
    segments = [
        SegmentPair("g1", "a b", "x y", "en-it", gold_label=OvergenLabel.DETACHED,
                    qe_score=0.2),
        SegmentPair("g2", "c d", "z w", "en-it", gold_label=OvergenLabel.NONE,
                    qe_score=1.8),
        SegmentPair("g3", "e f", "u v", "en-it", gold_label=OvergenLabel.DETACHED,
                    qe_score=0.4),
        SegmentPair("g4", "g h", "s t", "en-it", gold_label=OvergenLabel.NONE,
                    qe_score=1.5),
    ]
    return _write_corpus(workdir / "qe.jsonl", Corpus(segments, name="qe"))


def test_calibrate_writes_result(workdir):
    path = _qe_corpus(workdir)
    out = str(workdir / "calib.json")
    assert dispatch(
        ["calibrate", "--input", path, "--qe-direction", "low", "--out", out]
    ) == 0
    doc = json.loads(open(out, encoding="utf-8").read())
    assert doc["f1"] == 1.0
    assert 0.4 < doc["threshold"] < 1.5
    assert doc["direction"] == "low_score_is_overgen"
    assert doc["support"] == 4


def test_calibrate_to_stdout(workdir, capsys):
    path = _qe_corpus(workdir)
    assert dispatch(["calibrate", "--input", path, "--qe-direction", "low"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["support"] == 4


def test_detect_qe_method(workdir):
    path = _qe_corpus(workdir)
    out = str(workdir / "v.jsonl")
    assert dispatch(
        ["detect", "--input", path, "--method", "qe", "--qe-threshold", "0.9",
         "--qe-direction", "low", "--out", out]
    ) == 0
    verdicts = {v.segment_id: v for v in load_verdicts_jsonl(out)}
    assert verdicts["g1"].flagged
    assert not verdicts["g2"].flagged
    assert verdicts["g1"].method.value == "qe"


def test_detect_ensemble_flags_union(workdir):
    # alignments cover everything, so checkalign is quiet and QE drives
    path = _qe_corpus(workdir)
    align = workdir / "full.align"
    align.write_text("0-0 1-1\n" * 4)
    out = str(workdir / "v.jsonl")
    assert dispatch(
        ["detect", "--input", path, "--alignments", str(align), "--out", out,
         "--qe-threshold", "0.9", "--qe-direction", "low"]
    ) == 0
    verdicts = {v.segment_id: v for v in load_verdicts_jsonl(out)}
    assert verdicts["g1"].method.value == "ensemble"
    assert verdicts["g1"].flagged
    assert verdicts["g1"].source_flags == [("checkalign", False), ("qe", True)]
    assert not verdicts["g2"].flagged


# --- eval output -------------------------------------------------------------------


def test_eval_table_format(workdir, capsys):
    path = _qe_corpus(workdir)
    verdicts_path = str(workdir / "v.jsonl")
    assert dispatch(
        ["detect", "--input", path, "--method", "qe", "--qe-threshold", "0.9",
         "--qe-direction", "low", "--out", verdicts_path]
    ) == 0
    capsys.readouterr()
    assert dispatch(
        ["eval", "--gold", path, "--verdicts", verdicts_path, "--mode", "binary",
         "--format", "table"]
    ) == 0
    out = capsys.readouterr().out
    assert "OG" in out
    assert "No error" in out


def test_eval_per_label_mode(workdir, capsys):
    path = _qe_corpus(workdir)
    verdicts_path = str(workdir / "v.jsonl")
    dispatch(
        ["detect", "--input", path, "--method", "qe", "--qe-threshold", "0.9",
         "--qe-direction", "low", "--out", verdicts_path]
    )
    report_path = str(workdir / "report.json")
    assert dispatch(
        ["eval", "--gold", path, "--verdicts", verdicts_path, "--mode", "per-label",
         "--out", report_path]
    ) == 0
    report = parse_report(open(report_path, encoding="utf-8").read())
    assert "detached" in report.per_label


# --- config file and env fallback ----------------------------------------------------


def test_config_file_supplies_defaults_flags_win(workdir):
    clean_path = _write_corpus(workdir / "clean.jsonl", _clean_corpus(20, seed=81))
    synth_path = _synth(workdir, clean_path, rate="1.0", seed="83")
    config = workdir / "config.json"
    config.write_text(json.dumps({"n": 4}))
    out_config = str(workdir / "v_config.jsonl")
    out_flag = str(workdir / "v_flag.jsonl")
    assert dispatch(
        ["detect", "--input", synth_path, "--alignments",
         synth_path + ".oracle.pharaoh", "--out", out_config,
         "--config", str(config)]
    ) == 0
    snapshot = json.loads(open(out_config + ".config.json", encoding="utf-8").read())
    assert snapshot["n"] == 4
    assert dispatch(
        ["detect", "--input", synth_path, "--alignments",
         synth_path + ".oracle.pharaoh", "--out", out_flag,
         "--config", str(config), "--n", "2"]
    ) == 0
    snapshot = json.loads(open(out_flag + ".config.json", encoding="utf-8").read())
    assert snapshot["n"] == 2


def test_config_env_var_fallback(workdir, monkeypatch):
    clean_path = _write_corpus(workdir / "clean.jsonl", _clean_corpus(10, seed=91))
    synth_path = _synth(workdir, clean_path, rate="1.0", seed="93")
    config = workdir / "env_config.json"
    config.write_text(json.dumps({"n": 5}))
    monkeypatch.setenv("OVERGEN_CONFIG", str(config))
    out = str(workdir / "v.jsonl")
    assert dispatch(
        ["detect", "--input", synth_path, "--alignments",
         synth_path + ".oracle.pharaoh", "--out", out]
    ) == 0
    snapshot = json.loads(open(out + ".config.json", encoding="utf-8").read())
    assert snapshot["n"] == 5
