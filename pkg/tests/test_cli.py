import csv
import json
import shutil
import subprocess
import sys

import numpy as np

from conftest import FIXTURES, tx
from diarcorrect.cli import main
from diarcorrect.merge import CheckpointReader, MergeConfig, save_checkpoint, ties_merge
from diarcorrect.transcript import Source, Transcript, Word, load_transcript, save_transcript


def test_ingest_and_oracle(tmp_path, capsys):
    out = tmp_path / "aws.json"
    assert main(["ingest", "--format", "aws", "--in", str(FIXTURES / "aws.json"), "--out", str(out)]) == 0
    t = load_transcript(out)
    assert t.id == "aws" and t.texts == ["hello", "there", "yes"] and t.source is Source.AWS

    ref = tmp_path / "ref.json"
    save_transcript(tx(("hello", 1), ("there", 2), ("yes", 2), id="aws"), ref)
    oracle = tmp_path / "oracle.json"
    assert main(["oracle", "--reference", str(ref), "--asr", str(out), "--out", str(oracle)]) == 0
    assert load_transcript(oracle).speakers == [1, 2, 2]


def test_metrics_json_and_table(tmp_path, capsys):
    ref, hyp = tmp_path / "r.json", tmp_path / "h.json"
    save_transcript(tx(("a", 1), ("b", 1), ("c", 2), ("d", 2)), ref)
    save_transcript(tx(("a", 2), ("b", 2), ("c", 1), ("d", 1)), hyp)
    assert main(["metrics", "--reference", str(ref), "--hypothesis", str(hyp)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["delta_cp"] == 0 and doc["delta_sa"] == 1.0 and doc["permutation"] == {"1": 2, "2": 1}
    assert main(["metrics", "--reference", str(ref), "--hypothesis", str(hyp), "--table"]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "| 0 | 0 | 100 | 0 | 100 |"


def test_error_exit_code(tmp_path, capsys):
    assert main(["metrics", "--reference", str(tmp_path / "missing.json"), "--hypothesis", "x"]) == 2
    assert capsys.readouterr().err.startswith("error:")


def _timed(pairs, id, source=Source.AWS, gap=0.5):
    return Transcript(id, tuple(Word(w, s, i * gap, i * gap + 0.4) for i, (w, s) in enumerate(pairs)), source)


def test_prep_pipeline(tmp_path, capsys):
    asr, ref = tmp_path / "asr", tmp_path / "ref"
    asr.mkdir()
    ref.mkdir()
    good = [(f"w{i}", 1 + (i // 5) % 2) for i in range(40)]
    save_transcript(_timed(good, "good"), asr / "good.json")
    save_transcript(_timed([(w, 3 - s) for w, s in good], "good", Source.REFERENCE), ref / "good.json")
    mono = [(f"m{i}", 1) for i in range(5)]
    save_transcript(_timed(mono, "mono"), asr / "mono.json")
    save_transcript(_timed(mono, "mono", Source.REFERENCE), ref / "mono.json")
    rep = [("hi", 1)] + [("okay", 2)] * 11
    save_transcript(_timed(rep, "rep"), asr / "rep.json")
    save_transcript(_timed(rep, "rep", Source.REFERENCE), ref / "rep.json")

    out = tmp_path / "out"
    assert main(["prep", "--in", str(asr), "--reference", str(ref), "--out", str(out), "--pairs"]) == 0
    pairs = [json.loads(l) for l in (out / "pairs.jsonl").read_text().splitlines()]
    assert len(pairs) == 1 and set(pairs[0]) == {"prompt", "completion"}
    assert pairs[0]["completion"].startswith("<speaker:2> w0")
    with open(out / "drops.csv") as fh:
        drops = list(csv.reader(fh))
    assert drops[0] == ["id", "stage", "reason"]
    assert ["mono", "speakers", "single speaker"] in drops
    assert any(r[0] == "rep#0" and r[1] == "repeats" for r in drops)
    counts = json.loads((out / "counts.json").read_text())
    assert counts["speakers"] == {"kept": 2, "dropped": {"single speaker": 1}}
    assert counts["repeats"]["kept"] == 1
    assert (out / "oracle" / "good.json").exists()


def test_correct_with_oracle_and_echo(tmp_path):
    ref = tx(*[(f"w{i}", 1 + (i // 4) % 2) for i in range(30)], id="c")
    noisy = ref.with_labels([3 - s if i % 6 == 0 else s for i, s in enumerate(ref.speakers)])
    save_transcript(ref, tmp_path / "ref.json")
    save_transcript(noisy, tmp_path / "in.json")
    out = tmp_path / "out.json"
    args = ["correct", "--in", str(tmp_path / "in.json"), "--out", str(out), "--budget", "60"]
    assert main(args + ["--client", f"oracle:{tmp_path / 'ref.json'}"]) == 0
    assert load_transcript(out).speakers == ref.speakers
    assert main(args + ["--client", "echo", "--variant", "dlm"]) == 0
    assert load_transcript(out).speakers == noisy.speakers


def test_merge_cli(tmp_path):
    rng = np.random.default_rng(1)
    base = {"w": rng.normal(size=(8, 8)).astype(np.float32)}
    models = [{"w": (base["w"] + rng.normal(scale=0.1, size=(8, 8))).astype(np.float32)} for _ in range(3)]
    save_checkpoint(base, tmp_path / "base.bin")
    paths = []
    for i, m in enumerate(models):
        save_checkpoint(m, tmp_path / f"m{i}.bin")
        paths.append(str(tmp_path / f"m{i}.bin"))
    out = tmp_path / "merged.bin"
    assert main(["merge", "--base", str(tmp_path / "base.bin"), "--model", *paths, "--out", str(out)]) == 0
    want = ties_merge(base, models, MergeConfig())["w"]
    assert np.array_equal(CheckpointReader(out).read("w"), want)

    weighted = [f"{p}:{w}" for p, w in zip(paths, (1, 1, 2))]
    assert main(["merge", "--base", str(tmp_path / "base.bin"), "--model", *weighted, "--density", "0.5", "--out", str(out)]) == 0
    want = ties_merge(base, models, MergeConfig(weights=(1, 1, 2), density=0.5))["w"]
    assert np.array_equal(CheckpointReader(out).read("w"), want)


def test_evaluate(tmp_path, capsys):
    ref_dir, hyp_dir, fix_dir = (tmp_path / d for d in ("ref", "hyp", "fix"))
    for d in (ref_dir, hyp_dir, fix_dir):
        d.mkdir()
    ref = tx(("a", 1), ("b", 1), ("c", 2), ("d", 2), id="f1")
    hyp = Transcript("f1", ref.with_labels([1, 2, 2, 2]).words, Source.AZURE)
    save_transcript(ref, ref_dir / "f1.json")
    save_transcript(hyp, hyp_dir / "f1.json")
    save_transcript(Transcript("f1", ref.words, Source.CORRECTED), fix_dir / "f1.json")
    out = tmp_path / "report"
    rc = main(["evaluate", "--reference", str(ref_dir), "--hypothesis", str(hyp_dir),
               "--system", f"Fixed={fix_dir}", "--out", str(out)])
    assert rc == 0
    md = (out / "report.md").read_text()
    assert "| Baseline | 50 |  | 50 |  |" in md
    assert "| Fixed | 0 | -100% | 0 | -100% |" in md
    assert (out / "report.csv").exists() and json.loads((out / "results.json").read_text())


def test_synth_with_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('seed = 4\n[synth]\nn = 3\nclient = "echo"\n')
    assert main(["synth", "--config", str(cfg), "--client", "oracle", "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "results.json").read_text())
    assert doc[1]["system"] == "oracle mock"
    assert doc[1]["cells"]["synthetic"]["delta_cp"] == 0
    cfg_json = tmp_path / "cfg.json"
    cfg_json.write_text(json.dumps({"synth": {"n": 2, "client": "echo"}}))
    assert main(["synth", "--config", str(cfg_json)]) == 0
    assert "echo mock" in capsys.readouterr().out


def test_console_script_help():
    exe = shutil.which("diarcorrect")
    cmd = [exe] if exe else [sys.executable, "-m", "diarcorrect.cli"]
    proc = subprocess.run(cmd + ["--help"], capture_output=True, text=True, check=True)
    for sub in ("ingest", "oracle", "prep", "metrics", "correct", "merge", "evaluate", "synth"):
        assert sub in proc.stdout
