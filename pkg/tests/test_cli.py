import json
import os
import subprocess
import sys
import time
from collections import Counter

import pytest

from lyricsense.cli import cli_main
from lyricsense.corpus import AnnotatedFragment, SongRecord, write_corpus
from lyricsense.lm import NGramModel, Vocabulary
from lyricsense.wire import RemoteLM


def run_cli(*argv):
    return cli_main(list(argv))


def test_ingest_writes_stats_and_splits(mini_corpus_path, tmp_path, capsys):
    out = tmp_path / "ingest"
    assert run_cli("ingest", "--corpus", mini_corpus_path, "--out", str(out)) == 0
    captured = capsys.readouterr()
    assert "22 songs" in captured.out
    for name in (
        "stats.json",
        "train.jsonl",
        "validation.jsonl",
        "test.jsonl",
        "songs_per_genre.csv",
        "word_frequencies_lyrics.csv",
    ):
        assert (out / name).exists(), name
    train = [json.loads(line) for line in (out / "train.jsonl").read_text().splitlines()]
    assert {"sample_id", "song_id", "title", "artist", "fragment", "annotation"} <= set(train[0])


def test_ingest_stats_match_golden_bytes(mini_corpus_path, tmp_path):
    out = tmp_path / "ingest"
    assert run_cli("ingest", "--corpus", mini_corpus_path, "--out", str(out)) == 0
    golden = os.path.join(os.path.dirname(__file__), "data", "mini_corpus_stats.golden.json")
    assert (out / "stats.json").read_bytes() == open(golden, "rb").read()


def test_ingest_warns_about_bad_lines(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    record = SongRecord("s1", "T", "A", "pop", "la la", 3, [AnnotatedFragment("la", "x")])
    write_corpus(str(corpus), [record])
    with open(corpus, "a") as fh:
        fh.write("oops\n")
    out = tmp_path / "out"
    assert run_cli("ingest", "--corpus", str(corpus), "--out", str(out)) == 0
    captured = capsys.readouterr()
    assert "line 3" in captured.err


def test_fit_lm_writes_loadable_model(mini_corpus_path, tmp_path):
    model_path = tmp_path / "lm.json"
    code = run_cli(
        "fit-lm", "--corpus", mini_corpus_path, "--out", str(model_path),
        "--order", "2", "--vocab-cap", "500",
    )
    assert code == 0
    model = NGramModel.load(str(model_path))
    assert model.order == 2
    assert len(model.vocabulary()) <= 503


def toy_chain_model_file(path):
    vocab = Vocabulary.build(["x", "y", "z"])
    x, y, z = (vocab.id_of(t) for t in "xyz")
    counts = {(x,): Counter({y: 1}), (y,): Counter({z: 1}), (z,): Counter({vocab.eos_id: 1})}
    model = NGramModel(order=2, k=1e-12, vocab=vocab, counts=counts)
    model.save(path)
    return model


def test_generate_prints_forced_continuation(tmp_path, capsys):
    model_path = str(tmp_path / "toy.json")
    toy_chain_model_file(model_path)
    code = run_cli(
        "generate", "--model", model_path, "--fragment", "x",
        "--prompt", "none", "--strategy", "greedy",
    )
    assert code == 0
    assert capsys.readouterr().out == "y z\n"


def test_generate_with_corpus_sample(mini_corpus_path, tmp_path, capsys):
    model_path = str(tmp_path / "toy.json")
    toy_chain_model_file(model_path)
    code = run_cli(
        "generate", "--model", model_path, "--corpus", mini_corpus_path,
        "--sample-id", "ls-0001#0", "--prompt", "lyrics_meaning", "--strategy", "greedy",
        "--max-new-tokens", "4",
    )
    assert code == 0
    capsys.readouterr()

    code = run_cli(
        "generate", "--model", model_path, "--corpus", mini_corpus_path,
        "--sample-id", "nope#9", "--prompt", "none",
    )
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_generate_accepts_decode_config_file(tmp_path, capsys):
    model_path = str(tmp_path / "toy.json")
    toy_chain_model_file(model_path)
    config = tmp_path / "decode.json"
    config.write_text(json.dumps({"strategy": "greedy", "max_new_tokens": 1, "seed": 0}))
    code = run_cli(
        "generate", "--model", model_path, "--fragment", "x",
        "--prompt", "none", "--decode-config", str(config),
    )
    assert code == 0
    assert capsys.readouterr().out == "y\n"  # length cap from the file applied


def test_serve_mock_stdio_subprocess(tmp_path):
    model_path = str(tmp_path / "toy.json")
    local = toy_chain_model_file(model_path)
    requests = b'{"op": "hello", "proto": 1}\n{"op": "next", "ctx": [3]}\n'
    proc = subprocess.run(
        [sys.executable, "-m", "lyricsense", "serve-mock", "--model", model_path, "--stdio"],
        input=requests,
        capture_output=True,
        timeout=30,
    )
    assert proc.returncode == 0
    lines = proc.stdout.decode().strip().splitlines()
    assert json.loads(lines[0])["op"] == "vocab"
    assert json.loads(lines[1])["op"] == "dist"
    assert len(json.loads(lines[1])["logp"]) == len(local.vocabulary())


def test_evaluate_emits_reports_and_aggregate(tmp_path, capsys):
    predictions = tmp_path / "preds.jsonl"
    rows = [
        {"prediction": "pure joy", "annotation": "pure joy", "lyrics": "rain rain"},
        {"prediction": "rain rain", "annotation": "pure joy", "lyrics": "rain rain"},
    ]
    predictions.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    assert run_cli("evaluate", "--predictions", str(predictions)) == 0
    lines = [json.loads(line) for line in capsys.readouterr().out.strip().splitlines()]
    assert len(lines) == 3
    assert lines[0]["total_score"] == 1.0
    assert lines[1]["total_score"] == 0.0
    assert lines[2]["aggregate"] is True
    assert lines[2]["n"] == 2
    assert lines[2]["total_score"] == pytest.approx(0.5)


def test_grid_cli_with_config(mini_corpus_path, tmp_path, capsys):
    config = tmp_path / "grid.json"
    config.write_text(json.dumps({
        "models": [{"id": "m1", "type": "ngram", "order": 1, "vocab_cap": 1000}],
        "prompts": "all",
        "decoders": "all",
        "eval_samples": {"top_page_views": 2},
        "seed": 1,
    }))
    out = tmp_path / "out"
    code = run_cli("grid", "--corpus", mini_corpus_path, "--out", str(out), "--config", str(config))
    assert code == 0
    captured = capsys.readouterr()
    assert "35 combinations" in captured.out
    summary = [l for l in (out / "summary.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(summary) == 1 + 35


def test_grid_cli_against_remote_endpoint(mini_corpus_path, tmp_path, capsys):
    from lyricsense.corpus import clean_corpus, flatten, load_corpus, split
    from lyricsense.harness import training_texts
    from lyricsense.lm import fit_ngram
    from lyricsense.wire import LMServer

    records = clean_corpus(load_corpus(mini_corpus_path).records)
    train, _, _ = split(flatten(records), (0.8, 0.1, 0.1), seed=0)
    server = LMServer(fit_ngram(training_texts(train), order=1, k=0.1, vocab_cap=300))
    server.start_background()
    config = tmp_path / "grid.json"
    config.write_text(json.dumps({
        "prompts": ["none"],
        "decoders": [{"id": "greedy", "strategy": "greedy", "max_new_tokens": 8}],
        "eval_samples": {"top_page_views": 2},
    }))
    out = tmp_path / "out"
    try:
        code = run_cli(
            "grid", "--corpus", mini_corpus_path, "--out", str(out),
            "--config", str(config), "--endpoint", server.endpoint,
        )
    finally:
        server.shutdown()
        server.server_close()
    assert code == 0
    assert "1 combinations, 2 rows" in capsys.readouterr().out
    rows = [json.loads(l) for l in (out / "grid.jsonl").read_text().splitlines()[1:]]
    assert {r["model"] for r in rows} == {"remote0"}


def test_serve_mock_subprocess_speaks_protocol(tmp_path):
    model_path = str(tmp_path / "toy.json")
    local = toy_chain_model_file(model_path)
    proc = subprocess.Popen(
        [sys.executable, "-m", "lyricsense", "serve-mock", "--model", model_path, "--port", "0"],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        line = proc.stdout.readline().strip()
        assert line.startswith("listening on ")
        endpoint = line.removeprefix("listening on ")
        with RemoteLM(endpoint) as client:
            assert client.vocabulary().tokens == local.vocabulary().tokens
            import numpy as np

            assert np.array_equal(client.next([3]).log_probs, local.next([3]).log_probs)
    finally:
        proc.terminate()
        proc.wait(timeout=5)


def test_missing_file_reports_error(tmp_path, capsys):
    assert run_cli("ingest", "--corpus", "/no/such.jsonl", "--out", str(tmp_path)) == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_flag_usage_error(capsys):
    with pytest.raises(SystemExit) as exc_info:
        run_cli("ingest", "--bogus")
    assert exc_info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_generate_requires_input(capsys, tmp_path):
    model_path = str(tmp_path / "toy.json")
    toy_chain_model_file(model_path)
    assert run_cli("generate", "--model", model_path) == 1
    assert "provide --sample-id or --fragment" in capsys.readouterr().err
