"""End-to-end command line tests: artifacts, exit codes, determinism."""

import json
import subprocess
import sys
import warnings
from pathlib import Path

import pytest

from tagalign.cli import entrypoint, main
from tagalign.data import load_dataset
from tagalign.protocol import header_dict, header_lines

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

RUN_CFG = """\
# tiny run shared by the command line tests
d_v = 8
d_h = 8
d_s = 4
encoder_layers = 1
decoder_layers = 1
attention_heads = 2
max_text_len = 24
max_frames = 4
batch_size = 4
pretrain_epochs = 1
finetune_epochs = 1
warmup_epochs = 1.0
peak_lr = 0.001
final_lr = 0.0001
"""

SYNTH_ARGS = ["--seed", "7", "--items", "12", "--tag-universe", "6",
              "--tags-per-item", "2", "--frames", "4", "--feature-dim", "8",
              "--captions", "2", "--holdout", "2"]

TRAIN_FILES = ("checkpoint.tack", "loss_log.json", "report.txt")


def read(path):
    return Path(path).read_text(encoding="utf-8")


def train_args(ws, out):
    return ["train", "--data", str(ws / "corpus" / "dataset.jsonl"),
            "--out", str(out), "--config", str(ws / "run.cfg"),
            "--holdout", str(ws / "corpus" / "holdout.jsonl")]


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """One shared pipeline run: synth, stats, train, eval, filter."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "corpus"
    assert main(["synth", "--out", str(data)] + SYNTH_ARGS) == 0
    (root / "run.cfg").write_text(RUN_CFG, encoding="utf-8")
    dataset = str(data / "dataset.jsonl")
    assert main(["stats", "--data", dataset,
                 "--out", str(root / "stats")]) == 0
    assert main(train_args(root, root / "train")) == 0
    assert main(["eval", "--data", dataset,
                 "--checkpoint", str(root / "train" / "checkpoint.tack"),
                 "--out", str(root / "eval")]) == 0
    assert main(["filter", "--data", dataset, "--out", str(root / "filter"),
                 "--epochs", "2"]) == 0
    return root


def test_synth_layout(ws):
    data = ws / "corpus"
    records = load_dataset(data / "dataset.jsonl")
    held = load_dataset(data / "holdout.jsonl")
    assert len(records) == 10
    assert len(held) == 2
    ids = {rec.video_id for rec in records}
    assert ids.isdisjoint(rec.video_id for rec in held)
    assert (data / "vocab.txt").exists()
    assert (data / "lexicon.txt").exists()
    assert len(list((data / "features").glob("*.crtf"))) == 12


def test_stats_artifacts(ws):
    lines = read(ws / "stats" / "stats.txt").splitlines()
    assert lines[:len(header_lines())] == header_lines()
    assert "stats.items = 10" in lines
    assert "stats.captions = 20" in lines
    blob = json.loads(read(ws / "stats" / "stats.json"))
    assert blob["protocol"] == header_dict()
    assert blob["stats"]["stats.items"] == 10
    assert blob["stats"]["stats.feature_dim"] == 8
    for name in ("title_lengths.png", "caption_lengths.png",
                 "tag_frequency.png"):
        assert (ws / "stats" / name).read_bytes()[:8] == PNG_MAGIC


def test_train_artifacts(ws):
    out = ws / "train"
    assert (out / "checkpoint.tack").exists()
    text = read(out / "report.txt")
    for key in ("run.seed", "run.variant = full", "train.items = 10",
                "train.parameters", "train.final_loss.pretrain",
                "train.final_loss.finetune", "train.final_val_t2v_r1",
                "train.best_val_t2v_r1"):
        assert key in text
    blob = json.loads(read(out / "loss_log.json"))
    assert blob["protocol"] == header_dict()
    assert blob["run"]["pretrain_epochs"] == 1
    stages = {row["stage"] for row in blob["loss_log"]}
    assert stages == {"pretrain", "finetune"}
    assert len(blob["val_log"]) == 2
    assert (out / "loss_curve.png").read_bytes()[:8] == PNG_MAGIC


def test_train_rerun_is_byte_identical(ws, tmp_path):
    again = tmp_path / "again"
    assert main(train_args(ws, again)) == 0
    for name in TRAIN_FILES:
        assert (again / name).read_bytes() == (ws / "train" / name).read_bytes()


def test_eval_artifacts(ws):
    out = ws / "eval"
    text = read(out / "report.txt")
    assert text.splitlines()[:len(header_lines())] == header_lines()
    for key in ("eval.items = 10", "eval.beam_size = 3",
                "eval.variant = full", "t2v_recall@1", "v2t_recall@5",
                "title_bleu4_x100", "title_cider_x100", "title_rouge_l_x100",
                "caption_bleu4_x100", "caption_cider_x100"):
        assert key in text
    blob = json.loads(read(out / "report.json"))
    assert blob["protocol"] == header_dict()
    assert blob["eval"]["beam_size"] == 3
    assert "meteor" not in json.dumps(blob).lower()
    rows = [json.loads(line)
            for line in read(out / "decoded.jsonl").splitlines()]
    assert len(rows) == 10
    assert all(set(row) == {"video_id", "text"} for row in rows)
    assert (out / "recall.png").read_bytes()[:8] == PNG_MAGIC


def test_eval_prints_metrics(ws, tmp_path, capsys):
    out = tmp_path / "eval"
    assert main(["eval", "--data", str(ws / "corpus" / "dataset.jsonl"),
                 "--checkpoint", str(ws / "train" / "checkpoint.tack"),
                 "--out", str(out), "--beam", "1"]) == 0
    stdout = capsys.readouterr().out
    assert "t2v_recall@1 = " in stdout
    assert "eval.beam_size = 1" in read(out / "report.txt")


def jsonl_ids(path):
    return {json.loads(line)["video_id"]
            for line in read(path).splitlines()}


def test_filter_artifacts(ws):
    out = ws / "filter"
    records = load_dataset(ws / "corpus" / "dataset.jsonl")
    kept_ids = jsonl_ids(out / "kept.jsonl")
    removed_ids = jsonl_ids(out / "removed.jsonl")
    assert kept_ids.isdisjoint(removed_ids)
    assert kept_ids | removed_ids == {rec.video_id for rec in records}
    lines = read(out / "scores.tsv").splitlines()
    assert lines[0] == "video_id\tscore\tkept"
    body = [line.split("\t") for line in lines[1:]]
    assert len(body) == len(records)
    assert [row[0] for row in body] == sorted(row[0] for row in body)
    for vid, score, flag in body:
        float(score)
        assert flag == ("1" if vid in kept_ids else "0")
    text = read(out / "report.txt")
    assert "filter.threshold = 0.3" in text
    assert "filter.scored = 10" in text
    assert "filter.scorer = trained 2 epochs" in text
    blob = json.loads(read(out / "report.json"))
    assert len(blob["scores"]) == len(records)
    assert (out / "scores.png").read_bytes()[:8] == PNG_MAGIC
    assert (out / "scorer.tack").exists()


def test_filter_keep_all_rewrites_feature_paths(ws, tmp_path):
    out = tmp_path / "keepall"
    assert main(["filter", "--data", str(ws / "corpus" / "dataset.jsonl"),
                 "--out", str(out), "--threshold", "-1.0",
                 "--scorer", str(ws / "filter" / "scorer.tack")]) == 0
    # every record survives and its relocated feature path must resolve
    kept = load_dataset(out / "kept.jsonl", check_features=True)
    assert len(kept) == 10
    assert read(out / "removed.jsonl") == ""
    text = read(out / "report.txt")
    assert "filter.kept = 10" in text
    assert "filter.kept_fraction = 1.0" in text


def test_filter_scorer_reuse(ws, tmp_path):
    out = tmp_path / "again"
    assert main(["filter", "--data", str(ws / "corpus" / "dataset.jsonl"),
                 "--out", str(out),
                 "--scorer", str(ws / "filter" / "scorer.tack")]) == 0
    assert read(out / "scores.tsv") == read(ws / "filter" / "scores.tsv")
    assert "filter.scorer = loaded" in read(out / "report.txt")
    assert not (out / "scorer.tack").exists()


def test_decode_prints_ids_and_text(ws, capsys):
    data = str(ws / "corpus" / "dataset.jsonl")
    ckpt = str(ws / "train" / "checkpoint.tack")
    records = load_dataset(data)
    assert main(["decode", "--data", data, "--checkpoint", ckpt,
                 "--limit", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    for line, rec in zip(lines, records):
        assert line.split("\t")[0] == rec.video_id
    assert main(["decode", "--data", data, "--checkpoint", ckpt,
                 "--video-id", records[3].video_id]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 1
    assert lines[0].startswith(records[3].video_id + "\t")


def test_protocol_header_on_every_report(ws):
    expected = header_lines()
    for rel in ("stats/stats.txt", "train/report.txt", "eval/report.txt",
                "filter/report.txt"):
        text = read(ws / rel)
        assert text.splitlines()[:len(expected)] == expected
        assert "meteor" not in text.lower()


def test_help_exits_zero(capsys):
    assert entrypoint(["--help"]) == 0
    assert entrypoint(["synth", "--help"]) == 0
    capsys.readouterr()


def test_usage_problems_exit_1(ws, tmp_path, capsys):
    data = str(ws / "corpus" / "dataset.jsonl")
    ckpt = str(ws / "train" / "checkpoint.tack")
    out = str(tmp_path / "out")
    assert entrypoint([]) == 1
    assert entrypoint(["transmogrify"]) == 1
    assert entrypoint(["synth", "--out", out, "--items", "many"]) == 1
    assert entrypoint(["synth", "--out", out, "--items", "0"]) == 1
    assert entrypoint(["eval", "--data", data, "--checkpoint", ckpt,
                       "--out", out, "--beam", "0"]) == 1
    assert entrypoint(["filter", "--data", data, "--out", out,
                       "--threshold", "1.5"]) == 1
    assert entrypoint(["filter", "--data", data, "--out", out,
                       "--epochs", "-1"]) == 1
    assert entrypoint(["train", "--data", data, "--out", out,
                       "--variant", "bogus"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_config_problems_exit_1(ws, tmp_path, capsys):
    data = str(ws / "corpus" / "dataset.jsonl")
    out = str(tmp_path / "out")
    assert entrypoint(["train", "--data", data, "--out", out,
                       "--config", str(tmp_path / "missing.cfg")]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("warp_drive = 9\n", encoding="utf-8")
    assert entrypoint(["train", "--data", data, "--out", out,
                       "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "usage error" in err
    assert "bad.cfg:1" in err


def test_data_problems_exit_2(ws, tmp_path, capsys):
    data = str(ws / "corpus" / "dataset.jsonl")
    out = str(tmp_path / "out")
    assert entrypoint(["stats", "--data", str(tmp_path / "nope.jsonl"),
                       "--out", out]) == 2
    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"video_id": "v1"\n', encoding="utf-8")
    assert entrypoint(["stats", "--data", str(broken), "--out", out,
                       "--skip-features"]) == 2
    # the two checkpoint formats are not interchangeable
    assert entrypoint(["eval", "--data", data,
                       "--checkpoint", str(ws / "filter" / "scorer.tack"),
                       "--out", out]) == 2
    assert entrypoint(["filter", "--data", data, "--out", out,
                       "--scorer", str(ws / "train" / "checkpoint.tack")]) == 2
    assert entrypoint(["train", "--data", data, "--out", out,
                       "--vocab", str(tmp_path / "nope.txt")]) == 2
    assert "data error" in capsys.readouterr().err


def test_decode_unknown_video_exits_2(ws, capsys):
    rc = entrypoint(["decode", "--data", str(ws / "corpus" / "dataset.jsonl"),
                     "--checkpoint", str(ws / "train" / "checkpoint.tack"),
                     "--video-id", "missing"])
    assert rc == 2
    assert "data error" in capsys.readouterr().err


def test_diverging_run_exits_3(ws, tmp_path, capsys):
    cfg = tmp_path / "explode.cfg"
    cfg.write_text(RUN_CFG.replace("pretrain_epochs = 1",
                                   "pretrain_epochs = 5")
                          .replace("peak_lr = 0.001", "peak_lr = 1e20")
                          .replace("final_lr = 0.0001", "final_lr = 1.0"),
                   encoding="utf-8")
    with warnings.catch_warnings():
        # the rigged learning rate overflows before the gradient check trips
        warnings.simplefilter("ignore", RuntimeWarning)
        rc = entrypoint(["train",
                         "--data", str(ws / "corpus" / "dataset.jsonl"),
                         "--out", str(tmp_path / "boom"),
                         "--config", str(cfg)])
    assert rc == 3
    err = capsys.readouterr().err
    assert "numeric error" in err
    assert "stage" in err


def test_module_invocation_smoke():
    proc = subprocess.run([sys.executable, "-m", "tagalign.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "synth" in proc.stdout
