"""CLI tests, driven through main(argv) with captured output."""

import numpy as np
import pytest

from eham.cli import main
from eham.featurizer import load_features, save_features
from eham.memory import Hamr4D


@pytest.fixture(scope="module")
def feature_files(tmp_path_factory, corpus_paths):
    """Small feature files for both corpus sides, made via the CLI."""
    directory = tmp_path_factory.mktemp("cli")
    d_path = directory / "digits.ehfn"
    l_path = directory / "letters.ehfn"
    assert main(["featurize", "--images", corpus_paths["digits_images"],
                 "--labels", corpus_paths["digits_labels"],
                 "--out", str(d_path)]) == 0
    # 'emnist' in the filename flips --transpose auto to yes
    assert main(["featurize", "--images", corpus_paths["letters_images"],
                 "--labels", corpus_paths["letters_labels"],
                 "--out", str(l_path)]) == 0
    return {"digits": d_path, "letters": l_path, "dir": directory}


@pytest.fixture(scope="module")
def snapshot(feature_files):
    path = feature_files["dir"] / "mem.eham"
    assert main(["fill", "--a", str(feature_files["digits"]),
                 "--b", str(feature_files["letters"]),
                 "--limit", "40", "--out", str(path)]) == 0
    return path


def test_featurize_matches_library(feature_files, corpus_features):
    values, labels, n_levels = load_features(feature_files["digits"])
    assert np.array_equal(values, corpus_features["d_values"])
    assert np.array_equal(labels, corpus_features["d_labels"])
    assert n_levels == 16
    values, labels, _ = load_features(feature_files["letters"])
    assert np.array_equal(values, corpus_features["l_values"])


def test_featurize_transpose_override(feature_files, corpus_paths,
                                      corpus_features, tmp_path):
    out = tmp_path / "straight.ehfn"
    assert main(["featurize", "--images", corpus_paths["letters_images"],
                 "--labels", corpus_paths["letters_labels"],
                 "--transpose", "no", "--out", str(out)]) == 0
    values, _, _ = load_features(out)
    assert not np.array_equal(values, corpus_features["l_values"])


def test_fill_snapshot_counts(snapshot):
    mem = Hamr4D.load(snapshot)
    assert mem.dims == (64, 64, 16, 16)
    # 40 pairs, each touching 64x64 cells once
    assert int(mem.cells.sum()) == 40 * 64 * 64


def test_entropy_output(snapshot, capsys):
    assert main(["entropy", "--memory", str(snapshot)]) == 0
    printed = capsys.readouterr().out.strip()
    mem = Hamr4D.load(snapshot)
    assert printed == f"{mem.entropy():.12g}"
    assert float(printed) > 0


def test_recognize_line_format(snapshot, feature_files, capsys):
    assert main(["recognize", "--memory", str(snapshot),
                 "--a", str(feature_files["digits"]),
                 "--b", str(feature_files["letters"]),
                 "--xi", "4096"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5000
    first = lines[0].split("\t")
    assert first[0] == "0" and first[1] == "1"     # xi 4096 accepts all
    assert int(first[2]) >= 0 and float(first[3]) >= 0.0


def test_retrieve_prints_values(snapshot, feature_files, capsys):
    # index 0 is registered (fill order is file order), so searching with
    # relaxed xi should return something close; values line must parse
    rc = main(["retrieve", "--memory", str(snapshot),
               "--cue", str(feature_files["digits"]), "--index", "0",
               "--method", "st", "--samples", "16", "--seed", "3",
               "--xi", "64"])
    captured = capsys.readouterr()
    assert rc == 0
    values = [int(tok) for tok in captured.out.split()]
    assert len(values) == 64 and all(0 <= v < 16 for v in values)
    assert "evaluations" in captured.err


def test_retrieve_out_file_roundtrip(snapshot, feature_files, tmp_path,
                                     capsys):
    out1, out2 = tmp_path / "r1.ehfn", tmp_path / "r2.ehfn"
    argv = ["retrieve", "--memory", str(snapshot),
            "--cue", str(feature_files["digits"]), "--index", "2",
            "--method", "ss", "--samples", "8", "--budget", "20",
            "--seed", "11", "--xi", "64"]
    assert main(argv + ["--out", str(out1)]) == 0
    assert main(argv + ["--out", str(out2)]) == 0
    capsys.readouterr()
    assert out1.read_bytes() == out2.read_bytes()  # seeded, reproducible
    values, labels, n_levels = load_features(out1)
    assert values.shape == (1, 64) and n_levels == 16
    digit_labels = load_features(feature_files["digits"])[1]
    assert labels[0] == digit_labels[2]            # cue label carried over


def test_retrieve_failure_exit_code(feature_files, tmp_path, capsys):
    empty = tmp_path / "empty.eham"
    Hamr4D(64, 64, 16, 16).save(empty)
    rc = main(["retrieve", "--memory", str(empty),
               "--cue", str(feature_files["digits"]), "--index", "0"])
    captured = capsys.readouterr()
    assert rc == 1
    assert "retrieval failed" in captured.err
    assert captured.out == ""


def test_bad_index_and_missing_file_are_clean_errors(snapshot, feature_files,
                                                     capsys, tmp_path):
    rc = main(["retrieve", "--memory", str(snapshot),
               "--cue", str(feature_files["digits"]), "--index", "999999"])
    assert rc == 1
    assert "outside" in capsys.readouterr().err
    rc = main(["entropy", "--memory", str(tmp_path / "nope.eham")])
    assert rc == 1
    assert "eham:" in capsys.readouterr().err


def test_usage_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["retrieve", "--method", "teleport"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main([])
    capsys.readouterr()


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for word in ("featurize", "fill", "recognize", "retrieve", "entropy",
                 "experiment", "dump"):
        assert word in text


def test_dump_pgm(feature_files, tmp_path, capsys):
    out = tmp_path / "g.pgm"
    assert main(["dump", "--features", str(feature_files["digits"]),
                 "--index", "1", "--out", str(out)]) == 0
    data = out.read_bytes()
    assert data.startswith(b"P5\n8 8\n255\n") and len(data) == 11 + 64
    values = load_features(feature_files["digits"])[0][1]
    assert data[11:] == bytes((values * 17).astype(np.uint8))


def test_experiment_writes_csv(config_factory, tmp_path, capsys):
    conf = config_factory(
        tmp_path / "run.conf", pairs_per_class=20, test_cues_per_class=3,
        recognition_pairs_per_class=4, samples=8, budget=5,
        schedule=(100,), measure_time=False)
    out = tmp_path / "rows.csv"
    assert main(["experiment", "--config", str(conf),
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ("fold,method,direction,fill_percent,precision,"
                        "recall,accuracy,entropy,wall_time_s")
    # 2 presets + 3 methods x 2 directions = 8 fold rows, then 16 summary
    assert len(lines) == 1 + 8 + 16
    assert "wrote 24 rows" in capsys.readouterr().err
