"""Shared fixtures: the synthetic paired corpus and config-file factory."""

from pathlib import Path

import pytest

import synth


@pytest.fixture(scope="session")
def corpus_paths(tmp_path_factory):
    """IDX files of the synthetic desk-scale corpus (500 samples/class)."""
    directory = tmp_path_factory.mktemp("corpus")
    return synth.write_corpus(directory, per_class=500, seed=9)


@pytest.fixture(scope="session")
def corpus_features(corpus_paths):
    """Featurized value/label arrays for both corpus sides."""
    from eham.featurizer import featurize_values, load_idx
    digits = load_idx(corpus_paths["digits_images"],
                      corpus_paths["digits_labels"])
    letters = load_idx(corpus_paths["letters_images"],
                       corpus_paths["letters_labels"], transpose=True)
    return {
        "d_values": featurize_values(digits.images),
        "d_labels": digits.labels,
        "l_values": featurize_values(letters.images),
        "l_labels": letters.labels,
    }


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return " ".join(str(v) for v in value)
    return str(value)


@pytest.fixture(scope="session")
def config_factory(corpus_paths):
    """Writes key=value config files pointing at the synthetic corpus."""

    def make(path, **overrides):
        base = {
            "seed": 0,
            "folds": 1,
            "dims": (64, 64, 16, 16),
            "cap": 65535,
            "schedule": (1, 2, 4, 8, 16, 32, 64, 100),
            "samples": 32,
            "budget": 100,
            "digits_images": corpus_paths["digits_images"],
            "digits_labels": corpus_paths["digits_labels"],
            "letters_images": corpus_paths["letters_images"],
            "letters_labels": corpus_paths["letters_labels"],
            "digits_transpose": False,
            "letters_transpose": True,
        }
        base.update(overrides)
        text = "\n".join(f"{k} = {_format_value(v)}" for k, v in base.items())
        Path(path).write_text(text + "\n")
        return path

    return make
