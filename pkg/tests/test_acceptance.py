"""Acceptance gate: one test per shipping criterion, each printing a
single [ACCEPTANCE] pass/fail line.  Run with `pytest tests/test_acceptance.py
-v -s` to see the lines as they complete."""

import math
import os
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

import reference as ref
from eham import (Direction, Hamr4D, MemParams, PairCue, QuantizedFn,
                  SearchConfig, WeightedPlane, reduce, retrieve_rs,
                  retrieve_ss, retrieve_st, sample_plane)
from eham.experiments import (DATA_DIR_ENV, ExperimentConfig, cross_validate,
                              load_config, write_csv)
from eham.featurizer import (N_LEVELS, featurize_values, fit_centroids,
                             load_idx)
from test_memory import random_memory
from test_retrieval import _replay_candidates


@contextmanager
def report(num, name):
    try:
        yield
    except pytest.skip.Exception as exc:
        print(f"[ACCEPTANCE] criterion {num} ({name}): SKIP ({exc})",
              flush=True)
        raise
    except BaseException:
        print(f"[ACCEPTANCE] criterion {num} ({name}): FAIL", flush=True)
        raise
    print(f"[ACCEPTANCE] criterion {num} ({name}): PASS", flush=True)


# ----------------------------------------------------------------------
# criterion 1: engine operations match brute-force recomputation


def test_criterion_1_oracle_equivalence():
    with report(1, "oracle equivalence"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(100)
        for _ in range(200):
            mem, cells, _ = random_memory(rng, dims=(3, 3, 4, 4), cap=255,
                                          n_pairs=int(rng.integers(0, 11)))
            n, m, p, q = mem.dims
            assert mem.cells.tolist() == cells          # register, exact
            fa = QuantizedFn(rng.integers(0, p, size=n), p,
                             rng.integers(0, 3, size=n))
            fb = QuantizedFn(rng.integers(0, q, size=m), q,
                             rng.integers(0, 3, size=m))
            params = MemParams(iota=float(rng.choice([0.0, 0.5, 1.0])),
                               kappa=float(rng.choice([0.0, 0.5, 2.0])),
                               xi=int(rng.integers(0, 10)))
            got = mem.recognize(PairCue(fa, fb), params)
            want = ref.recognize(cells, fa.values.tolist(),
                                 fb.values.tolist(), fa.weights.tolist(),
                                 fb.weights.tolist(), params.iota,
                                 params.kappa, params.xi)
            assert got.accepted == want[0]
            assert got.violations == want[1]            # integer, exact
            assert got.rho == pytest.approx(want[2], abs=1e-9)
            i, j = int(rng.integers(0, n)), int(rng.integers(0, m))
            assert mem.omega_pair(i, j) == pytest.approx(
                ref.omega_pair(cells, i, j), abs=1e-9)
            assert mem.omega_mean() == pytest.approx(
                ref.omega_mean(cells), abs=1e-9)
            assert mem.entropy() == pytest.approx(ref.entropy(cells),
                                                  abs=1e-9)
            plane = reduce(mem, fa, Direction.A_TO_B)
            want_plane = ref.reduce_plane(cells, fa.values.tolist(),
                                          fa.weights.tolist(), "a2b")
            assert np.allclose(plane.cells, want_plane, atol=1e-9)
            back = reduce(mem, fb, Direction.B_TO_A)
            want_back = ref.reduce_plane(cells, fb.values.tolist(),
                                         fb.weights.tolist(), "b2a")
            assert np.allclose(back.cells, want_back, atol=1e-9)
        assert time.perf_counter() - t0 < 10.0


# ----------------------------------------------------------------------
# criterion 2: a lone registered pair is always recovered exactly


def test_criterion_2_single_pair_retrieval():
    with report(2, "single-pair retrieval"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(200)
        for trial in range(100):
            n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            p, q = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            fa = QuantizedFn(rng.integers(0, p, size=n), p)
            fb = QuantizedFn(rng.integers(0, q, size=m), q)
            mem = Hamr4D(n, m, p, q)
            mem.register(PairCue(fa, fb))
            cfg = SearchConfig(n_samples=int(rng.integers(1, 9)),
                               descent_budget=int(rng.integers(0, 21)),
                               rng_seed=trial)
            for method in (retrieve_rs, retrieve_st, retrieve_ss):
                out = method(mem, fa, Direction.A_TO_B, cfg)
                assert out.object == fb and out.distance == 0.0
                out = method(mem, fb, Direction.B_TO_A, cfg)
                assert out.object == fa and out.distance == 0.0
        assert time.perf_counter() - t0 < 5.0


# ----------------------------------------------------------------------
# criterion 3: sampling frequencies track column distributions


def test_criterion_3_sampling_fidelity():
    with report(3, "sampling fidelity"):
        draws = 10_000
        z99 = 2.5758                       # two-sided 99% normal quantile
        plane = WeightedPlane([[1.0, 3.0, 0.0, 0.0],
                               [2.0, 2.0, 4.0, 0.0],
                               [0.0, 0.0, 5.0, 1.0],
                               [1.0, 1.0, 1.0, 1.0]])
        rng = np.random.default_rng(300)
        values = np.stack([sample_plane(plane, rng).values
                           for _ in range(draws)])
        totals = plane.cells.sum(axis=1)
        for j in range(plane.n_args):
            for level in range(plane.n_levels):
                prob = plane.cells[j, level] / totals[j]
                freq = float((values[:, j] == level).mean())
                if prob in (0.0, 1.0):
                    assert freq == prob
                    continue
                half = z99 * math.sqrt(prob * (1.0 - prob) / draws)
                assert abs(freq - prob) <= half, (
                    f"column {j} level {level}: {freq:.4f} vs {prob:.4f} "
                    f"± {half:.4f}")


# ----------------------------------------------------------------------
# desk-scale experiment shared by criteria 4 and 6
#
# desk scale: 1 fold over the 500-pairs-per-class synthetic corpus, whose
# 70/20/10 split remembers 100 and tests 50 pairs per class, with
# samples=32, budget=100, and the two fill points of the reference
# protocol (32% and 100%)


@pytest.fixture(scope="module")
def desk_run(config_factory, tmp_path_factory):
    path = tmp_path_factory.mktemp("acceptance") / "desk.conf"
    config = load_config(config_factory(path, schedule=(32, 100)))
    t0 = time.perf_counter()
    rows, _ = cross_validate(config)
    return rows, time.perf_counter() - t0


def test_criterion_4_ordering_trend(desk_run):
    with report(4, "retrieval ordering trend"):
        rows, elapsed = desk_run
        for direction in ("a2b", "b2a"):
            mean = {}
            for method in ("rs", "st", "ss"):
                accs = [r.accuracy for r in rows
                        if r.method == method and r.direction == direction]
                assert len(accs) == 2      # the 32% and 100% fill points
                mean[method] = float(np.mean(accs))
            assert mean["ss"] >= mean["st"] >= mean["rs"] > 0.10, (
                f"{direction}: {mean}")
            assert mean["st"] - mean["rs"] >= 0.05, f"{direction}: {mean}"
        assert elapsed < 900.0


# ----------------------------------------------------------------------
# criterion 5: full-scale band on the real corpora, when present


_REAL_FILES = {
    "digits_images": "train-images-idx3-ubyte.gz",
    "digits_labels": "train-labels-idx1-ubyte.gz",
    "letters_images": "emnist-balanced-train-images-idx3-ubyte.gz",
    "letters_labels": "emnist-balanced-train-labels-idx1-ubyte.gz",
}


def _real_corpus_paths():
    base = os.environ.get(DATA_DIR_ENV)
    if not base:
        return None
    found = {}
    for key, name in _REAL_FILES.items():
        for candidate in (Path(base) / name, Path(base) / name[:-3]):
            if candidate.exists():
                found[key] = str(candidate)
                break
        else:
            return None
    return found


def test_criterion_5_full_scale_band():
    with report(5, "full-scale band"):
        paths = _real_corpus_paths()
        if paths is None:
            pytest.skip(f"set {DATA_DIR_ENV} to a directory holding "
                        f"{', '.join(_REAL_FILES.values())}")
        digits = load_idx(paths["digits_images"], paths["digits_labels"])
        letters = load_idx(paths["letters_images"], paths["letters_labels"],
                           transpose=True)
        # the band is non-binding when the scoring classifier is weak
        rng = np.random.default_rng(0)
        values, labels = featurize_values(digits.images), digits.labels
        idx = rng.permutation(len(labels))
        cut = int(0.8 * len(idx))
        model = fit_centroids(
            (QuantizedFn(values[i], N_LEVELS), int(labels[i]))
            for i in idx[:cut])
        floor = float((model.classify_batch(values[idx[cut:]])
                       == labels[idx[cut:]]).mean())
        if floor < 0.80:
            pytest.skip(f"classifier floor {floor:.3f} below 0.80, "
                        "band declared non-binding")
        config = ExperimentConfig(
            folds=1, schedule=(32, 100), samples=32, budget=100,
            experiments=("retrieval",), **paths)
        rows, _ = cross_validate(config)

        def row(method, direction, pct):
            (r,) = [r for r in rows if r.method == method
                    and r.direction == direction and r.fill_percent == pct]
            return r

        for direction, prec, rec in (("a2b", 0.44, 0.40),
                                     ("b2a", 0.35, 0.34)):
            r = row("rs", direction, 32)
            assert abs(r.precision - prec) <= 0.15, (direction, r)
            assert abs(r.recall - rec) <= 0.15, (direction, r)
        for direction in ("a2b", "b2a"):
            assert row("ss", direction, 100).accuracy >= 0.45


# ----------------------------------------------------------------------
# criterion 6: recognition precision/recall bands at full fill


def test_criterion_6_recognition_trend(desk_run):
    with report(6, "recognition trend"):
        rows, _ = desk_run

        def full_fill(preset):
            (r,) = [r for r in rows if r.method == f"recognition_{preset}"
                    and r.fill_percent == 100]
            return r

        strict = full_fill("default")
        assert strict.precision - strict.recall >= 0.2, strict
        operational = full_fill("operational")
        assert 0.5 <= operational.precision <= 0.9, operational
        assert 0.5 <= operational.recall <= 0.9, operational


# ----------------------------------------------------------------------
# criterion 7: invariance properties, 100+ randomized instances each


def test_criterion_7_invariance_suite():
    with report(7, "invariance suite"):
        rng = np.random.default_rng(700)

        # recognition scaling invariance
        for _ in range(100):
            mem, _, _ = random_memory(rng, n_pairs=int(rng.integers(0, 8)))
            n, m, p, q = mem.dims
            fa = QuantizedFn(rng.integers(0, p, size=n), p,
                             rng.integers(0, 4, size=n))
            fb = QuantizedFn(rng.integers(0, q, size=m), q,
                             rng.integers(0, 4, size=m))
            c = int(rng.integers(2, 9))
            params = MemParams(iota=float(rng.choice([0.0, 0.7])),
                               kappa=float(rng.choice([0.0, 1.0])),
                               xi=int(rng.integers(0, 5)))
            base = mem.recognize(PairCue(fa, fb), params)
            scaled = mem.recognize(
                PairCue(QuantizedFn(fa.values, p, fa.weights * c),
                        QuantizedFn(fb.values, q, fb.weights * c)), params)
            assert base == scaled

        # register commutativity below the cap
        for _ in range(100):
            n, m, p, q = (int(rng.integers(1, 4)) for _ in range(4))
            pairs = [PairCue(QuantizedFn(rng.integers(0, p, size=n), p,
                                         rng.integers(1, 3, size=n)),
                             QuantizedFn(rng.integers(0, q, size=m), q,
                                         rng.integers(1, 3, size=m)))
                     for _ in range(int(rng.integers(2, 7)))]
            forward, backward = (Hamr4D(n, m, p, q, cap=100_000)
                                 for _ in range(2))
            for pair in pairs:
                forward.register(pair)
            for pair in reversed(pairs):
                backward.register(pair)
            assert np.array_equal(forward.cells, backward.cells)

        # descent monotonicity: searching never worsens sample-and-test
        checked = 0
        while checked < 100:
            mem, _, _ = random_memory(rng, dims=(3, 3, 4, 4), cap=255,
                                      n_pairs=int(rng.integers(2, 10)))
            cue = QuantizedFn(rng.integers(0, 4, size=3), 4)
            cfg = SearchConfig(n_samples=4,
                               descent_budget=int(rng.integers(1, 30)),
                               rng_seed=int(rng.integers(1 << 30)))
            st = retrieve_st(mem, cue, Direction.A_TO_B, cfg)
            if st.object is None:
                continue
            ss = retrieve_ss(mem, cue, Direction.A_TO_B, cfg)
            assert ss.distance <= st.distance
            checked += 1

        # argmin contract: sample-and-test returns the earliest minimum
        checked = 0
        while checked < 100:
            mem, cells, _ = random_memory(rng, dims=(3, 3, 4, 4), cap=255,
                                          n_pairs=int(rng.integers(2, 10)))
            cue = QuantizedFn(rng.integers(0, 4, size=3), 4)
            cfg = SearchConfig(n_samples=6,
                               rng_seed=int(rng.integers(1 << 30)))
            out = retrieve_st(mem, cue, Direction.A_TO_B, cfg)
            if out.object is None:
                continue
            cands = _replay_candidates(mem, cue, Direction.A_TO_B, cfg)
            dists = []
            for cand in cands:
                back = ref.reduce_plane(cells, cand.values.tolist(),
                                        cand.weights.tolist(), "b2a")
                dists.append(ref.dist(back, cue.values.tolist(),
                                      cue.weights.tolist(), 0.0, 0.0, 0))
            chosen = [i for i, c in enumerate(cands) if c == out.object]
            assert chosen, "returned object not among the candidates"
            best = min(dists)
            # oracle recomputes distances in a different summation order,
            # so near-ties may flip; demand exactness only off ties
            assert dists[chosen[0]] <= best + 1e-9
            assert out.distance == pytest.approx(dists[chosen[0]], abs=1e-9)
            if sum(d <= best + 1e-6 for d in dists) == 1:
                assert chosen[0] == dists.index(best)
            checked += 1


# ----------------------------------------------------------------------
# criterion 8: end-to-end byte determinism


def test_criterion_8_determinism(config_factory, tmp_path):
    with report(8, "end-to-end determinism"):
        config = load_config(config_factory(
            tmp_path / "det.conf", schedule=(32, 100), measure_time=False))
        outputs = []
        for run in range(2):
            rows, summary = cross_validate(config)
            path = tmp_path / f"run{run}.csv"
            write_csv(list(rows) + list(summary), path)
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]
