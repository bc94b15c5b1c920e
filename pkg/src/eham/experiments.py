"""Paired-corpus experiments: class pairing, 70/20/10 fold partitions,
fill-percentage sweeps, recognition and retrieval metrics, CSV output.

A pair corpus joins a digit corpus and a letter corpus under a fixed class
bijection.  Each fold registers an increasing prefix of its remembering
split into a fresh memory and measures recognition (balanced positive and
negative pairs) or retrieval (held-out cues judged by a nearest-centroid
classifier on the retrieved side).
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .featurizer import (CentroidModel, LabeledSet, featurize_values,
                         fit_centroids, load_features, load_idx)
from .memory import Hamr4D, MemParams, PairCue, QuantizedFn
from .retrieval import (Direction, SearchConfig, retrieve_rs, retrieve_ss,
                        retrieve_st)

DATA_DIR_ENV = "EHAM_DATA_DIR"
CSV_HEADER = "fold,method,direction,fill_percent,precision,recall,accuracy,entropy,wall_time_s"

PRESETS: Dict[str, MemParams] = {
    "default": MemParams(),
    "operational": MemParams(iota=0.05, kappa=0.0, xi=32),
    "caption": MemParams(iota=0.05, kappa=32.0, xi=0),
}

_METHODS = {"rs": retrieve_rs, "st": retrieve_st, "ss": retrieve_ss}

# sub-stream tags keeping per-fold RNG consumers independent
_STREAM_REMEMBER = 0
_STREAM_NEGATIVES = 1
_STREAM_CUE = 2


@dataclass(frozen=True)
class ClassMap:
    """Bijection between source (digit) and target (letter) class ids."""

    pairs: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        srcs = [s for s, _ in self.pairs]
        tgts = [t for _, t in self.pairs]
        if not self.pairs:
            raise ValueError("class map must not be empty")
        if len(set(srcs)) != len(srcs) or len(set(tgts)) != len(tgts):
            raise ValueError("class map must be a bijection")

    @property
    def source_to_target(self) -> Dict[int, int]:
        return dict(self.pairs)

    @property
    def target_to_source(self) -> Dict[int, int]:
        return {t: s for s, t in self.pairs}


# digits 0..9 to the EMNIST Balanced ids of T O P B W Z M A L S
DEFAULT_CLASS_MAP = ClassMap(((0, 29), (1, 24), (2, 25), (3, 11), (4, 32),
                              (5, 35), (6, 22), (7, 10), (8, 21), (9, 28)))


@dataclass(frozen=True)
class Partition:
    """Pair ids of one fold's splits: 70% train, 20% remember, 10% test."""

    fold: int
    train: np.ndarray
    remember: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class MetricsRow:
    fold: object            # fold index, or "mean"/"sd" on summary rows
    method: str
    direction: str
    fill_percent: int
    precision: float
    recall: float
    accuracy: float
    entropy: float
    wall_time_s: float

    def csv_line(self) -> str:
        return (f"{self.fold},{self.method},{self.direction},"
                f"{self.fill_percent},{self.precision:.6f},"
                f"{self.recall:.6f},{self.accuracy:.6f},"
                f"{self.entropy:.6f},{self.wall_time_s:.3f}")


@dataclass
class ExperimentConfig:
    """Flat key=value experiment description; see load_config."""

    seed: int = 0
    folds: int = 1
    dims: Tuple[int, int, int, int] = (64, 64, 16, 16)
    cap: int = 65535
    schedule: Tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 100)
    samples: int = 128
    budget: int = 800
    methods: Tuple[str, ...] = ("rs", "st", "ss")
    directions: Tuple[str, ...] = ("a2b", "b2a")
    presets: Tuple[str, ...] = ("default", "operational")
    experiments: Tuple[str, ...] = ("recognition", "retrieval")
    pairs_per_class: int = 0
    test_cues_per_class: int = 0
    recognition_pairs_per_class: int = 0
    uniform_fallback: bool = False
    measure_time: bool = True
    digits_images: str = ""
    digits_labels: str = ""
    digits_features: str = ""
    letters_images: str = ""
    letters_labels: str = ""
    letters_features: str = ""
    digits_transpose: bool = False
    letters_transpose: bool = True
    class_map: ClassMap = DEFAULT_CLASS_MAP

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if not 1 <= self.folds <= 10:
            raise ValueError("folds must lie in [1, 10]")
        if len(self.dims) != 4 or any(d < 1 for d in self.dims):
            raise ValueError("dims must be four positive integers")
        if not self.schedule:
            raise ValueError("schedule must not be empty")
        for pct in self.schedule:
            if not 0 < pct <= 100:
                raise ValueError(
                    f"schedule percent {pct} outside (0, 100]")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        for name in self.methods:
            if name not in _METHODS:
                raise ValueError(f"unknown method {name!r}")
        for name in self.directions:
            Direction.parse(name)
        for name in self.presets:
            if name not in PRESETS:
                raise ValueError(f"unknown preset {name!r}")
        for name in self.experiments:
            if name not in ("recognition", "retrieval"):
                raise ValueError(f"unknown experiment {name!r}")


_BOOL_TOKENS = {"true": True, "yes": True, "1": True, "on": True,
                "false": False, "no": False, "0": False, "off": False}

_INT_KEYS = {"seed", "folds", "cap", "samples", "budget", "pairs_per_class",
             "test_cues_per_class", "recognition_pairs_per_class"}
_BOOL_KEYS = {"uniform_fallback", "measure_time", "digits_transpose",
              "letters_transpose"}
_PATH_KEYS = {"digits_images", "digits_labels", "digits_features",
              "letters_images", "letters_labels", "letters_features"}
_LIST_KEYS = {"methods", "directions", "presets", "experiments"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key=value format ('#' starts a comment)."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in _INT_KEYS:
            values[key] = int(val)
        elif key in _BOOL_KEYS:
            if val.lower() not in _BOOL_TOKENS:
                raise ValueError(f"config line {lineno}: bad boolean {val!r}")
            values[key] = _BOOL_TOKENS[val.lower()]
        elif key in _PATH_KEYS:
            values[key] = val
        elif key in _LIST_KEYS:
            values[key] = tuple(val.split())
        elif key == "dims":
            values[key] = tuple(int(tok) for tok in val.split())
        elif key == "schedule":
            values[key] = tuple(int(tok) for tok in val.split())
        elif key == "class_map":
            pairs = []
            for tok in val.split():
                src, _, tgt = tok.partition(":")
                pairs.append((int(src), int(tgt)))
            values[key] = ClassMap(tuple(pairs))
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _resolve(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(DATA_DIR_ENV)
    if base and not p.is_absolute():
        return Path(base) / p
    return p


# ----------------------------------------------------------------------
# pairing and partitioning


def _pair_arrays(d_values, d_labels, l_values, l_labels, class_map: ClassMap,
                 seed: int, per_class_cap: int = 0):
    """Seeded random matching per mapped class.  Returns value arrays for
    both sides plus the pair's source class, grouped by ascending class."""
    rng = np.random.default_rng(seed)
    a_parts, b_parts, cls_parts = [], [], []
    for src, tgt in sorted(class_map.pairs):
        d_idx = np.flatnonzero(d_labels == src)
        l_idx = np.flatnonzero(l_labels == tgt)
        if d_idx.size == 0 or l_idx.size == 0:
            raise ValueError(
                f"mapped class pair ({src}, {tgt}) has no samples")
        k = min(d_idx.size, l_idx.size)
        if per_class_cap > 0:
            k = min(k, per_class_cap)
        d_pick = d_idx[rng.permutation(d_idx.size)[:k]]
        l_pick = l_idx[rng.permutation(l_idx.size)[:k]]
        a_parts.append(d_values[d_pick])
        b_parts.append(l_values[l_pick])
        cls_parts.append(np.full(k, src, dtype=np.int64))
    return (np.concatenate(a_parts), np.concatenate(b_parts),
            np.concatenate(cls_parts))


def build_pairs(digits: LabeledSet, letters: LabeledSet,
                class_map: ClassMap = DEFAULT_CLASS_MAP, seed: int = 0):
    """Featurize both corpora and form per-class random matchings.

    Returns a list of (source function, target function, pair class); per
    mapped class the pair count is the smaller of the two class sizes.
    """
    a_vals, b_vals, classes = _pair_arrays(
        featurize_values(digits.images), digits.labels,
        featurize_values(letters.images), letters.labels, class_map, seed)
    n_levels = 16
    return [(QuantizedFn(a, n_levels), QuantizedFn(b, n_levels), int(c))
            for a, b, c in zip(a_vals, b_vals, classes)]


_N_CHUNKS = 10


def make_partitions(classes: np.ndarray, folds: int = 10,
                    seed: int = 0) -> List[Partition]:
    """Shuffle each class once into 10 chunks; fold f tests on chunk f,
    remembers chunks f+1 and f+2 (mod 10), trains on the rest.  Splits are
    therefore 70/20/10 and class-balanced within one sample."""
    if not 1 <= folds <= _N_CHUNKS:
        raise ValueError(f"folds must lie in [1, {_N_CHUNKS}]")
    classes = np.asarray(classes)
    rng = np.random.default_rng(seed)
    chunks_per_class = []
    for cls in np.unique(classes):
        idx = np.flatnonzero(classes == cls)
        perm = idx[rng.permutation(idx.size)]
        chunks_per_class.append(np.array_split(perm, _N_CHUNKS))
    partitions = []
    for f in range(folds):
        test_c = {f}
        rem_c = {(f + 1) % _N_CHUNKS, (f + 2) % _N_CHUNKS}
        buckets = {"train": [], "remember": [], "test": []}
        for chunks in chunks_per_class:
            for c, chunk in enumerate(chunks):
                if c in test_c:
                    buckets["test"].append(chunk)
                elif c in rem_c:
                    buckets["remember"].append(chunk)
                else:
                    buckets["train"].append(chunk)
        partitions.append(Partition(
            fold=f,
            train=np.concatenate(buckets["train"]),
            remember=np.concatenate(buckets["remember"]),
            test=np.concatenate(buckets["test"])))
    return partitions


# ----------------------------------------------------------------------
# per-fold state


@dataclass
class FoldRun:
    """Everything one fold's experiments need, prepared once."""

    fold: int
    config: ExperimentConfig
    a_values: np.ndarray
    b_values: np.ndarray
    classes: np.ndarray
    partition: Partition
    remember_order: np.ndarray
    model_a: CentroidModel
    model_b: CentroidModel

    @property
    def fold_seed(self) -> int:
        return self.config.seed + self.fold


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1, np.uint64)[0])


def _cap_per_class(ids: np.ndarray, classes: np.ndarray,
                   cap: int) -> np.ndarray:
    """First ``cap`` ids per class in the given order; all when cap <= 0."""
    if cap <= 0:
        return ids
    taken: Dict[int, int] = {}
    keep = []
    for pid in ids:
        c = int(classes[pid])
        if taken.get(c, 0) < cap:
            taken[c] = taken.get(c, 0) + 1
            keep.append(pid)
    return np.asarray(keep, dtype=ids.dtype)


def prepare_fold(a_values, b_values, classes, partition: Partition,
                 config: ExperimentConfig) -> FoldRun:
    fold_seed = config.seed + partition.fold
    rng = np.random.default_rng(
        np.random.SeedSequence((fold_seed, _STREAM_REMEMBER)))
    remember_order = partition.remember[rng.permutation(partition.remember.size)]
    n_levels_a, n_levels_b = config.dims[2], config.dims[3]
    train = partition.train
    model_a = fit_centroids(
        (QuantizedFn(a_values[i], n_levels_a), int(classes[i]))
        for i in train)
    mapped = config.class_map.source_to_target
    model_b = fit_centroids(
        (QuantizedFn(b_values[i], n_levels_b), mapped[int(classes[i])])
        for i in train)
    return FoldRun(partition.fold, config, a_values, b_values, classes,
                   partition, remember_order, model_a, model_b)


def _fill_target(total: int, pct: int) -> int:
    return (total * pct + 99) // 100


def _register_upto(run: FoldRun, mem: Hamr4D, registered: int,
                   target: int) -> int:
    n_levels_a, n_levels_b = run.config.dims[2], run.config.dims[3]
    for pid in run.remember_order[registered:target]:
        mem.register(PairCue(QuantizedFn(run.a_values[pid], n_levels_a),
                             QuantizedFn(run.b_values[pid], n_levels_b)))
    return target


def _check_schedule(schedule: Sequence[int]) -> List[int]:
    out = sorted(set(int(p) for p in schedule))
    for pct in out:
        if not 0 < pct <= 100:
            raise ValueError(f"schedule percent {pct} outside (0, 100]")
    return out


# ----------------------------------------------------------------------
# experiments


def recognition_experiment(run: FoldRun, params: MemParams,
                           schedule: Sequence[int],
                           preset_name: str = "custom") -> List[MetricsRow]:
    """Fill sweep measuring acceptance of a balanced mixture: positives are
    held-out test pairs, negatives join a digit and a letter from test
    pairs of non-corresponding classes."""
    config = run.config
    schedule = _check_schedule(schedule)
    n_levels_a, n_levels_b = config.dims[2], config.dims[3]
    pos_ids = _cap_per_class(run.partition.test, run.classes,
                             config.recognition_pairs_per_class)
    n_pos = pos_ids.size
    mem = Hamr4D(*config.dims, cap=config.cap)
    registered = 0
    rows = []
    for pct in schedule:
        t0 = time.perf_counter()
        registered = _register_upto(
            run, mem, registered, _fill_target(run.remember_order.size, pct))
        rng = np.random.default_rng(np.random.SeedSequence(
            (run.fold_seed, _STREAM_NEGATIVES, pct)))
        u = rng.integers(n_pos, size=n_pos)
        v = rng.integers(n_pos, size=n_pos)
        same = run.classes[pos_ids[u]] == run.classes[pos_ids[v]]
        while same.any():
            v[same] = rng.integers(n_pos, size=int(same.sum()))
            same = run.classes[pos_ids[u]] == run.classes[pos_ids[v]]
        tp = fp = 0
        for pid in pos_ids:
            cue = PairCue(QuantizedFn(run.a_values[pid], n_levels_a),
                          QuantizedFn(run.b_values[pid], n_levels_b))
            tp += mem.recognize(cue, params).accepted
        for du, lv in zip(pos_ids[u], pos_ids[v]):
            cue = PairCue(QuantizedFn(run.a_values[du], n_levels_a),
                          QuantizedFn(run.b_values[lv], n_levels_b))
            fp += mem.recognize(cue, params).accepted
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / n_pos
        accuracy = (tp + (n_pos - fp)) / (2 * n_pos)
        entropy = mem.entropy()
        wall = time.perf_counter() - t0 if config.measure_time else 0.0
        rows.append(MetricsRow(run.fold, f"recognition_{preset_name}", "-",
                               pct, precision, recall, accuracy, entropy,
                               wall))
    return rows


def retrieval_experiment(run: FoldRun, method: str, direction: Direction,
                         cfg: SearchConfig,
                         schedule: Sequence[int]) -> List[MetricsRow]:
    """Fill sweep retrieving partners for held-out cues; correctness judged
    by the target-side centroid classifier against the mapped class.
    Macro-averaged precision (failures excluded) and recall (failures
    count); accuracy is the plain fraction of correct answers."""
    config = run.config
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}")
    retrieve = _METHODS[method]
    schedule = _check_schedule(schedule)
    if direction is Direction.A_TO_B:
        cue_values, cue_levels = run.a_values, config.dims[2]
        model, mapped = run.model_b, config.class_map.source_to_target
    else:
        cue_values, cue_levels = run.b_values, config.dims[3]
        model, mapped = run.model_a, {s: s for s, _ in config.class_map.pairs}
    cue_ids = _cap_per_class(run.partition.test, run.classes,
                             config.test_cues_per_class)
    dir_flag = 0 if direction is Direction.A_TO_B else 1
    class_list = sorted(mapped)
    mem = Hamr4D(*config.dims, cap=config.cap)
    registered = 0
    rows = []
    for pct in schedule:
        t0 = time.perf_counter()
        registered = _register_upto(
            run, mem, registered, _fill_target(run.remember_order.size, pct))
        cues = {c: 0 for c in class_list}
        responses = {c: 0 for c in class_list}
        correct = {c: 0 for c in class_list}
        for pos, pid in enumerate(cue_ids):
            seed = _derive_seed(run.fold_seed, _STREAM_CUE, dir_flag, pct, pos)
            out = retrieve(mem, QuantizedFn(cue_values[pid], cue_levels),
                           direction, replace(cfg, rng_seed=seed))
            c = int(run.classes[pid])
            cues[c] += 1
            if out.object is None:
                continue
            responses[c] += 1
            pred = int(model.classify_batch(out.object.values[None, :])[0])
            if pred == mapped[c]:
                correct[c] += 1
        precision = float(np.mean([
            correct[c] / responses[c] if responses[c] else 0.0
            for c in class_list]))
        recall = float(np.mean([
            correct[c] / cues[c] if cues[c] else 0.0 for c in class_list]))
        total_cues = sum(cues.values())
        accuracy = sum(correct.values()) / total_cues if total_cues else 0.0
        entropy = mem.entropy()
        wall = time.perf_counter() - t0 if config.measure_time else 0.0
        rows.append(MetricsRow(run.fold, method, direction.value, pct,
                               precision, recall, accuracy, entropy, wall))
    return rows


def run_fold(a_values, b_values, classes, partition: Partition,
             config: ExperimentConfig) -> List[MetricsRow]:
    run = prepare_fold(a_values, b_values, classes, partition, config)
    rows: List[MetricsRow] = []
    if "recognition" in config.experiments:
        for preset in config.presets:
            rows.extend(recognition_experiment(run, PRESETS[preset],
                                               config.schedule, preset))
    if "retrieval" in config.experiments:
        cfg = SearchConfig(n_samples=config.samples,
                           descent_budget=config.budget,
                           uniform_fallback=config.uniform_fallback)
        for method in config.methods:
            for name in config.directions:
                rows.extend(retrieval_experiment(
                    run, method, Direction.parse(name), cfg, config.schedule))
    return rows


# ----------------------------------------------------------------------
# corpus loading and cross validation


def _load_side(config: ExperimentConfig, side: str):
    """(values, labels) for one corpus side, from a feature cache when
    given, else by featurizing the IDX pair."""
    features = getattr(config, f"{side}_features")
    if features:
        values, labels, _ = load_features(_resolve(features))
        return values, labels
    images = getattr(config, f"{side}_images")
    labels_path = getattr(config, f"{side}_labels")
    if not images or not labels_path:
        raise ValueError(
            f"config needs {side}_features or both {side}_images "
            f"and {side}_labels")
    labeled = load_idx(_resolve(images), _resolve(labels_path),
                       transpose=getattr(config, f"{side}_transpose"))
    return featurize_values(labeled.images), labeled.labels


def summarize(rows: Sequence[MetricsRow]) -> List[MetricsRow]:
    """Mean and population-SD rows over folds per (method, direction,
    fill); ordered as first encountered."""
    groups: Dict[tuple, List[MetricsRow]] = {}
    for row in rows:
        groups.setdefault((row.method, row.direction, row.fill_percent),
                          []).append(row)
    out = []
    for (method, direction, pct), members in groups.items():
        cols = {name: np.array([getattr(r, name) for r in members])
                for name in ("precision", "recall", "accuracy", "entropy",
                             "wall_time_s")}
        out.append(MetricsRow("mean", method, direction, pct,
                              *(float(cols[n].mean()) for n in cols)))
        out.append(MetricsRow("sd", method, direction, pct,
                              *(float(cols[n].std()) for n in cols)))
    return out


def cross_validate(config: ExperimentConfig,
                   jobs: int = 1) -> Tuple[List[MetricsRow], List[MetricsRow]]:
    """Run every fold; returns (per-fold rows, mean/sd summary rows)."""
    d_values, d_labels = _load_side(config, "digits")
    l_values, l_labels = _load_side(config, "letters")
    a_values, b_values, classes = _pair_arrays(
        d_values, d_labels, l_values, l_labels, config.class_map,
        config.seed, config.pairs_per_class)
    partitions = make_partitions(classes, config.folds, config.seed)
    if jobs > 1 and config.folds > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda part: run_fold(a_values, b_values, classes, part,
                                      config),
                partitions))
    else:
        results = [run_fold(a_values, b_values, classes, part, config)
                   for part in partitions]
    rows = [row for fold_rows in results for row in fold_rows]
    return rows, summarize(rows)


def write_csv(rows: Sequence[MetricsRow], path) -> None:
    lines = [CSV_HEADER]
    lines.extend(row.csv_line() for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")
