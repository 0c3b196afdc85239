"""Datasets, stratified nested cross-validation, grid search and report tables."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import accuracy, log_loss
from .pipelines import DEFAULT_GRIDS, DEFAULT_SETTINGS, MODEL_KINDS, default_representation, make_estimator
from .smiles_core import SmilesError, parse_smiles
from .splits import fold_indices, stratified_assignment

log = logging.getLogger(__name__)

MAX_REJECT_FRACTION = 0.10


class IngestError(ValueError):
    pass


class LeakageError(AssertionError):
    pass


@dataclass(frozen=True)
class Record:
    smiles: str
    label: int
    id: str


@dataclass
class Dataset:
    name: str
    records: list[Record]
    quarantined: list[tuple[int, str, str]] = field(default_factory=list)

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise IngestError("record ids are not unique")
        present = {r.label for r in self.records}
        if present != {0, 1}:
            raise IngestError(f"dataset {self.name!r} needs both classes, found {sorted(present)}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def smiles(self) -> list[str]:
        return [r.smiles for r in self.records]

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @classmethod
    def from_pairs(cls, name: str, pairs: Iterable[tuple[str, int]]) -> "Dataset":
        return cls(name, [Record(s, int(y), str(i)) for i, (s, y) in enumerate(pairs, start=1)])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "smiles", "label"])
            for r in self.records:
                w.writerow([r.id, r.smiles, r.label])


def _read_rows(path: Path, fmt: str) -> list[tuple[int, dict]]:
    text = path.read_text(encoding="utf-8")
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if "smiles" not in fields or "label" not in fields:
            raise IngestError(f"{path}: CSV header must contain 'smiles' and 'label', got {fields}")
        return [(n, {k.strip(): (v or "").strip() for k, v in row.items() if k}) for n, row in enumerate(reader, start=2)]
    rows = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) < 2:
            raise IngestError(f"{path}: row {n} does not have two tab-separated columns")
        if n == 1 and parts[1].strip().lower() == "label":
            continue
        rows.append((n, {"smiles": parts[0].strip(), "label": parts[1].strip()}))
    return rows


def ingest(path: str | Path, fmt: str | None = None, quarantine: str | Path | None = None,
           name: str | None = None) -> Dataset:
    """Load a labelled SMILES file.

    Rows whose SMILES do not parse are quarantined (and written to
    ``quarantine`` when given); a bad label is a hard format error.
    """
    path = Path(path)
    fmt = fmt or ("tsv" if path.suffix.lower() in (".tsv", ".txt") else "csv")
    if fmt not in ("csv", "tsv"):
        raise IngestError(f"unknown format {fmt!r}")
    rows = _read_rows(path, fmt)
    records: list[Record] = []
    rejects: list[tuple[int, str, str]] = []
    for n, row in rows:
        label = row.get("label", "")
        if label not in ("0", "1"):
            raise IngestError(f"{path}: row {n}: label must be 0 or 1, got {label!r}")
        smiles = row.get("smiles", "")
        try:
            parse_smiles(smiles)
        except SmilesError as exc:
            rejects.append((n, smiles, str(exc.diagnostic)))
            continue
        rid = row.get("id") or str(n)
        records.append(Record(smiles, int(label), rid))
    if quarantine is not None:
        with open(quarantine, "w", encoding="utf-8") as fh:
            for n, smiles, diag in rejects:
                fh.write(f"{n}\t{smiles}\t{diag}\n")
    total = len(records) + len(rejects)
    if total == 0:
        raise IngestError(f"{path}: no data rows")
    if len(rejects) > MAX_REJECT_FRACTION * total:
        raise IngestError(f"{path}: {len(rejects)} of {total} rows failed to parse; wrong format?")
    return Dataset(name or path.stem, records, rejects)


# --------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: np.ndarray
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        return fold_indices(self.assignment, fold)


def stratified_folds(dataset: Dataset | Sequence[int], k: int, seed: int) -> FoldPlan:
    labels = dataset.labels if isinstance(dataset, Dataset) else np.asarray(dataset)
    return FoldPlan(k, stratified_assignment(labels, k, seed), seed)


def unit_seed(*parts: int) -> int:
    """Seed for one work unit, derived only from the master seed and the unit's coordinates."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def check_disjoint(train_ids: Iterable[str], test_ids: Iterable[str]) -> None:
    overlap = set(train_ids) & set(test_ids)
    if overlap:
        raise LeakageError(f"{len(overlap)} record(s) in both training and test split, e.g. {sorted(overlap)[:3]}")


# --------------------------------------------------------------------------
# grids and config


@dataclass(frozen=True)
class HyperGrid:
    kind: str
    params: dict[str, list]
    inner_k: int = 5

    def __post_init__(self):
        if self.inner_k < 2:
            raise ValueError("inner_k must be >= 2")
        if any(len(v) == 0 for v in self.params.values()):
            raise ValueError("grid axes must be nonempty")

    def points(self) -> list[dict]:
        keys = list(self.params)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.params[k] for k in keys))]


def _coerce(value: str):
    v = value.strip()
    low = v.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    if " " in v:
        return tuple(_coerce(x) for x in v.split())
    return v


def parse_config(text: str) -> dict[str, list]:
    """Flat ``key = value`` file. Comma-separated values make a grid axis; ``#`` starts a comment."""
    out: dict[str, list] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = [_coerce(v) for v in value.split(",")]
    return out


def build_grid(kind: str, config: dict[str, list]) -> tuple[HyperGrid, dict]:
    """Split a parsed config into a hyper-parameter grid and fixed settings.

    Keys with several values become grid axes; a model's default grid is
    used for axes the config does not mention.
    """
    settings = {k: v[0] for k, v in config.items() if len(v) == 1}
    axes = {k: v for k, v in config.items() if len(v) > 1}
    for k, v in DEFAULT_GRIDS.get(kind, {}).items():
        if k not in config:
            axes[k] = list(v)
    inner_k = int(settings.get("inner_k", DEFAULT_SETTINGS["inner_k"]))
    return HyperGrid(kind, axes, inner_k), settings


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


# --------------------------------------------------------------------------
# nested cross-validation


@dataclass
class FoldResult:
    fold: int
    status: str
    params: dict
    logloss: float | None = None
    accuracy: float | None = None
    inner_scores: list[float] = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0
    runtime: float = 0.0
    error: str | None = None
    test_index: list[int] = field(default_factory=list)
    model: object = field(default=None, repr=False, compare=False)  # refit model, only with keep_models

    def to_json(self) -> str:
        record = {k: v for k, v in self.__dict__.items() if k != "model"}
        return json.dumps(record, sort_keys=True, default=str)


@dataclass
class EvalRow:
    dataset: str
    model: str
    representation: str
    folds: list[FoldResult]
    seed: int = 0
    config_hash: str = ""
    runtime: float = 0.0

    @property
    def scores(self) -> list[float]:
        return [f.logloss for f in self.folds if f.status == "ok"]

    @property
    def failed(self) -> int:
        return sum(1 for f in self.folds if f.status != "ok")

    @property
    def mean(self) -> float | None:
        return float(np.mean(self.scores)) if self.scores and not self.failed else None

    @property
    def std(self) -> float | None:
        return float(np.std(self.scores)) if self.scores and not self.failed else None

    @property
    def mean_accuracy(self) -> float | None:
        accs = [f.accuracy for f in self.folds if f.status == "ok"]
        return float(np.mean(accs)) if accs and not self.failed else None

    @property
    def selected_params(self) -> list[dict]:
        return [f.params for f in self.folds]


def _inner_k(labels: np.ndarray, requested: int) -> int:
    smaller = int(np.bincount(labels, minlength=2).min())
    k = requested if smaller >= 25 else min(requested, 3)
    return max(2, min(k, smaller))


def _fit_predict(kind, settings, representation, seed, tr_smiles, tr_y, te_smiles):
    model = make_estimator(kind, settings, representation, seed)
    model.fit(tr_smiles, tr_y)
    return model.predict_proba(te_smiles), model


def run_outer_fold(dataset: Dataset, kind: str, grid: HyperGrid, settings: dict, representation: str,
                   seed: int, fold: int, train_idx: np.ndarray, test_idx: np.ndarray,
                   keep_model: bool = False) -> FoldResult:
    """Select hyper-parameters on inner folds of the outer-train split, refit, score the outer test split."""
    t0 = time.perf_counter()
    ids = dataset.ids
    check_disjoint((ids[i] for i in train_idx), (ids[i] for i in test_idx))
    smiles = dataset.smiles
    y = dataset.labels
    tr_s = [smiles[i] for i in train_idx]
    tr_y = y[train_idx]
    points = grid.points() or [{}]
    inner_scores: list[float] = []
    if len(points) > 1:
        k = _inner_k(tr_y, grid.inner_k)
        inner = stratified_assignment(tr_y, k, unit_seed(seed, fold, 1_000_003))
        for gi, point in enumerate(points):
            losses = []
            for f in range(k):
                a, b = fold_indices(inner, f)
                p, _ = _fit_predict(kind, {**settings, **point}, representation, unit_seed(seed, fold, gi, f + 1),
                                    [tr_s[i] for i in a], tr_y[a], [tr_s[i] for i in b])
                losses.append(log_loss(p, tr_y[b]))
            inner_scores.append(float(np.mean(losses)))
        best = int(np.argmin(inner_scores))  # first grid point on ties
    else:
        best = 0
    chosen = points[best]
    p, model = _fit_predict(kind, {**settings, **chosen}, representation, unit_seed(seed, fold, best, 0),
                            tr_s, tr_y, [smiles[i] for i in test_idx])
    y_te = y[test_idx]
    return FoldResult(fold, "ok", chosen, log_loss(p, y_te), accuracy(p, y_te), inner_scores,
                      len(train_idx), len(test_idx), time.perf_counter() - t0, None,
                      [int(i) for i in test_idx], model if keep_model else None)


def nested_cv(dataset: Dataset, kind: str, grid: HyperGrid | None = None, settings: dict | None = None,
              seed: int = 0, representation: str | None = None, keep_models: bool = False) -> EvalRow:
    """Outer stratified k-fold with an inner grid search per outer fold.

    Every outer fold and grid point draws its randomness from its own
    seed, so the folds could be run in any order with the same result.
    With ``keep_models`` each fold result also holds its fitted model.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    settings = dict(settings or {})
    grid = grid or HyperGrid(kind, dict(DEFAULT_GRIDS[kind]), int(settings.get("inner_k", 5)))
    representation = representation or default_representation(kind)
    outer_k = int(settings.get("outer_k", DEFAULT_SETTINGS["outer_k"]))
    plan = stratified_folds(dataset, outer_k, seed)
    t0 = time.perf_counter()

    def unit(fold: int) -> FoldResult:
        tr, te = plan.split(fold)
        try:
            return run_outer_fold(dataset, kind, grid, settings, representation, seed, fold, tr, te, keep_models)
        except LeakageError:
            raise
        except Exception as exc:  # one failed fold must not sink the run
            log.warning("fold %d of %s/%s failed: %s", fold, dataset.name, kind, exc)
            return FoldResult(fold, "failed", {}, n_train=len(tr), n_test=len(te), error=f"{type(exc).__name__}: {exc}",
                              test_index=[int(i) for i in te])

    folds = [unit(f) for f in range(outer_k)]
    cfg = {"kind": kind, "grid": grid.params, "settings": settings, "representation": representation}
    return EvalRow(dataset.name, kind, representation, list(folds), seed, config_hash(cfg), time.perf_counter() - t0)


# --------------------------------------------------------------------------
# reports

_DASH = "—"
REPORT_COLUMNS = ["dataset", "representation", "model", "mean_logloss", "std_logloss", "mean_accuracy",
                  "n_folds", "n_failed", "fold_logloss", "seed", "config_hash"]


def format_cell(mean: float | None, std: float | None) -> str:
    if mean is None or std is None:
        return _DASH
    return f"{mean:.3f}±{std:.3f}"


@dataclass
class ReportRow:
    """The columns of one report line; rebuilt from CSV or taken from an :class:`EvalRow`."""

    dataset: str
    representation: str
    model: str
    mean: float | None
    std: float | None
    mean_accuracy: float | None
    n_folds: int
    n_failed: int
    fold_logloss: list[float | None]
    seed: int
    config_hash: str

    @classmethod
    def from_eval(cls, row: EvalRow) -> "ReportRow":
        return cls(row.dataset, row.representation, row.model, row.mean, row.std, row.mean_accuracy,
                   len(row.folds), row.failed, [f.logloss for f in row.folds], row.seed, row.config_hash)


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def _parse_num(s: str) -> float | None:
    return None if s == "" else float(s)


def report(rows: Sequence[EvalRow | ReportRow], fmt: str = "markdown") -> str:
    """Table with one line per (representation, model) and one column per dataset."""
    if not rows:
        raise ValueError("nothing to report")
    rr = [r if isinstance(r, ReportRow) else ReportRow.from_eval(r) for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rr:
            w.writerow([r.dataset, r.representation, r.model, _num(r.mean), _num(r.std), _num(r.mean_accuracy),
                        r.n_folds, r.n_failed, ";".join(_num(x) for x in r.fold_logloss), r.seed, r.config_hash])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown report format {fmt!r}")

    datasets = list(dict.fromkeys(r.dataset for r in rr))
    lines_keys = list(dict.fromkeys((r.representation, r.model) for r in rr))
    lines_keys.sort(key=lambda k: k[0])  # stable: model order within a representation is kept
    cell = {(r.representation, r.model, r.dataset): r for r in rr}
    best = {}
    for d in datasets:
        scored = [r for r in rr if r.dataset == d and r.mean is not None]
        if scored:
            best[d] = min(r.mean for r in scored)
    out = ["| representation | model | " + " | ".join(datasets) + " |",
           "|---|---|" + "---|" * len(datasets)]
    for rep, model in lines_keys:
        cells = []
        for d in datasets:
            r = cell.get((rep, model, d))
            if r is None:
                cells.append("")
                continue
            text = format_cell(r.mean, r.std)
            if r.mean is not None and r.mean == best[d]:
                text = f"**{text}**"
            cells.append(text)
        out.append(f"| {rep} | {model} | " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"


def read_report_csv(text: str) -> list[ReportRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != REPORT_COLUMNS:
        raise ValueError("not a report CSV")
    rows = []
    for d in reader:
        folds = [_parse_num(x) for x in d["fold_logloss"].split(";")] if int(d["n_folds"]) else []
        rows.append(ReportRow(d["dataset"], d["representation"], d["model"], _parse_num(d["mean_logloss"]),
                              _parse_num(d["std_logloss"]), _parse_num(d["mean_accuracy"]), int(d["n_folds"]),
                              int(d["n_failed"]), folds, int(d["seed"]), d["config_hash"]))
    return rows
