import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smiles_screen.harness import (
    Dataset,
    EvalRow,
    FoldResult,
    HyperGrid,
    IngestError,
    LeakageError,
    Record,
    _inner_k,
    build_grid,
    check_disjoint,
    format_cell,
    ingest,
    nested_cv,
    parse_config,
    read_report_csv,
    report,
    run_outer_fold,
    stratified_folds,
    unit_seed,
)
from smiles_screen.metrics import accuracy, log_loss
from smiles_screen.synth import planted_motif_corpus


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---- metrics


def test_log_loss_examples():
    assert log_loss([0.5] * 4, [1, 0, 1, 0]) == pytest.approx(math.log(2), abs=1e-12)
    assert log_loss([0.9, 0.2], [1, 0]) == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2, abs=1e-12)
    assert log_loss([0.9, 0.2], [1, 0]) == pytest.approx(0.16425, abs=1e-5)
    assert 0 < log_loss([1.0, 0.0], [1, 0]) <= 3.45e-14
    assert log_loss([0.0], [1]) == pytest.approx(-math.log(1e-15))
    with pytest.raises(ValueError):
        log_loss([0.5], [1, 0])
    with pytest.raises(ValueError):
        log_loss([1.5], [1])


@given(st.lists(st.integers(0, 1), min_size=1, max_size=50))
def test_log_loss_ordering(labels):
    y = np.array(labels, dtype=float)
    assert log_loss(y, y) < log_loss(np.full(len(y), 0.5), y) < log_loss(1 - y, y)


def test_accuracy():
    assert accuracy([0.9, 0.4, 0.6], [1, 0, 0]) == pytest.approx(2 / 3)


# ---- ingestion


def test_ingest_toy_csv(tmp_path):
    p = write(tmp_path, "toy.csv", "smiles,label\nCCO,1\nCCN,0\nc1ccccc1,0\n[Na+],1\n")
    ds = ingest(p)
    assert len(ds) == 4 and ds.ids == ["2", "3", "4", "5"]
    assert ds.labels.tolist() == [1, 0, 0, 1]
    assert ds.name == "toy"


def test_ingest_quarantines_bad_smiles(tmp_path):
    rows = "".join(f"{'C' * (i % 5 + 1)}O,{i % 2}\n" for i in range(12))
    p = write(tmp_path, "d.csv", "smiles,label\n" + rows + "C(C,1\n")
    q = tmp_path / "quarantine.tsv"
    ds = ingest(p, quarantine=q)
    assert len(ds) == 12 and len(ds.quarantined) == 1
    line = q.read_text().strip().split("\t")
    assert line[0] == "14" and line[1] == "C(C" and line[2].startswith("ERROR 1: unclosed_branch")


def test_ingest_bad_label_names_row(tmp_path):
    p = write(tmp_path, "d.csv", "smiles,label\nCC,1\nCO,2\n")
    with pytest.raises(IngestError, match="row 3"):
        ingest(p)


def test_ingest_too_many_rejects(tmp_path):
    p = write(tmp_path, "d.csv", "smiles,label\nCC,1\nCO,0\nC(,1\nC),0\n")
    with pytest.raises(IngestError, match="failed to parse"):
        ingest(p)


def test_ingest_empty_class(tmp_path):
    p = write(tmp_path, "d.csv", "smiles,label\nCC,1\nCO,1\n")
    with pytest.raises(IngestError, match="both classes"):
        ingest(p)


def test_ingest_tsv_and_id_column(tmp_path):
    ds = ingest(write(tmp_path, "d.tsv", "CC\t1\nCO\t0\n"))
    assert ds.smiles == ["CC", "CO"] and ds.ids == ["1", "2"]
    ds = ingest(write(tmp_path, "e.csv", "id,smiles,label\nm7,CC,1\nm9,CO,0\n"))
    assert ds.ids == ["m7", "m9"]
    with pytest.raises(IngestError):
        ingest(write(tmp_path, "f.csv", "id,smiles,label\nm7,CC,1\nm7,CO,0\n"))


def test_ingest_header_check(tmp_path):
    with pytest.raises(IngestError):
        ingest(write(tmp_path, "d.csv", "smi,lab\nCC,1\n"))


# ---- folds


def test_fold_examples():
    labels = [1] * 10 + [0] * 20
    plan = stratified_folds(labels, 5, seed=0)
    for f in range(5):
        _, te = plan.split(f)
        assert sorted(np.bincount(np.asarray(labels)[te], minlength=2)) == [2, 4]
    pos = stratified_folds([1] * 11 + [0] * 10, 5, 0)
    counts = np.bincount(pos.assignment[:11], minlength=5)
    assert sorted(counts) == [2, 2, 2, 2, 3]
    assert np.array_equal(stratified_folds(labels, 5, 3).assignment, stratified_folds(labels, 5, 3).assignment)
    with pytest.raises(ValueError):
        stratified_folds([1, 1, 0, 0, 0], 3, 0)


@given(st.integers(10, 300), st.floats(0.05, 0.95), st.integers(2, 10), st.integers(0, 2**31))
def test_stratification_bound(n, ratio, k, seed):
    n_pos = max(k, int(n * ratio))
    n_neg = max(k, n - n_pos)
    labels = np.array([1] * n_pos + [0] * n_neg)
    a = stratified_folds(labels, k, seed).assignment
    assert set(a.tolist()) == set(range(k))
    for cls, size in ((1, n_pos), (0, n_neg)):
        counts = np.bincount(a[labels == cls], minlength=k)
        assert np.all(np.abs(counts - size / k) < 1)


def test_unit_seeds_differ():
    assert unit_seed(0, 1, 2) == unit_seed(0, 1, 2)
    assert len({unit_seed(0, f, g) for f in range(5) for g in range(4)}) == 20


def test_inner_k_fallback():
    assert _inner_k(np.array([1] * 30 + [0] * 60), 5) == 5
    assert _inner_k(np.array([1] * 24 + [0] * 60), 5) == 3


# ---- config and grids


def test_config_parsing():
    cfg = parse_config("# comment\nC = 0.1, 1, 10\nepochs = 5\nregions = 5 3\naugment = false\nname = x  # trailing\n")
    assert cfg == {"C": [0.1, 1, 10], "epochs": [5], "regions": [(5, 3)], "augment": [False], "name": ["x"]}
    grid, settings = build_grid("svm", cfg)
    assert grid.params == {"C": [0.1, 1, 10]} and settings["epochs"] == 5
    with pytest.raises(ValueError):
        parse_config("no equals sign")


def test_default_grid_fills_missing_axes():
    grid, _ = build_grid("rf", {"n_trees": [50]})
    assert grid.params == {"min_leaf": [1, 2]}
    assert len(build_grid("cnn", {})[0].points()) == 4


def test_hypergrid_invariants():
    with pytest.raises(ValueError):
        HyperGrid("svm", {"C": [1.0]}, inner_k=1)
    with pytest.raises(ValueError):
        HyperGrid("svm", {"C": []})
    assert HyperGrid("svm", {"C": [1, 2], "x": [3]}).points() == [{"C": 1, "x": 3}, {"C": 2, "x": 3}]


# ---- nested CV


@pytest.fixture(scope="module")
def small_dataset():
    return Dataset.from_pairs("motif", planted_motif_corpus(120, seed=21))


def test_dummy_matches_closed_form(small_dataset):
    row = nested_cv(small_dataset, "dummy", seed=4)
    plan = stratified_folds(small_dataset, 5, 4)
    y = small_dataset.labels
    assert len(row.folds) == 5 and row.failed == 0
    for f, res in enumerate(row.folds):
        tr, te = plan.split(f)
        r = y[tr].mean()
        expected = -np.mean(y[te] * np.log(r) + (1 - y[te]) * np.log(1 - r))
        assert res.logloss == pytest.approx(expected, abs=1e-12)
    assert row.std == pytest.approx(np.std(row.scores))


def test_leakage_tripwire(small_dataset):
    plan = stratified_folds(small_dataset, 5, 0)
    tr, te = plan.split(0)
    leaky = np.append(tr, te[0])
    with pytest.raises(LeakageError):
        run_outer_fold(small_dataset, "dummy", HyperGrid("dummy", {}), {}, "ngram", 0, 0, leaky, te)
    with pytest.raises(LeakageError):
        check_disjoint(["a", "b"], ["b"])


def test_duplicate_record_with_same_id_rejected():
    with pytest.raises(IngestError):
        Dataset("d", [Record("CC", 1, "x"), Record("CO", 0, "x")])


def test_grid_selection_and_ties(small_dataset):
    grid = HyperGrid("nb", {"alpha": [1.0, 1.0]}, inner_k=3)
    row = nested_cv(small_dataset, "nb", grid, {"outer_k": 3}, seed=1)
    for f in row.folds:
        assert len(f.inner_scores) == 2 and f.inner_scores[0] == f.inner_scores[1]
        assert f.params == {"alpha": 1.0}
    assert len(row.folds) == 3 and row.mean is not None


def test_failed_fold_is_recorded(small_dataset):
    # a sequence model on the n-gram representation fails inside every fold
    row = nested_cv(small_dataset, "cnn", HyperGrid("cnn", {}), {"outer_k": 2}, seed=0, representation="ngram")
    assert row.failed == 2 and all(f.status == "failed" and "symbols" in f.error for f in row.folds)
    assert row.mean is None
    assert "—" in report([row])


def test_nested_cv_is_deterministic(small_dataset):
    a = nested_cv(small_dataset, "svm", HyperGrid("svm", {"C": [1.0, 10.0]}, 3), {"outer_k": 3}, seed=2)
    b = nested_cv(small_dataset, "svm", HyperGrid("svm", {"C": [1.0, 10.0]}, 3), {"outer_k": 3}, seed=2)
    assert report([a], "csv") == report([b], "csv")
    assert [f.params for f in a.folds] == [f.params for f in b.folds]


# ---- reports


def make_row(dataset, model, rep, scores, failed=()):
    folds = [FoldResult(i, "failed" if i in failed else "ok", {}, None if i in failed else s, 0.9)
             for i, s in enumerate(scores)]
    return EvalRow(dataset, model, rep, folds, seed=3, config_hash="abc")


def test_cell_rounding():
    assert format_cell(0.2494, 0.0151) == "0.249±0.015"
    assert format_cell(None, None) == "—"


def test_single_row_table():
    text = report([make_row("D1", "svm", "ngram", [0.2, 0.3])])
    lines = text.strip().splitlines()
    assert len(lines) == 3
    assert lines[2] == "| ngram | svm | **0.250±0.050** |"


def test_grouping_and_bold():
    rows = [
        make_row("A", "svm", "ngram", [0.3, 0.3]),
        make_row("A", "cnn", "symbols", [0.1, 0.1]),
        make_row("B", "svm", "ngram", [0.2, 0.2]),
        make_row("B", "cnn", "symbols", [0.4, 0.4]),
        make_row("A", "nb", "ngram", [0.6, 0.5], failed=(1,)),
    ]
    lines = report(rows).strip().splitlines()
    assert lines[0] == "| representation | model | A | B |"
    assert lines[2] == "| ngram | svm | 0.300±0.000 | **0.200±0.000** |"
    assert lines[3] == "| ngram | nb | — |  |"
    assert lines[4] == "| symbols | cnn | **0.100±0.000** | 0.400±0.000 |"


def test_csv_round_trip():
    rows = [make_row("A", "svm", "ngram", [0.1234567891234, 0.3]), make_row("A", "nb", "ngram", [0.5, 0.7], failed=(0,))]
    text = report(rows, "csv")
    back = read_report_csv(text)
    assert report(back, "csv") == text
    assert report(back, "markdown") == report(rows, "markdown")
    assert back[0].mean == rows[0].mean and back[1].fold_logloss == [None, 0.7]
    assert back[0].seed == 3 and back[0].config_hash == "abc"


def test_report_needs_rows():
    with pytest.raises(ValueError):
        report([])


def test_fold_log_is_json():
    f = FoldResult(0, "ok", {"C": 1.0}, 0.2, 0.9, [0.3], 10, 2, 0.5)
    assert json.loads(f.to_json())["params"] == {"C": 1.0}
