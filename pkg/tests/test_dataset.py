"""Loading, scaling, and splitting behavior."""

import io

import numpy as np
import pytest

from taskreg import (
    DegenerateTaskError,
    MultiTaskDataset,
    ParseError,
    ScalingParams,
    SchemaError,
    TaskData,
    apply_scale,
    load_csv,
    minmax_scale,
    stratified_split,
    write_csv,
)


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


BASIC = """task,age,bmi,outcome
a,1,2,10
a,2,3,11
b,3,4,12
b,4,5,13
b,5,6,
"""


def test_load_basic_shapes(tmp_path):
    ds = load_csv(_write(tmp_path, BASIC), "task", "outcome")
    assert ds.task_labels == ("a", "b")
    assert ds.feature_names == ("age", "bmi")
    assert ds.n_tasks == 2
    assert ds.n_features == 2
    assert ds.tasks[0].n == 2
    assert ds.tasks[1].n == 2
    assert ds.dropped_rows == 1
    np.testing.assert_array_equal(ds.tasks[0].X, [[1, 2], [2, 3]])
    np.testing.assert_array_equal(ds.tasks[1].Y, [12, 13])


def test_load_minimal_one_row(tmp_path):
    ds = load_csv(_write(tmp_path, "t,x,y\nonly,5,7\n"), "t", "y")
    assert ds.n_tasks == 1
    assert ds.n_features == 1
    assert ds.tasks[0].n == 1
    assert float(ds.tasks[0].X[0, 0]) == 5.0


def test_load_fhs_shaped(tmp_path):
    # 633 rows, 79 feature columns, 4 task values.
    rng = np.random.default_rng(41)
    n_rows, n_feat = 633, 79
    labels = [f"vhd{i % 4}" for i in range(n_rows)]
    lines = ["task," + ",".join(f"f{j}" for j in range(n_feat)) + ",y"]
    values = rng.random((n_rows, n_feat + 1))
    for label, row in zip(labels, values):
        lines.append(label + "," + ",".join(f"{v:.4f}" for v in row))
    ds = load_csv(_write(tmp_path, "\n".join(lines) + "\n"), "task", "y")
    assert ds.n_tasks == 4
    assert ds.n_features == 79
    assert ds.n_rows == 633


def test_load_brfss_shaped(tmp_path):
    # 119,929 rows, 90 feature columns, 6 task values; exercises bulk load.
    rng = np.random.default_rng(42)
    n_feat = 90
    counts = [19988] * 5 + [119_929 - 5 * 19988]
    path = tmp_path / "big.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("age_group," + ",".join(f"f{j}" for j in range(n_feat)) + ",y\n")
        for t, count in enumerate(counts):
            block = rng.random((count, n_feat + 1))
            buf = io.StringIO()
            np.savetxt(buf, block, fmt="%.3f", delimiter=",")
            label = f"age{t}"
            fh.writelines(f"{label},{line}\n" for line in buf.getvalue().splitlines())
    ds = load_csv(path, "age_group", "y")
    assert ds.n_tasks == 6
    assert ds.n_features == 90
    assert ds.n_rows == 119_929
    assert [t.n for t in ds.tasks] == counts


def test_load_errors(tmp_path):
    with pytest.raises(SchemaError, match="missing required column 'task'"):
        load_csv(_write(tmp_path, "a,b\n1,2\n"), "task", "b")
    with pytest.raises(SchemaError, match="missing required column 'y'"):
        load_csv(_write(tmp_path, "task,b\nx,2\n"), "task", "y")
    with pytest.raises(SchemaError, match="duplicate column"):
        load_csv(_write(tmp_path, "task,b,b,y\nx,1,2,3\n"), "task", "y")
    with pytest.raises(SchemaError, match="must differ"):
        load_csv(_write(tmp_path, "task,b,y\nx,1,2\n"), "task", "task")
    with pytest.raises(SchemaError, match="no feature columns"):
        load_csv(_write(tmp_path, "task,y\nx,1\n"), "task", "y")
    with pytest.raises(SchemaError, match="header row required"):
        load_csv(_write(tmp_path, ""), "task", "y")
    with pytest.raises(SchemaError, match="no data rows"):
        load_csv(_write(tmp_path, "task,b,y\n"), "task", "y")


def test_load_cell_errors(tmp_path):
    with pytest.raises(ParseError, match="row 2, column 'b'"):
        load_csv(_write(tmp_path, "task,b,y\nx,oops,3\n"), "task", "y")
    with pytest.raises(ParseError, match="missing value"):
        load_csv(_write(tmp_path, "task,b,y\nx,,3\n"), "task", "y")
    with pytest.raises(ParseError, match="non-finite"):
        load_csv(_write(tmp_path, "task,b,y\nx,inf,3\n"), "task", "y")
    with pytest.raises(ParseError, match="row 3 has 2 fields"):
        load_csv(_write(tmp_path, "task,b,y\nx,1,3\nx,1\n"), "task", "y")


def test_load_all_outcomes_missing_for_task(tmp_path):
    text = "task,b,y\na,1,2\nq,1,\nq,2,\n"
    with pytest.raises(DegenerateTaskError, match="'q'"):
        load_csv(_write(tmp_path, text), "task", "y")


def _toy(columns, labels=("a",), outcomes=None):
    """One or more tasks over the given feature column(s)."""
    columns = np.atleast_2d(np.asarray(columns, dtype=np.float64))
    tasks = []
    for label in labels:
        y = np.zeros(columns.shape[0]) if outcomes is None else np.asarray(outcomes)
        tasks.append(TaskData(label=label, X=columns, Y=y))
    names = tuple(f"f{j}" for j in range(columns.shape[1]))
    return MultiTaskDataset(tasks=tuple(tasks), feature_names=names)


def test_minmax_scale_examples():
    ds = _toy([[2.0], [4.0], [6.0]])
    scaled, params = minmax_scale(ds)
    np.testing.assert_allclose(scaled.tasks[0].X.ravel(), [0.0, 0.5, 1.0])
    assert params.feature_min[0] == 2.0 and params.feature_max[0] == 6.0

    const, _ = minmax_scale(_toy([[7.0], [7.0]]))
    np.testing.assert_array_equal(const.tasks[0].X.ravel(), [0.0, 0.0])

    unit = _toy([[0.0], [0.25], [1.0]])
    scaled_unit, _ = minmax_scale(unit)
    np.testing.assert_allclose(scaled_unit.tasks[0].X, unit.tasks[0].X, atol=1e-15)


def test_minmax_round_trip():
    rng = np.random.default_rng(7)
    ds = _toy(rng.uniform(-5, 9, size=(20, 4)))
    scaled, params = minmax_scale(ds)
    back = params.invert_features(scaled.tasks[0].X)
    np.testing.assert_allclose(back, ds.tasks[0].X, atol=1e-12)


def test_outcome_scaling():
    ds = _toy([[1.0], [2.0]], outcomes=[10.0, 30.0])
    scaled, params = minmax_scale(ds, scale_outcome=True)
    np.testing.assert_allclose(scaled.tasks[0].Y, [0.0, 1.0])
    np.testing.assert_allclose(params.invert_outcome(scaled.tasks[0].Y), [10.0, 30.0])
    assert params.scales_outcome


def test_apply_scale_examples():
    params = ScalingParams(feature_min=np.array([0.0]), feature_max=np.array([10.0]))
    ds = _toy([[5.0], [12.0]])
    out = apply_scale(ds, params)
    np.testing.assert_allclose(out.tasks[0].X.ravel(), [0.5, 1.2])

    const = ScalingParams(feature_min=np.array([3.0]), feature_max=np.array([3.0]))
    out = apply_scale(_toy([[99.0]]), const)
    assert out.tasks[0].X[0, 0] == 0.0

    wide = ScalingParams(feature_min=np.zeros(2), feature_max=np.ones(2))
    with pytest.raises(ValueError, match="features"):
        apply_scale(ds, wide)


def test_scaling_params_validation():
    with pytest.raises(ValueError, match="<="):
        ScalingParams(feature_min=np.array([2.0]), feature_max=np.array([1.0]))
    with pytest.raises(ValueError, match="together"):
        ScalingParams(
            feature_min=np.array([0.0]), feature_max=np.array([1.0]), outcome_min=0.0
        )


def _split_ds(n_per_task=10, n_tasks=3, seed=5):
    rng = np.random.default_rng(seed)
    tasks = tuple(
        TaskData(
            label=f"t{t}",
            X=rng.random((n_per_task, 3)),
            Y=rng.random(n_per_task),
        )
        for t in range(n_tasks)
    )
    return MultiTaskDataset(tasks=tasks, feature_names=("a", "b", "c"))


def test_split_sixty_forty():
    train, test = stratified_split(_split_ds(10), 0.6, seed=0)
    assert all(t.n == 6 for t in train.tasks)
    assert all(t.n == 4 for t in test.tasks)


def test_split_two_rows():
    train, test = stratified_split(_split_ds(2), 0.5, seed=0)
    assert all(t.n == 1 for t in train.tasks)
    assert all(t.n == 1 for t in test.tasks)


def test_split_deterministic_and_conserving():
    ds = _split_ds(13)
    first = stratified_split(ds, 0.6, seed=9)
    second = stratified_split(ds, 0.6, seed=9)
    for a, b in zip(first[0].tasks, second[0].tasks):
        np.testing.assert_array_equal(a.X, b.X)
    # Row multisets of train + test partition the original rows.
    for orig, tr, te in zip(ds.tasks, first[0].tasks, first[1].tasks):
        assert tr.n + te.n == orig.n
        combined = np.vstack([tr.X, te.X])
        assert sorted(map(tuple, combined.tolist())) == sorted(map(tuple, orig.X.tolist()))
    third = stratified_split(ds, 0.6, seed=10)
    assert any(
        not np.array_equal(a.X, b.X) for a, b in zip(first[0].tasks, third[0].tasks)
    )


def test_split_errors():
    with pytest.raises(DegenerateTaskError):
        stratified_split(_split_ds(1), 0.5, seed=0)
    with pytest.raises(ValueError, match="train_fraction"):
        stratified_split(_split_ds(4), 1.0, seed=0)
    with pytest.raises(ValueError, match="train_fraction"):
        stratified_split(_split_ds(4), 0.0, seed=0)


def test_write_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    ds = _split_ds(6)
    path = tmp_path / "round.csv"
    write_csv(ds, path, "task", "outcome")
    back = load_csv(path, "task", "outcome")
    assert back.task_labels == ds.task_labels
    assert back.feature_names == ds.feature_names
    for a, b in zip(ds.tasks, back.tasks):
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.Y, b.Y)


def test_task_data_validation():
    with pytest.raises(ValueError, match="2-D"):
        TaskData(label="a", X=np.zeros(3), Y=np.zeros(3))
    with pytest.raises(ValueError, match="rows"):
        TaskData(label="a", X=np.zeros((2, 2)), Y=np.zeros(3))
    with pytest.raises(ValueError, match="non-finite"):
        TaskData(label="a", X=np.array([[np.nan]]), Y=np.zeros(1))


def test_dataset_validation():
    t = TaskData(label="a", X=np.zeros((1, 2)), Y=np.zeros(1))
    with pytest.raises(ValueError, match="unique"):
        MultiTaskDataset(tasks=(t, t), feature_names=("x", "y"))
    with pytest.raises(ValueError, match="2 features"):
        MultiTaskDataset(tasks=(t,), feature_names=("x", "y", "z"))
    # Arrays are exposed read-only.
    ds = MultiTaskDataset(tasks=(t,), feature_names=("x", "y"))
    with pytest.raises(ValueError):
        ds.tasks[0].X[0, 0] = 1.0
