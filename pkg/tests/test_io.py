import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apgd import LowRankFactors, ObservationSet, ParseError
from apgd.io import (
    RatingsTable,
    config_hash,
    fmt,
    read_dense,
    read_factors,
    read_json,
    read_matrix_market,
    read_observations,
    read_ratings,
    read_triplets,
    write_dense,
    write_factors,
    write_json,
    write_observations,
    write_ratings,
    write_sparse_part,
    write_triplets,
)

finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=200)
@given(finite)
def test_fmt_round_trips_exactly(x):
    assert float(fmt(x)) == x
    assert np.copysign(1.0, float(fmt(x))) == np.copysign(1.0, x)


def test_fmt_examples():
    assert fmt(3.0) == "3"
    assert fmt(0.1) == "0.1"
    assert fmt(-0.0) == "-0.0"
    assert fmt(1e20) == "1e+20"


def random_obs(seed, shape=(7, 5), n=12):
    rng = np.random.default_rng(seed)
    cells = rng.choice(shape[0] * shape[1], n, replace=False)
    return ObservationSet(cells // shape[1], cells % shape[1], rng.standard_normal(n) * 10.0 ** rng.integers(-8, 8, n), shape)


@pytest.mark.parametrize("fmt_name", ["mtx", "csv"])
def test_observation_round_trip(tmp_path, fmt_name):
    obs = random_obs(0)
    path = tmp_path / f"obs.{fmt_name}"
    write_observations(path, obs, fmt_name)
    back = read_observations(path, shape=obs.shape)
    assert back.shape == obs.shape
    assert np.array_equal(back.rows, obs.rows) and np.array_equal(back.cols, obs.cols)
    assert np.max(np.abs(back.b - obs.b) / np.maximum(np.abs(obs.b), 1e-300)) <= 1e-15


def test_matrix_market_is_one_based(tmp_path):
    path = tmp_path / "m.mtx"
    path.write_text("%%MatrixMarket matrix coordinate real general\n% note\n3 2 2\n1 1 0.5\n3 2 -1\n")
    trip = read_matrix_market(path)
    assert trip.shape == (3, 2)
    assert trip.rows.tolist() == [0, 2] and trip.cols.tolist() == [0, 1]
    assert trip.vals.tolist() == [0.5, -1.0]


@pytest.mark.parametrize("body,line", [
    ("%%MatrixMarket matrix array real general\n2 2\n", 1),
    ("%%MatrixMarket matrix coordinate real symmetric\n2 2 0\n", 1),
    ("%%MatrixMarket matrix coordinate real general\n2 2\n", 2),
    ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 0.5\n1 2 abc\n", 4),
    ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 0.5\n3 1 1\n", 4),
    ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 0.5\n1 1 1\n", 4),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 0.5\n", 3),
])
def test_matrix_market_errors_carry_line_numbers(tmp_path, body, line):
    path = tmp_path / "bad.mtx"
    path.write_text(body)
    with pytest.raises(ParseError) as info:
        read_matrix_market(path)
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_matrix_market_count_mismatch(tmp_path):
    path = tmp_path / "short.mtx"
    path.write_text("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 0.5\n")
    with pytest.raises(ParseError, match="expected 3 entries"):
        read_matrix_market(path)


def test_triplet_reader(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("i,j,value\n0,1,2.5\n# comment\n\n3,0,-1\n")
    trip = read_triplets(path)
    assert trip.infer_shape() == (4, 2)
    assert trip.vals.tolist() == [2.5, -1.0]


@pytest.mark.parametrize("body,line", [
    ("0,1,2.5\n1,1\n", 2),
    ("0,1,2.5\n1,q,3\n", 2),
    ("0,1,2.5\n1,1,nope\n", 2),
    ("0,1,2.5\n-1,1,3\n", 2),
    ("0,1,2.5\n2,0,1\n0,1,4\n", 3),
])
def test_triplet_errors_carry_line_numbers(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ParseError) as info:
        read_triplets(path)
    assert info.value.line == line


def test_triplet_shape_enforced(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("0,0,1\n5,0,2\n")
    with pytest.raises(ParseError) as info:
        read_triplets(path, shape=(3, 3))
    assert info.value.line == 2


def test_observation_shape_conflict(tmp_path):
    obs = random_obs(1)
    path = tmp_path / "o.mtx"
    write_observations(path, obs)
    with pytest.raises(ParseError):
        read_observations(path, shape=(9, 9))
    with pytest.raises(ValueError):
        write_observations(path, obs, "xml")


def test_dense_round_trip(tmp_path):
    X = np.random.default_rng(2).standard_normal((4, 3)) * 1e-7
    write_dense(tmp_path / "X.csv", X)
    assert np.array_equal(read_dense(tmp_path / "X.csv"), X)


def test_dense_ragged_rows(tmp_path):
    path = tmp_path / "X.csv"
    path.write_text("1,2\n3,4\n5\n")
    with pytest.raises(ParseError) as info:
        read_dense(path)
    assert info.value.line == 3
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(ParseError):
        read_dense(tmp_path / "empty.csv")


@pytest.mark.parametrize("rank", [0, 1, 3])
def test_factor_round_trip(tmp_path, rank):
    rng = np.random.default_rng(rank)
    lr = (LowRankFactors.from_dense(rng.standard_normal((6, rank)) @ rng.standard_normal((rank, 4)), tol=1e-10)
          if rank else LowRankFactors.zeros((6, 4)))
    manifest = write_factors(tmp_path / "f", lr, {"lambda_L": 1.0})
    assert manifest["rank"] == rank and manifest["config_hash"] == config_hash({"lambda_L": 1.0})
    back = read_factors(tmp_path / "f")
    assert back.shape == lr.shape and back.rank == rank
    for a, b in ((back.U, lr.U), (back.S, lr.S), (back.V, lr.V)):
        assert np.array_equal(a, b)


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_sparse_part_writer(tmp_path):
    obs = ObservationSet([0, 1, 2], [2, 0, 1], [0.0, 0.0, 0.0], (3, 3), "Identity")
    write_sparse_part(tmp_path / "s.csv", obs, np.array([0.0, 1.5, 0.0]))
    assert (tmp_path / "s.csv").read_text() == "i,j,value\n1,0,1.5\n"
    with pytest.raises(ValueError):
        write_sparse_part(tmp_path / "s.csv", obs, np.zeros(2))


def test_ratings_round_trip(tmp_path):
    table = RatingsTable(np.array([10, 10, 7, 3]), np.array([5, 9, 5, 1]), np.array([4.0, 3.5, 1.0, 5.0]),
                         np.array([978300760, 978302109, 978301968, 978300275]))
    write_ratings(tmp_path / "ratings.dat", table)
    assert (tmp_path / "ratings.dat").read_text().splitlines()[0] == "10::5::4::978300760"
    back = read_ratings(tmp_path / "ratings.dat")
    for a, b in ((back.users, table.users), (back.items, table.items), (back.ratings, table.ratings),
                 (back.timestamps, table.timestamps)):
        assert np.array_equal(a, b)
    obs = back.to_observations()
    assert obs.shape == (3, 3)
    rows, cols, user_ids, item_ids = back.index()
    assert user_ids.tolist() == [3, 7, 10] and item_ids.tolist() == [1, 5, 9]
    assert obs.b[(rows == 2) & (cols == 2)].tolist() == [3.5]


def test_ratings_without_timestamps(tmp_path):
    path = tmp_path / "r.dat"
    path.write_text("1::2::3\n2::2::4\n")
    table = read_ratings(path)
    assert table.timestamps is None and len(table) == 2


@pytest.mark.parametrize("body,line", [
    ("1::2::3::4\n1::3::5\n", 2),
    ("1::2\n", 1),
    ("1::2::3\nx::2::3\n", 2),
])
def test_ratings_errors_carry_line_numbers(tmp_path, body, line):
    path = tmp_path / "r.dat"
    path.write_text(body)
    with pytest.raises(ParseError) as info:
        read_ratings(path)
    assert info.value.line == line


def test_json_round_trip_and_errors(tmp_path):
    write_json(tmp_path / "a.json", {"b": [1, 2.5], "a": None})
    assert read_json(tmp_path / "a.json") == {"a": None, "b": [1, 2.5]}
    (tmp_path / "bad.json").write_text('{\n  "a": 1,\n  oops\n}\n')
    with pytest.raises(ParseError) as info:
        read_json(tmp_path / "bad.json")
    assert info.value.line == 3


def test_triplet_writer_without_header(tmp_path):
    write_triplets(tmp_path / "t.csv", [0], [1], [0.25], header=False)
    assert (tmp_path / "t.csv").read_text() == "0,1,0.25\n"
