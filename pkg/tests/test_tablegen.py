import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from conftest import synthetic_table
from dogbo.controller import Variant
from dogbo.dog import DogThresholds
from dogbo.errors import ConfigError, FormatError, InvalidArgument, VersionError
from dogbo.tablegen import (
    SearchBounds,
    build_table,
    check_compatible,
    generate_table,
    load_table,
    sample_grid,
    save_table,
)

B9 = SearchBounds.default()


def test_single_point_grid():
    g = sample_grid(B9, 1, 0)
    assert g.shape == (1, 9) and B9.contains(g[0])


@pytest.mark.parametrize("scheme", ["Sobol", "UniformRandom"])
def test_large_grid_within_bounds(scheme):
    g = sample_grid(B9, 10_000, 4, scheme)
    assert np.all(g >= B9.lows) and np.all(g <= B9.highs)


def test_grid_determinism_and_bad_scheme():
    np.testing.assert_array_equal(sample_grid(B9, 50, 3), sample_grid(B9, 50, 3))
    with pytest.raises(InvalidArgument):
        sample_grid(B9, 5, 0, "Halton")
    with pytest.raises(InvalidArgument):
        sample_grid(B9, 0, 0)


def test_sobol_beats_random_on_discrepancy():
    b2 = SearchBounds(Variant.FIVE_D, Variant.FIVE_D.names, (0,) * 5, (1,) * 5)
    sob = sample_grid(b2, 1024, 0, "Sobol")[:, :2]
    rnd = sample_grid(b2, 1024, 0, "UniformRandom")[:, :2]
    assert qmc.discrepancy(sob, method="L2-star") < qmc.discrepancy(rnd, method="L2-star")


@settings(max_examples=25)
@given(st.lists(st.floats(0, 1), min_size=9, max_size=9))
def test_normalize_round_trip(unit):
    v = B9.denormalize(unit)
    np.testing.assert_allclose(B9.normalize(v), unit, atol=1e-12)


def test_bounds_text_round_trip_and_errors():
    assert SearchBounds.from_text(B9.to_text()) == B9
    b5 = SearchBounds.default(Variant.FIVE_D)
    assert SearchBounds.from_text(b5.to_text()) == b5
    with pytest.raises(ConfigError):
        SearchBounds.from_text("variant: NineD\nK_pt: 1, 2\n")
    with pytest.raises(InvalidArgument):
        SearchBounds(Variant.FIVE_D, Variant.FIVE_D.names, (1,) * 5, (0,) * 5)


@pytest.fixture(scope="module")
def real_table():
    return generate_table(100, seed=1)


def test_real_table_has_spread(real_table):
    assert real_table.phi.max() > real_table.phi.min()
    np.testing.assert_allclose(real_table.metric_sums.sum(axis=1) * real_table.time_fraction,
                               real_table.phi, rtol=1e-12, atol=1e-12)


def test_rebuild_is_identical(real_table):
    assert generate_table(100, seed=1) == real_table


def test_parallel_build_matches_sequential(real_table):
    par = build_table(real_table.params, real_table.bounds, seed=1, workers=2, chunk_size=30)
    assert par == real_table


def test_degenerate_bounds_score_near_zero():
    # massless legs can chatter stably at T=0.06 s, so the corner also asks
    # for a trunk lean beyond the fall limit
    lo = (500.0, 50.0, 0.60, 300.0, 10.0, 0.60, 0.65, 0.9, 0.06)
    hi = (600.0, 60.0, 0.70, 400.0, 20.0, 0.61, 0.70, 1.0, 0.07)
    bad = SearchBounds(Variant.NINE_D, Variant.NINE_D.names, lo, hi)
    t = generate_table(20, bad, seed=0)
    assert np.all(t.phi < 1.0)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    t = synthetic_table(rng.uniform(0, 100, 1000) * np.pi, seed=3)
    path = tmp_path / "t.csv"
    save_table(t, path)
    assert load_table(path) == t


def test_truncated_or_corrupted_file(tmp_path, real_table):
    path = tmp_path / "t.csv"
    save_table(real_table, path)
    lines = path.read_text().splitlines()
    (tmp_path / "short.csv").write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(FormatError):
        load_table(tmp_path / "short.csv")
    bad = [ln.replace("row_count: 100", "row_count: 99") for ln in lines]
    (tmp_path / "count.csv").write_text("\n".join(bad) + "\n")
    with pytest.raises(FormatError):
        load_table(tmp_path / "count.csv")
    ver = [ln.replace("schema_version: 1", "schema_version: 9") for ln in lines]
    (tmp_path / "ver.csv").write_text("\n".join(ver) + "\n")
    with pytest.raises(VersionError):
        load_table(tmp_path / "ver.csv")


def test_threshold_fingerprint_mismatch(tmp_path):
    t = generate_table(4, seed=0, thresholds=DogThresholds(retraction_min=0.05))
    path = tmp_path / "t.csv"
    save_table(t, path)
    with pytest.raises(VersionError):
        load_table(path, expect={"thresholds": DogThresholds().fingerprint()})
    check_compatible(t, t)
    with pytest.raises(InvalidArgument):
        check_compatible(t, {"colour": "blue"})


def test_build_rejects_bad_duration():
    with pytest.raises(InvalidArgument):
        build_table(sample_grid(B9, 2), B9, short_sim_duration=0.0)
