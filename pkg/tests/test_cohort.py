import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from popgraph.cohort import (
    Cohort, generate_synthetic, load_cohort, load_schema, normalize, split, write_cohort, write_schema,
)
from popgraph.errors import ConfigError, DataError
from popgraph.models import PhenotypeSchema, PhenotypeSpec, SyntheticCohortConfig


def _r2_of_linear_fit(cohort: Cohort) -> float:
    design = np.hstack([cohort.imaging, np.ones((cohort.num_subjects, 1))])
    coef, *_ = np.linalg.lstsq(design, cohort.ages, rcond=None)
    residual = cohort.ages - design @ coef
    return 1.0 - residual @ residual / np.sum((cohort.ages - cohort.ages.mean()) ** 2)


@pytest.fixture
def raw_cohort():
    schema = PhenotypeSchema(
        phenotypes=[PhenotypeSpec(name="sex", kind="categorical"), PhenotypeSpec(name="bmi", kind="continuous")],
        imaging_features=3,
    )
    imaging = [[2.0, 5.0, 0.0], [4.0, 5.0, 1.0], [6.0, 5.0, 0.5]]
    phenotypes = [[1.0, 10.0], [2.0, 20.0], [1.0, 30.0]]
    return Cohort(imaging, phenotypes, [50.0, 60.0, 70.0], schema)


def test_normalize_examples(raw_cohort):
    cohort = normalize(raw_cohort)
    assert_array_equal(cohort.imaging[:, 0], [0.0, 0.5, 1.0])
    assert_array_equal(cohort.imaging[:, 1], [0.0, 0.0, 0.0])
    assert_array_equal(cohort.imaging[:, 2], [0.0, 1.0, 0.5])
    assert_array_equal(cohort.phenotypes[:, 0], [1.0, 2.0, 1.0])
    assert_array_equal(cohort.phenotypes[:, 1], [0.0, 0.5, 1.0])
    assert_array_equal(cohort.ages, [50.0, 60.0, 70.0])
    assert cohort.scaling["img_0"] == (2.0, 6.0)
    assert "sex" not in cohort.scaling


def test_normalize_is_idempotent(small_cohort):
    again = normalize(small_cohort)
    assert_array_equal(again.imaging, small_cohort.imaging)
    assert_array_equal(again.phenotypes, small_cohort.phenotypes)


def test_cohort_arrays_are_read_only(raw_cohort):
    with pytest.raises(ValueError):
        raw_cohort.imaging[0, 0] = 1.0


def test_cohort_rejects_non_integer_categories():
    schema = PhenotypeSchema(phenotypes=[PhenotypeSpec(name="site", kind="categorical")], imaging_features=1)
    with pytest.raises(DataError, match="site"):
        Cohort([[0.1], [0.2]], [[1.0], [1.5]], [50.0, 60.0], schema)


def test_synthetic_is_deterministic():
    config = SyntheticCohortConfig(num_subjects=50, seed=7)
    a, b = generate_synthetic(config), generate_synthetic(config)
    assert_array_equal(a.imaging, b.imaging)
    assert_array_equal(a.phenotypes, b.phenotypes)
    assert_array_equal(a.ages, b.ages)


def test_synthetic_shape_and_ranges():
    cohort = generate_synthetic(SyntheticCohortConfig(num_subjects=400, seed=2))
    assert cohort.imaging.shape == (400, 68)
    assert cohort.phenotypes.shape == (400, 20)
    assert cohort.ages.min() >= 47.0 and cohort.ages.max() <= 81.0
    assert cohort.imaging.min() >= 0.0 and cohort.imaging.max() <= 1.0
    categorical = cohort.phenotypes[:, cohort.categorical_mask]
    assert set(np.unique(categorical)) <= {0.0, 1.0, 2.0, 3.0}
    continuous = cohort.phenotypes[:, ~cohort.categorical_mask]
    assert continuous.min() >= 0.0 and continuous.max() <= 1.0


def test_synthetic_ages_follow_the_mixture():
    ages = generate_synthetic(SyntheticCohortConfig(num_subjects=2000, seed=0)).ages
    assert 64.0 < ages.mean() < 68.0
    assert np.mean(ages < 60.0) > np.mean(ages > 75.0)


def test_zero_snr_gives_uncorrelated_imaging():
    cohort = generate_synthetic(SyntheticCohortConfig(num_subjects=2000, snr=0.0, seed=3))
    correlations = [abs(np.corrcoef(cohort.imaging[:, j], cohort.ages)[0, 1]) for j in range(68)]
    assert max(correlations) < 0.1


def test_high_snr_is_linearly_predictive():
    cohort = generate_synthetic(SyntheticCohortConfig(num_subjects=2000, snr=10.0, seed=3))
    assert _r2_of_linear_fit(cohort) > 0.7


@pytest.mark.slow
def test_higher_snr_gives_higher_r2():
    wins = 0
    for seed in range(5):
        high = generate_synthetic(SyntheticCohortConfig(num_subjects=2000, snr=0.05, seed=seed))
        low = generate_synthetic(SyntheticCohortConfig(num_subjects=2000, snr=0.01, seed=seed))
        wins += _r2_of_linear_fit(high) > _r2_of_linear_fit(low)
    assert wins >= 4


@pytest.mark.parametrize("n, sizes", [(6500, (4875, 325, 1300)), (20, (15, 1, 4)), (1000, (750, 50, 200))])
def test_split_sizes(n, sizes):
    assert split(n).sizes == sizes


@pytest.mark.parametrize("n", [3, 7, 20, 101])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_split_is_a_partition(n, seed):
    parts = split(n, seed=seed)
    joined = np.concatenate([parts.train, parts.val, parts.test])
    assert_array_equal(np.sort(joined), np.arange(n))


def test_split_deterministic_and_seed_dependent():
    assert_array_equal(split(100, seed=4).train, split(100, seed=4).train)
    assert not np.array_equal(split(100, seed=4).train, split(100, seed=5).train)


@pytest.mark.parametrize("fractions", [(0.7, 0.1, 0.1), (0.5, 0.5), (1.0, 0.0, 0.0)])
def test_split_rejects_bad_fractions(fractions):
    with pytest.raises(ConfigError):
        split(100, fractions)


def test_load_cohort_small_file(tmp_path):
    path = tmp_path / "cohort.csv"
    path.write_text("age,img_0,img_1,sex\n50,0.1,0.2,1\n61.5,0.3,0.4,0\n70,0.5,0.6,1\n")
    schema = PhenotypeSchema(phenotypes=[PhenotypeSpec(name="sex", kind="categorical")], imaging_features=2)
    cohort = load_cohort(path, schema)
    assert cohort.num_subjects == 3
    assert_array_equal(cohort.ages, [50.0, 61.5, 70.0])
    assert_array_equal(cohort.imaging[1], [0.3, 0.4])


def test_load_cohort_errors(tmp_path):
    schema = PhenotypeSchema(phenotypes=[PhenotypeSpec(name="sex", kind="categorical")], imaging_features=1)
    missing = tmp_path / "missing.csv"
    missing.write_text("img_0,sex\n0.1,1\n")
    with pytest.raises(DataError, match="age"):
        load_cohort(missing, schema)

    bad = tmp_path / "bad.csv"
    bad.write_text("age,img_0,sex\n50,0.1,1\n60,abc,0\n")
    with pytest.raises(DataError, match=r"row 3, column 'img_0'"):
        load_cohort(bad, schema)

    hole = tmp_path / "hole.csv"
    hole.write_text("age,img_0,sex\n50,,1\n")
    with pytest.raises(DataError, match="missing value"):
        load_cohort(hole, schema)

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataError, match="empty"):
        load_cohort(empty, schema)


def test_write_then_load_is_exact(tmp_path, small_cohort):
    path = tmp_path / "cohort.csv"
    write_cohort(small_cohort, path)
    loaded = load_cohort(path, small_cohort.schema)
    assert_array_equal(loaded.imaging, small_cohort.imaging)
    assert_array_equal(loaded.phenotypes, small_cohort.phenotypes)
    assert_array_equal(loaded.ages, small_cohort.ages)


def test_schema_round_trip(tmp_path, small_cohort):
    path = tmp_path / "cohort.schema.ini"
    write_schema(small_cohort.schema, path)
    assert load_schema(path) == small_cohort.schema


def test_schema_validation():
    with pytest.raises(ValidationError):
        PhenotypeSchema(phenotypes=[PhenotypeSpec(name="a", kind="continuous")] * 2)
    with pytest.raises(ValidationError):
        PhenotypeSchema(phenotypes=[PhenotypeSpec(name="img_3", kind="continuous")])
    with pytest.raises(ValidationError):
        PhenotypeSchema(phenotypes=[])


def test_synthetic_config_validation():
    with pytest.raises(ValidationError):
        SyntheticCohortConfig(num_subjects=5)
    with pytest.raises(ValidationError):
        SyntheticCohortConfig(categorical_phenotypes=0, continuous_phenotypes=0)
