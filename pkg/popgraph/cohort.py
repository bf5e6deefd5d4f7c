"""
Cohort data model, normalization, synthetic generation and splitting.

A cohort holds per-subject imaging features (node features), non-imaging
phenotypes (used by several graph builders) and chronological age (the
regression label). The synthetic generator stands in for restricted-access
biobank data with the same shape.
"""

import configparser
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from popgraph.errors import ConfigError, DataError
from popgraph.models import PhenotypeSchema, PhenotypeSpec, SyntheticCohortConfig

logger = logging.getLogger(__name__)

DEFAULT_AGE_RANGE = (47.0, 81.0)
DEFAULT_SPLIT = (0.75, 0.05, 0.20)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.flags.writeable = False
    return array


class Cohort:
    """
    Subjects × (imaging features X, non-imaging phenotypes Q, age y).

    Arrays are copied and made read-only on construction.
    """

    def __init__(
        self,
        imaging: np.ndarray,
        phenotypes: np.ndarray,
        ages: np.ndarray,
        schema: PhenotypeSchema,
        scaling: Optional[Dict[str, Tuple[float, float]]] = None
    ):
        self.imaging = _frozen(imaging)
        self.phenotypes = _frozen(phenotypes)
        self.ages = _frozen(ages)
        self.schema = schema
        self.scaling: Dict[str, Tuple[float, float]] = dict(scaling or {})
        self._validate()

    def _validate(self) -> None:
        n = self.ages.shape[0] if self.ages.ndim == 1 else -1
        if n < 1:
            raise DataError(f"ages must be a non-empty vector, got shape {self.ages.shape}")
        if self.imaging.shape != (n, self.schema.imaging_features):
            raise DataError(
                f"imaging matrix has shape {self.imaging.shape}, expected ({n}, {self.schema.imaging_features})"
            )
        if self.phenotypes.shape != (n, self.schema.num_phenotypes):
            raise DataError(
                f"phenotype matrix has shape {self.phenotypes.shape}, expected ({n}, {self.schema.num_phenotypes})"
            )
        for name, block in (("imaging", self.imaging), ("phenotypes", self.phenotypes), ("age", self.ages)):
            if not np.all(np.isfinite(block)):
                raise DataError(f"{name} contains non-finite values")
        for k, spec in enumerate(self.schema.phenotypes):
            if spec.kind == "categorical":
                column = self.phenotypes[:, k]
                if not np.array_equal(column, np.round(column)):
                    raise DataError(f"categorical phenotype '{spec.name}' holds non-integer codes")

    @property
    def num_subjects(self) -> int:
        return int(self.ages.shape[0])

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array(self.schema.categorical_mask, dtype=bool)

    def __repr__(self) -> str:
        return (f"<Cohort N={self.num_subjects} M={self.schema.imaging_features} "
                f"K={self.schema.num_phenotypes}>")


def _minmax(column: np.ndarray) -> Tuple[np.ndarray, float, float]:
    lo, hi = float(column.min()), float(column.max())
    if hi == lo:
        return np.zeros_like(column), lo, hi
    return (column - lo) / (hi - lo), lo, hi


def normalize(cohort: Cohort) -> Cohort:
    """
    Min-max scale every imaging and continuous phenotype column to [0, 1].

    Categorical phenotypes and age are untouched; constant columns become
    all-zeros. The (min, max) of each scaled input column is kept in
    ``scaling``.
    """
    imaging = np.array(cohort.imaging)
    phenotypes = np.array(cohort.phenotypes)
    scaling: Dict[str, Tuple[float, float]] = {}

    for j, name in enumerate(cohort.schema.imaging_columns()):
        imaging[:, j], lo, hi = _minmax(imaging[:, j])
        scaling[name] = (lo, hi)
    for k, spec in enumerate(cohort.schema.phenotypes):
        if spec.kind == "continuous":
            phenotypes[:, k], lo, hi = _minmax(phenotypes[:, k])
            scaling[spec.name] = (lo, hi)

    return Cohort(imaging, phenotypes, cohort.ages, cohort.schema, scaling)


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

def synthetic_schema(config: SyntheticCohortConfig) -> PhenotypeSchema:
    specs = [PhenotypeSpec(name=f"cat_{k}", kind="categorical") for k in range(config.categorical_phenotypes)]
    specs += [PhenotypeSpec(name=f"cont_{k}", kind="continuous") for k in range(config.continuous_phenotypes)]
    return PhenotypeSchema(phenotypes=specs, imaging_features=config.imaging_features)


def _sample_ages(config: SyntheticCohortConfig, rng: np.random.Generator) -> np.ndarray:
    """Truncated two-component normal mixture, by rejection."""
    accepted: List[np.ndarray] = []
    remaining = config.num_subjects
    while remaining > 0:
        batch = max(2 * remaining, 64)
        major = rng.random(batch) < config.major_weight
        draws = np.where(
            major,
            rng.normal(config.major_mean, config.major_std, batch),
            rng.normal(config.minor_mean, config.minor_std, batch),
        )
        keep = draws[(draws >= config.age_min) & (draws <= config.age_max)][:remaining]
        accepted.append(keep)
        remaining -= keep.size
    return np.concatenate(accepted)


def _age_driven(latent: np.ndarray, width: int, snr: float, rng: np.random.Generator) -> np.ndarray:
    """
    Columns = latent · w_j + noise with per-column signal/noise variance ratio ``snr``.
    """
    weights = rng.normal(size=width)
    noise = rng.normal(size=(latent.size, width))
    if snr == 0.0:
        return noise
    return np.outer(latent, weights) + noise * (np.abs(weights) / math.sqrt(snr))


def generate_synthetic(config: SyntheticCohortConfig) -> Cohort:
    """
    Generate a normalized synthetic cohort, deterministic given ``config.seed``.

    Ages follow the configured truncated mixture. Imaging features and
    continuous phenotypes are seeded random linear maps of standardized age
    plus Gaussian noise at the requested signal-to-noise ratio. Categorical
    phenotypes quantile-bin age-correlated latents into
    ``categorical_levels`` codes.
    """
    rng = np.random.default_rng(config.seed)
    schema = synthetic_schema(config)

    ages = _sample_ages(config, rng)
    spread = ages.std()
    latent = (ages - ages.mean()) / (spread if spread > 0 else 1.0)

    imaging = _age_driven(latent, config.imaging_features, config.snr, rng)

    psnr = config.effective_phenotype_snr
    categorical = _age_driven(latent, config.categorical_phenotypes, psnr, rng)
    levels = config.categorical_levels
    for k in range(config.categorical_phenotypes):
        cuts = np.quantile(categorical[:, k], np.arange(1, levels) / levels)
        categorical[:, k] = np.searchsorted(cuts, categorical[:, k], side="right")
    continuous = _age_driven(latent, config.continuous_phenotypes, psnr, rng)

    cohort = Cohort(imaging, np.hstack([categorical, continuous]), ages, schema)
    logger.info(
        f"[Cohort] Generated synthetic cohort N={config.num_subjects} M={config.imaging_features} "
        f"K={schema.num_phenotypes} snr={config.snr} seed={config.seed}"
    )
    return normalize(cohort)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    """Disjoint train / validation / test index sets covering 0..N-1."""
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    fractions: Tuple[float, float, float]
    seed: int

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return (int(self.train.size), int(self.val.size), int(self.test.size))

    def role_of(self, num_nodes: int) -> List[str]:
        """Per-node split name."""
        roles = ["unassigned"] * num_nodes
        for name, idx in (("train", self.train), ("val", self.val), ("test", self.test)):
            for i in idx:
                roles[int(i)] = name
        return roles


def split(
    cohort: Union[Cohort, int],
    fractions: Sequence[float] = DEFAULT_SPLIT,
    seed: int = 0,
) -> Split:
    """
    Random train/validation/test partition.

    Sizes are floor(f_train·N) and floor(f_val·N); the remainder goes to test.

    Raises:
        ConfigError: If fractions are not three positive numbers summing to 1
    """
    n = cohort.num_subjects if isinstance(cohort, Cohort) else int(cohort)
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError(f"split fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {sum(fractions)!r}")
    if n < 3:
        raise ConfigError(f"cannot split {n} subjects into three sets")

    n_train = int(math.floor(fractions[0] * n + 1e-9))
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    order = np.random.default_rng(seed).permutation(n)
    return Split(
        train=np.sort(order[:n_train]),
        val=np.sort(order[n_train:n_train + n_val]),
        test=np.sort(order[n_train + n_val:]),
        fractions=fractions,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def write_schema(schema: PhenotypeSchema, path: Union[str, Path]) -> None:
    """Write the key-value schema sidecar."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["schema"] = {"imaging_features": str(schema.imaging_features)}
    parser["phenotypes"] = {p.name: p.kind for p in schema.phenotypes}
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            parser.write(handle)
    except OSError as e:
        raise DataError(f"cannot write schema file '{path}': {e}") from e


def load_schema(path: Union[str, Path]) -> PhenotypeSchema:
    """Read a schema sidecar written by :func:`write_schema`."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except (OSError, configparser.Error) as e:
        raise DataError(f"cannot read schema file '{path}': {e}") from e
    if not parser.has_section("phenotypes"):
        raise DataError(f"schema file '{path}' has no [phenotypes] section")
    try:
        return PhenotypeSchema(
            phenotypes=[PhenotypeSpec(name=k, kind=v.strip()) for k, v in parser["phenotypes"].items()],
            imaging_features=int(parser.get("schema", "imaging_features", fallback="68")),
        )
    except ValueError as e:
        raise DataError(f"invalid schema file '{path}': {e}") from e


def cohort_columns(schema: PhenotypeSchema) -> List[str]:
    return ["age"] + schema.imaging_columns() + schema.names


def write_cohort(cohort: Cohort, path: Union[str, Path]) -> None:
    """Write the cohort CSV (header ``age,img_0..img_{M-1},<phenotypes>``)."""
    frame = pd.DataFrame(
        np.hstack([cohort.ages[:, None], cohort.imaging, cohort.phenotypes]),
        columns=cohort_columns(cohort.schema),
    )
    try:
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    except OSError as e:
        raise DataError(f"cannot write cohort file '{path}': {e}") from e


def load_cohort(
    path: Union[str, Path],
    schema: PhenotypeSchema,
    age_range: Optional[Tuple[float, float]] = DEFAULT_AGE_RANGE,
) -> Cohort:
    """
    Parse a cohort CSV, preserving row order.

    Raises:
        DataError: On an empty file, missing columns, missing or non-numeric
            cells (reported with file row and column), or out-of-range ages
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"cohort file '{path}' is empty") from e
    except (OSError, pd.errors.ParserError) as e:
        raise DataError(f"cannot read cohort file '{path}': {e}") from e
    if frame.shape[0] == 0:
        raise DataError(f"cohort file '{path}' has a header but no rows")

    required = cohort_columns(schema)
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataError(f"cohort file '{path}' is missing column(s): {', '.join(missing)}")

    parsed = np.empty((frame.shape[0], len(required)))
    for j, column in enumerate(required):
        for i, cell in enumerate(frame[column].tolist()):
            text = cell.strip()
            if not text:
                raise DataError(f"{path}: row {i + 2}, column '{column}': missing value")
            try:
                parsed[i, j] = float(text)
            except ValueError:
                raise DataError(f"{path}: row {i + 2}, column '{column}': non-numeric value '{cell}'") from None

    ages = parsed[:, 0]
    if age_range is not None:
        outside = np.flatnonzero((ages < age_range[0]) | (ages > age_range[1]))
        if outside.size:
            raise DataError(
                f"{path}: row {int(outside[0]) + 2}, column 'age': {ages[outside[0]]} outside {age_range}"
            )
    m = schema.imaging_features
    cohort = Cohort(parsed[:, 1:1 + m], parsed[:, 1 + m:], ages, schema)
    logger.info(f"[Cohort] Loaded {cohort!r} from {path}")
    return cohort
