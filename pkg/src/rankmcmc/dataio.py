"""Dataset files, run configuration, and artifact export.

A dataset is comma-delimited text with a header row: one column per declared
covariate factor, then ranking columns r1..rp where column rk holds the rank
the respondent gave item k (one-line notation). The factor declaration lives
in a YAML sidecar schema; a row's category index is the 1-based lexicographic
position of its level tuple in the cross product of the declared level lists,
first factor most significant. Unseen level combinations are legal and yield
empty categories.

Run configuration is a single YAML mapping; every artifact directory gets a
JSON manifest recording the resolved configuration, its hash, and a checksum
per output file, so any artifact can be regenerated and byte-compared from
the manifest alone. Manifests carry no timestamps.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, DataError
from .model import CategoryPriors, RankCounts
from .permutation import MAX_ITEMS, rank, unrank


@dataclass(frozen=True)
class Factor:
    name: str
    levels: tuple[str, ...]


@dataclass(frozen=True)
class DatasetSchema:
    """Declared shape of a dataset: item count and ordered covariate factors.

    ``g`` is the product of the level counts; with no factors every row lands
    in the single category 1.
    """

    items: int
    factors: tuple[Factor, ...]

    def __post_init__(self):
        if not 1 <= self.items <= MAX_ITEMS:
            raise DataError(f"items must be in 1..{MAX_ITEMS}, "
                            f"got {self.items}")
        seen = set()
        for f in self.factors:
            if not f.name or f.name in seen:
                raise DataError(f"factor names must be nonempty and unique, "
                                f"got {f.name!r}")
            seen.add(f.name)
            if f.name.startswith("r") and f.name[1:].isdigit():
                raise DataError(f"factor name {f.name!r} collides with the "
                                f"ranking columns")
            if len(f.levels) == 0 or len(set(f.levels)) != len(f.levels):
                raise DataError(f"levels of factor {f.name!r} must be "
                                f"nonempty and unique")

    @property
    def g(self) -> int:
        n = 1
        for f in self.factors:
            n *= len(f.levels)
        return n

    @property
    def column_names(self) -> list[str]:
        return ([f.name for f in self.factors]
                + [f"r{k}" for k in range(1, self.items + 1)])

    def category_index(self, levels) -> int:
        """1-based lexicographic index of a level tuple."""
        if len(levels) != len(self.factors):
            raise DataError(f"expected {len(self.factors)} levels, "
                            f"got {len(levels)}")
        idx = 0
        for f, val in zip(self.factors, levels):
            try:
                pos = f.levels.index(val)
            except ValueError:
                raise DataError(f"unknown level {val!r} for factor "
                                f"{f.name!r}") from None
            idx = idx * len(f.levels) + pos
        return idx + 1

    def category_levels(self, index: int) -> tuple[str, ...]:
        """Level tuple of a 1-based category index."""
        if not 1 <= index <= self.g:
            raise DataError(f"category index {index} out of range 1..{self.g}")
        rem = index - 1
        out = []
        for f in reversed(self.factors):
            rem, pos = divmod(rem, len(f.levels))
            out.append(f.levels[pos])
        return tuple(reversed(out))


def default_schema(p: int, g: int) -> DatasetSchema:
    """Single synthetic factor ``category`` with levels c1..cg."""
    return DatasetSchema(
        items=p,
        factors=(Factor("category", tuple(f"c{j}" for j in range(1, g + 1))),))


def load_schema(path) -> DatasetSchema:
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except OSError as exc:
        raise DataError(f"cannot read schema file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise DataError(f"schema file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict) or "items" not in raw:
        raise DataError(f"schema file {path} must be a mapping with an "
                        f"'items' key")
    items = raw["items"]
    if not isinstance(items, int):
        raise DataError("schema 'items' must be an integer")
    factors = []
    for entry in raw.get("factors", []) or []:
        if (not isinstance(entry, dict) or "name" not in entry
                or "levels" not in entry):
            raise DataError("each factor needs 'name' and 'levels' keys")
        levels = entry["levels"]
        if not isinstance(levels, list):
            raise DataError(f"levels of factor {entry['name']!r} must be "
                            f"a list")
        factors.append(Factor(str(entry["name"]),
                              tuple(str(v) for v in levels)))
    return DatasetSchema(items=items, factors=tuple(factors))


def save_schema(schema: DatasetSchema, path) -> None:
    doc = {"items": schema.items,
           "factors": [{"name": f.name, "levels": list(f.levels)}
                       for f in schema.factors]}
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=False)


@dataclass(frozen=True)
class Dataset:
    """Loaded rows plus their derived category indices and rank counts."""

    schema: DatasetSchema
    categories: np.ndarray
    words: np.ndarray

    @property
    def p(self) -> int:
        return self.schema.items

    @property
    def g(self) -> int:
        return self.schema.g

    @property
    def n_rows(self) -> int:
        return int(self.categories.size)

    def counts(self) -> RankCounts:
        # word index tally per category; empty categories stay all-zero
        order = math.factorial(self.p)
        counts = np.zeros((self.g, order), dtype=np.int64)
        for cat, word in zip(self.categories, self.words):
            counts[cat - 1, rank(word) - 1] += 1
        return RankCounts(p=self.p, g=self.g, counts=counts)


def load_dataset(path, schema: DatasetSchema) -> Dataset:
    """Read a dataset file against its schema.

    Malformed rows raise with the 1-based file line number: wrong column
    count, undeclared level value, non-integer rank, or a rank row that is
    not a permutation of 1..p.
    """
    expected = schema.column_names
    p = schema.items
    categories = []
    words = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc
    header = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            if header != expected:
                raise DataError(f"line {lineno}: header {header} does not "
                                f"match schema columns {expected}")
            continue
        if len(cells) != len(expected):
            raise DataError(f"line {lineno}: expected {len(expected)} "
                            f"columns, got {len(cells)}")
        levels = cells[:len(schema.factors)]
        try:
            cat = schema.category_index(levels)
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        try:
            word = [int(c) for c in cells[len(schema.factors):]]
        except ValueError:
            raise DataError(f"line {lineno}: ranks must be integers, "
                            f"got {cells[len(schema.factors):]}") from None
        if sorted(word) != list(range(1, p + 1)):
            raise DataError(f"line {lineno}: ranks {word} are not a "
                            f"permutation of 1..{p}")
        categories.append(cat)
        words.append(word)
    if header is None:
        raise DataError(f"data file {path} is empty")
    return Dataset(schema=schema,
                   categories=np.asarray(categories, dtype=np.int64),
                   words=np.asarray(words, dtype=np.int64).reshape(
                       len(words), p))


def save_dataset(dataset: Dataset, path) -> None:
    schema = dataset.schema
    with open(path, "w") as f:
        f.write(",".join(schema.column_names) + "\n")
        for cat, word in zip(dataset.categories, dataset.words):
            row = list(schema.category_levels(int(cat))) + [str(int(v))
                                                            for v in word]
            f.write(",".join(row) + "\n")


def dataset_from_counts(counts: RankCounts, schema: DatasetSchema) -> Dataset:
    """Expand a count table into rows, category-major then word order."""
    if schema.items != counts.p or schema.g != counts.g:
        raise DataError(f"schema shape (p={schema.items}, g={schema.g}) does "
                        f"not match counts (p={counts.p}, g={counts.g})")
    categories = []
    words = []
    for j in range(counts.g):
        for i in range(counts.order):
            c = int(counts.counts[j, i])
            if c == 0:
                continue
            word = unrank(i + 1, counts.p)
            for _ in range(c):
                categories.append(j + 1)
                words.append(word)
    return Dataset(schema=schema,
                   categories=np.asarray(categories, dtype=np.int64),
                   words=np.asarray(words, dtype=np.int64).reshape(
                       len(words), counts.p))


def load_priors(path, g: int, order: int) -> CategoryPriors:
    """Per-category prior pmfs: g comma-delimited rows of p! probabilities.

    Comment lines starting with '#' are skipped. Rows are validated, not
    renormalized; a row off by more than 1e-12 is an error.
    """
    rows = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read prior file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = line.split(",")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise DataError(f"line {lineno}: prior entries must be "
                            f"numbers") from None
        if len(rows[-1]) != order:
            raise DataError(f"line {lineno}: expected {order} prior "
                            f"entries, got {len(rows[-1])}")
    if len(rows) != g:
        raise DataError(f"prior file {path} has {len(rows)} rows, "
                        f"expected {g}")
    try:
        return CategoryPriors(np.asarray(rows, dtype=float))
    except ValueError as exc:
        raise DataError(f"prior file {path}: {exc}") from exc


def load_config(path) -> dict:
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: "
                          f"{exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must be a key/value mapping")
    return raw


def _canonical(obj):
    """Mapping with sorted keys, numpy scalars unwrapped, for stable hashes."""
    if isinstance(obj, dict):
        return {str(k): _canonical(obj[k]) for k in sorted(obj, key=str)}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def config_digest(resolved: dict) -> str:
    canon = json.dumps(_canonical(resolved), sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, command: str, resolved: dict,
                   artifact_names, input_paths=()) -> Path:
    """JSON manifest for one run: resolved settings (output directory
    excluded, artifacts are relative to the manifest), a hash of those
    settings, checksums of the declared inputs, and a checksum per artifact.
    """
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config": _canonical(resolved),
        "config_sha256": config_digest(resolved),
        "inputs": [{"path": str(p), "sha256": file_digest(p)}
                   for p in input_paths],
        "artifacts": [{"name": name,
                       "sha256": file_digest(out_dir / name)}
                      for name in artifact_names],
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_summary(path, mapping: dict) -> None:
    """Flat key=value lines; floats at full precision, arrays comma-joined."""
    with open(path, "w") as f:
        for key, val in mapping.items():
            f.write(f"{key}={_format_value(val)}\n")


def _format_value(val) -> str:
    if isinstance(val, (bool, np.bool_)):
        return "true" if val else "false"
    if isinstance(val, (float, np.floating)):
        return "%.17g" % val
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    if isinstance(val, (list, tuple, np.ndarray)):
        return ",".join(_format_value(v) for v in val)
    return str(val)


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key] = val
    return out


def write_matrix(path, M, state_labels=None, comment_lines=()) -> None:
    """Delimited numeric matrix with the state ordering in header comments."""
    M = np.asarray(M, dtype=float)
    with open(path, "w") as f:
        for line in comment_lines:
            f.write(f"# {line}\n")
        if state_labels is not None:
            f.write("# states (row and column order): "
                    + " ".join(state_labels) + "\n")
        for row in np.atleast_2d(M):
            f.write(",".join("%.17g" % x for x in row) + "\n")


def read_matrix(path) -> np.ndarray:
    rows = [line.split(",") for line in Path(path).read_text().splitlines()
            if line.strip() and not line.startswith("#")]
    return np.asarray(rows, dtype=float)


def state_labels(states: np.ndarray) -> list[str]:
    """Render enumerated center tuples as (i1,...,ig) word-index labels."""
    return ["(" + ",".join(str(int(v)) for v in row) + ")"
            for row in np.atleast_2d(states)]


def write_em_trajectory(path, trajectory, inner_sizes) -> None:
    """Delimited EM path: iteration number, precision value, and the length
    of the chain that produced the step (0 for the starting value)."""
    trajectory = np.asarray(trajectory, dtype=float)
    inner_sizes = np.asarray(inner_sizes, dtype=np.int64)
    if trajectory.size != inner_sizes.size:
        raise ValueError("one chain size per trajectory entry required")
    with open(path, "w") as f:
        f.write("iteration,lambda,chain_iterations\n")
        for t, (lam, size) in enumerate(zip(trajectory, inner_sizes)):
            f.write(f"{t},{'%.17g' % lam},{int(size)}\n")
