"""
File Handler Module
===================

This module handles all file I/O for the DART2 toolkit: reading statistic,
p-value, distance, ordering and benchmark CSVs, reading and writing the
aggregation tree document, and writing rejection reports, simulation tables
and the run manifest.

CSV inputs carry a header row and 1-based hypothesis ids. Every error names
the offending file, row or column. Output CSVs are UTF-8 with a header row.

Tree document (JSON):
    {"m": 7, "M": 2, "L": 3, "layers": [[[1, 2], [3, 4], [5, 6], [7]], [[1, 2], [3, 4]]]}
Layer 1 (the singletons) is implicit; `layers[k]` lists the nodes of layer
k + 2, each as 1-based indices of its children in the layer below.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import json
import logging
import os
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from aggregation_tree import AggregationTree, TreeNode, validate_tree
from core import InputDomainError, PValueVector, StatisticVector


__version__ = "1.0.0"


@dataclass
class RunManifest:
    """
    Everything needed to reproduce a command invocation.

    Attributes:
        command (str): Subcommand name
        inputs (Dict[str, str]): Input role -> path
        config (Dict[str, Any]): Effective configuration (defaults, file, CLI)
        version (str): Toolkit version
        seed (Optional[int]): Master seed, when the command is random
        outputs (Dict[str, str]): Output role -> path
        started (str): ISO timestamp
        elapsed_seconds (float): Wall-clock duration
    """
    command: str
    inputs: Dict[str, str] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    version: str = __version__
    seed: Optional[int] = None
    outputs: Dict[str, str] = field(default_factory=dict)
    started: str = ""
    elapsed_seconds: float = 0.0
    python: str = field(default_factory=platform.python_version)
    numpy: str = np.__version__
    pandas: str = pd.__version__


class FileHandler:
    """
    Handles all file I/O operations for the DART2 toolkit.

    Features:
    - Statistics / p-value CSVs with strict 1..m id checks
    - Distance matrix and ordering CSVs for tree construction
    - Tree JSON documents with validation on load
    - Rejection, per-layer, results and summary CSVs
    - Run manifest tracking every file written
    """

    def __init__(self):
        """Initialize the file handler with logging and output tracking."""
        self.logger = logging.getLogger(__name__)
        self.files_written: List[str] = []

    # ------------------------------------------------------------------
    # Reading
    # ------------------------------------------------------------------

    def read_csv(self, file_path: str) -> pd.DataFrame:
        """
        Read a CSV file with a header row.

        Raises:
            FileNotFoundError: If the file doesn't exist
            InputDomainError: If the file cannot be parsed or is empty
        """
        self.logger.info(f"Reading CSV file: {file_path}")

        if not os.path.exists(file_path):
            error_msg = f"CSV file not found: {file_path}"
            self.logger.error(error_msg)
            raise FileNotFoundError(error_msg)

        try:
            df = pd.read_csv(file_path, encoding="utf-8", skipinitialspace=True, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            error_msg = f"CSV parsing error in {file_path}: {e}"
            self.logger.error(error_msg)
            raise InputDomainError(error_msg) from e

        if df.empty:
            raise InputDomainError(f"{file_path}: no data rows")
        self.logger.debug(f"Read {len(df)} rows, columns {list(df.columns)}")
        return df

    def _numeric_column(self, df: pd.DataFrame, column: str, file_path: str) -> np.ndarray:
        """Column as floats; names the first non-numeric row (1-based data row)."""
        values = pd.to_numeric(df[column], errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            row = int(bad[0]) + 1
            raise InputDomainError(
                f"{file_path}: row {row}, column '{column}': not a number ({df[column].iloc[bad[0]]!r})"
            )
        return values.to_numpy(dtype=float)

    def _read_id_value(self, file_path: str, value_names: Tuple[str, ...]) -> np.ndarray:
        """Two-column (hypothesis_id, value) CSV, returned in id order."""
        df = self.read_csv(file_path)
        columns = [str(c).strip() for c in df.columns]
        df.columns = columns
        if len(columns) != 2:
            raise InputDomainError(
                f"{file_path}: expected 2 columns (hypothesis_id, value), found {len(columns)}"
            )
        id_col = "hypothesis_id" if "hypothesis_id" in columns else columns[0]
        value_col = next((c for c in columns if c in value_names), None) or [c for c in columns if c != id_col][0]

        ids = self._numeric_column(df, id_col, file_path)
        values = self._numeric_column(df, value_col, file_path)
        m = len(df)
        if np.any(ids != np.round(ids)):
            row = int(np.flatnonzero(ids != np.round(ids))[0]) + 1
            raise InputDomainError(f"{file_path}: row {row}, column '{id_col}': id must be an integer")
        ids = ids.astype(np.int64)

        seen = np.zeros(m + 1, dtype=bool)
        for row, i in enumerate(ids, start=1):
            if not 1 <= i <= m:
                raise InputDomainError(f"{file_path}: row {row}, column '{id_col}': id {i} outside 1..{m}")
            if seen[i]:
                raise InputDomainError(f"{file_path}: row {row}, column '{id_col}': duplicate id {i}")
            seen[i] = True

        ordered = np.empty(m, dtype=float)
        ordered[ids - 1] = values
        return ordered

    def read_statistics(self, file_path: str) -> StatisticVector:
        """z-scale statistics CSV: hypothesis_id, value."""
        stats = StatisticVector(self._read_id_value(file_path, ("value", "statistic", "z")))
        self.logger.info(f"Loaded {stats.m} statistics from {file_path}")
        return stats

    def read_pvalues(self, file_path: str) -> PValueVector:
        """P-value CSV: hypothesis_id, value (each strictly inside (0, 1))."""
        p = PValueVector(self._read_id_value(file_path, ("value", "pvalue", "p")))
        self.logger.info(f"Loaded {p.m} p-values from {file_path}")
        return p

    def read_distances(self, file_path: str) -> np.ndarray:
        """
        Distance matrix CSV.

        Either a square matrix with a header row of hypothesis labels, or a
        long table (i, j, distance) with 1-based ids; missing pairs in the
        long form are filled symmetrically.
        """
        df = self.read_csv(file_path)
        columns = [str(c).strip() for c in df.columns]
        df.columns = columns

        if columns == ["i", "j", "distance"]:
            i = self._numeric_column(df, "i", file_path).astype(np.int64)
            j = self._numeric_column(df, "j", file_path).astype(np.int64)
            dist = self._numeric_column(df, "distance", file_path)
            m = int(max(i.max(), j.max()))
            if min(i.min(), j.min()) < 1:
                raise InputDomainError(f"{file_path}: ids must be positive")
            d = np.full((m, m), np.nan)
            np.fill_diagonal(d, 0.0)
            d[i - 1, j - 1] = dist
            d[j - 1, i - 1] = np.where(np.isnan(d[j - 1, i - 1]), dist, d[j - 1, i - 1])
            if np.isnan(d).any():
                a, b = np.argwhere(np.isnan(d))[0]
                raise InputDomainError(f"{file_path}: no distance for pair ({a + 1}, {b + 1})")
        else:
            if len(df) != len(columns):
                raise InputDomainError(
                    f"{file_path}: distance matrix has {len(df)} rows and {len(columns)} columns"
                )
            d = np.column_stack([self._numeric_column(df, c, file_path) for c in columns])

        self.logger.info(f"Loaded {d.shape[0]} x {d.shape[1]} distance matrix from {file_path}")
        return d

    def read_ordering(self, file_path: str) -> np.ndarray:
        """Ordering CSV: hypothesis_id, rank (ranks a permutation of 1..m)."""
        ranks = self._read_id_value(file_path, ("rank", "value"))
        if np.any(ranks != np.round(ranks)):
            raise InputDomainError(f"{file_path}: ranks must be integers")
        return ranks.astype(np.int64)

    def read_benchmark(self, file_path: str, m: Optional[int] = None) -> frozenset:
        """Benchmark list: one column of 1-based hypothesis ids, returned 0-based."""
        df = self.read_csv(file_path)
        column = str(df.columns[0])
        ids = self._numeric_column(df, df.columns[0], file_path).astype(np.int64)
        if m is not None:
            bad = np.flatnonzero((ids < 1) | (ids > m))
            if bad.size:
                raise InputDomainError(
                    f"{file_path}: row {int(bad[0]) + 1}, column '{column}': id {ids[bad[0]]} outside 1..{m}"
                )
        return frozenset(int(i) - 1 for i in ids)

    def read_locations(self, file_path: str) -> np.ndarray:
        """Locations CSV: hypothesis_id, x, y."""
        df = self.read_csv(file_path)
        df.columns = [str(c).strip() for c in df.columns]
        for column in ("x", "y"):
            if column not in df.columns:
                raise InputDomainError(f"{file_path}: missing column '{column}'")
        return np.column_stack([self._numeric_column(df, c, file_path) for c in ("x", "y")])

    # ------------------------------------------------------------------
    # Tree documents
    # ------------------------------------------------------------------

    @staticmethod
    def tree_to_dict(tree: AggregationTree) -> Dict[str, Any]:
        """Serializable form with 1-based child indices; layer 1 implicit."""
        return {
            "m": tree.m,
            "M": tree.max_children,
            "L": tree.num_layers,
            "layers": [
                [[c + 1 for c in node.children] for node in tree.layer(level)]
                for level in range(2, tree.num_layers + 1)
            ],
        }

    @staticmethod
    def tree_from_dict(doc: Dict[str, Any]) -> AggregationTree:
        """
        Rebuild and validate a tree document.

        Raises:
            InputDomainError: On missing fields or any broken tree invariant
        """
        for key in ("m", "M", "L", "layers"):
            if key not in doc:
                raise InputDomainError(f"tree document is missing '{key}'")
        m, max_children, num_layers = int(doc["m"]), int(doc["M"]), int(doc["L"])
        if m < 1 or num_layers < 1:
            raise InputDomainError(f"tree document has m={m}, L={num_layers}")
        if len(doc["layers"]) != num_layers - 1:
            raise InputDomainError(
                f"tree document declares L={num_layers} but lists {len(doc['layers'])} layers above layer 1"
            )

        layers = [tuple(TreeNode(members=(i,)) for i in range(m))]
        for offset, nodes in enumerate(doc["layers"]):
            level = offset + 2
            prev = layers[-1]
            built = []
            for k, children in enumerate(nodes):
                child_idx = tuple(int(c) - 1 for c in children)
                bad = [c + 1 for c in child_idx if not 0 <= c < len(prev)]
                if bad:
                    raise InputDomainError(f"tree layer {level}, node {k + 1}: unknown children {bad}")
                members = tuple(sorted(i for c in child_idx for i in prev[c].members))
                built.append(TreeNode(members=members, children=child_idx))
            layers.append(tuple(built))

        tree = AggregationTree(m=m, max_children=max_children, layers=tuple(layers))
        violations = validate_tree(tree)
        if violations:
            raise InputDomainError("invalid tree document:\n" + "\n".join(str(v) for v in violations))
        return tree

    def write_tree(self, tree: AggregationTree, output_path: str) -> str:
        """Write a tree document; returns the path."""
        self._ensure_parent(output_path)
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(self.tree_to_dict(tree), f)
            f.write("\n")
        self._record(output_path)
        self.logger.info(f"Tree with {tree.num_layers} layers written to {output_path}")
        return output_path

    def read_tree(self, file_path: str) -> AggregationTree:
        """Read and validate a tree document."""
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"Tree file not found: {file_path}")
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except json.JSONDecodeError as e:
            raise InputDomainError(f"{file_path}: not a JSON tree document (line {e.lineno}, column {e.colno})") from e
        tree = self.tree_from_dict(doc)
        self.logger.info(f"Loaded {tree.num_layers}-layer tree over {tree.m} hypotheses from {file_path}")
        return tree

    # ------------------------------------------------------------------
    # Writing
    # ------------------------------------------------------------------

    def _ensure_parent(self, path: str) -> None:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)

    def _record(self, path: str) -> None:
        if path not in self.files_written:
            self.files_written.append(path)

    def write_frame(self, df: pd.DataFrame, output_path: str) -> str:
        """Write a table as UTF-8 CSV with a header row and no index."""
        self._ensure_parent(output_path)
        df.to_csv(output_path, index=False, encoding="utf-8", lineterminator="\n")
        self._record(output_path)
        self.logger.info(f"Wrote {len(df)} rows to {output_path}")
        return output_path

    def write_id_list(self, ids, output_path: str, column: str = "hypothesis_id") -> str:
        """Write 0-based ids as a one-column CSV of 1-based ids."""
        return self.write_frame(pd.DataFrame({column: sorted(int(i) + 1 for i in ids)}), output_path)

    def write_locations(self, locations: np.ndarray, output_path: str) -> str:
        """Write m x 2 locations as hypothesis_id, x, y."""
        loc = np.asarray(locations, dtype=float)
        df = pd.DataFrame({"hypothesis_id": np.arange(1, loc.shape[0] + 1), "x": loc[:, 0], "y": loc[:, 1]})
        return self.write_frame(df, output_path)

    def write_manifest(self, manifest: RunManifest, output_path: str) -> str:
        """
        Write the run manifest.

        Raises:
            InputDomainError: If an output the manifest names does not exist
        """
        missing = [p for p in manifest.outputs.values() if not os.path.exists(p)]
        if missing:
            raise InputDomainError(f"manifest names missing outputs: {missing}")
        self._ensure_parent(output_path)
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(asdict(manifest), f, indent=2, sort_keys=True, default=str)
            f.write("\n")
        self._record(output_path)
        self.logger.info(f"Manifest written to {output_path}")
        return output_path

    @staticmethod
    def timestamp() -> str:
        return datetime.now().isoformat(timespec="seconds")
