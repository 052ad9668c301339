"""Long-format CSV ingestion for clustered binary data.

One row per observation; rows sharing a subject id form one cluster (in
file order, clusters ordered by first appearance).  The loader does no
formula algebra: interaction columns must be precomputed in the file.
Row numbers in error messages count data rows from 1 (the header is not a
data row).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .inference import ClusterData, Dataset

__all__ = ["ModelSpec", "DataFormatError", "load_dataset", "write_long_csv"]


class DataFormatError(ValueError):
    """A malformed input table, with the offending row/column in the message."""


@dataclass(frozen=True)
class ModelSpec:
    """Column roles: response, subject id, and ordered covariates."""

    response: str
    subject: str
    covariates: tuple[str, ...] = ()
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        names = [self.response, self.subject, *self.covariates]
        if len(set(names)) != len(names):
            raise ValueError(f"column roles must be distinct, got {names}")
        if not self.covariates and not self.intercept:
            raise ValueError("need at least one covariate or an intercept")

    @property
    def design_columns(self) -> list[str]:
        cols = ["(intercept)"] if self.intercept else []
        return cols + list(self.covariates)

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "subject": self.subject,
            "covariates": list(self.covariates),
            "intercept": self.intercept,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            response=d["response"],
            subject=d["subject"],
            covariates=tuple(d.get("covariates", ())),
            intercept=bool(d.get("intercept", True)),
        )


def load_dataset(path, spec: ModelSpec) -> Dataset:
    """Read a long-format CSV and group rows into clusters by subject id.

    The design matrix puts the intercept first (when present) followed by
    the covariates in declared order.  Distinct failure modes raise
    :class:`DataFormatError` naming the offending row or column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        col_index = {}
        for name in (spec.response, spec.subject, *spec.covariates):
            if name not in header:
                raise DataFormatError(f"{path}: missing column {name!r} (header: {header})")
            col_index[name] = header.index(name)
        rows_by_subject: dict[str, list[tuple[int, list[float]]]] = {}
        order: list[str] = []
        n_data_rows = 0
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            n_data_rows += 1
            if len(row) < len(header):
                raise DataFormatError(f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}")
            raw_y = row[col_index[spec.response]].strip()
            if raw_y not in ("0", "1"):
                raise DataFormatError(
                    f"{path}: row {row_no}: response {spec.response!r} must be 0 or 1, got {raw_y!r}"
                )
            covs = []
            for name in spec.covariates:
                raw = row[col_index[name]].strip()
                try:
                    value = float(raw)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {row_no}: covariate {name!r} is not numeric: {raw!r}"
                    ) from None
                if not np.isfinite(value):
                    raise DataFormatError(
                        f"{path}: row {row_no}: covariate {name!r} is not finite: {raw!r}"
                    )
                covs.append(value)
            subject = row[col_index[spec.subject]].strip()
            if subject not in rows_by_subject:
                rows_by_subject[subject] = []
                order.append(subject)
            rows_by_subject[subject].append((int(raw_y), covs))
        if n_data_rows == 0:
            raise DataFormatError(f"{path}: no data rows")
    clusters = []
    for subject in order:
        entries = rows_by_subject[subject]
        y = np.array([e[0] for e in entries], dtype=np.int64)
        cov = np.array([e[1] for e in entries], dtype=float).reshape(len(entries), len(spec.covariates))
        design = [np.ones((len(entries), 1))] if spec.intercept else []
        design.append(cov)
        clusters.append(ClusterData(y=y, X=np.hstack(design)))
    return Dataset(clusters=clusters, subject_ids=order)


def write_long_csv(path, subject_ids, y_by_cluster, covariate_names, covariates_by_cluster):
    """Write a long-format CSV (subject, y, covariates...), 17-digit floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject", "y", *covariate_names])
        for sid, y, cov in zip(subject_ids, y_by_cluster, covariates_by_cluster):
            for j in range(len(y)):
                writer.writerow(
                    [sid, int(y[j]), *(format(float(v), ".17g") for v in cov[j])]
                )
