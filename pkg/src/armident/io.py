"""File formats: dataset CSV, JSON documents, tabular traces."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .model import ChainModel
from .regressors import WRENCH_NAMES
from .signal import Dataset


class FormatError(ValueError):
    """A file does not follow its documented format."""


def dataset_columns(n_joints: int, n_pwm: int, contact: bool = False) -> list[str]:
    cols = ["t"] + [f"q{i}" for i in range(n_joints)] + [f"pwm{i}" for i in range(n_pwm)]
    cols += list(WRENCH_NAMES)
    return cols + (["contact"] if contact else [])


def format_rows(header, columns, fmt="%.17g") -> str:
    """CSV text with LF line endings; integer-typed columns written as ints."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    int_cols = [np.issubdtype(np.asarray(c).dtype, np.integer) or np.asarray(c).dtype == bool
                for c in columns]
    fmts = ["%d" if ic else fmt for ic in int_cols]
    np.savetxt(buf, data, fmt=fmts, delimiter=",", newline="\n")
    return buf.getvalue()


def dataset_to_csv(dataset: Dataset) -> str:
    has_contact = dataset.contact is not None
    header = dataset_columns(dataset.q.shape[1], dataset.pwm.shape[1], has_contact)
    cols = [dataset.t, *dataset.q.T, *dataset.pwm.T, *dataset.wrench.T]
    if has_contact:
        cols.append(dataset.contact.astype(np.int64))
    return format_rows(header, cols)


def read_dataset(path, model: ChainModel | None = None) -> Dataset:
    """Read a dataset CSV; with ``model`` the expected columns are checked."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = next(csv.reader([lines[0]]))
    header = [h.strip() for h in header]
    index = {h: i for i, h in enumerate(header)}

    if model is not None:
        expected = dataset_columns(model.n_joints, len(model.measured_joints))
    else:
        n_q = sum(h.startswith("q") and h[1:].isdigit() for h in header)
        n_p = sum(h.startswith("pwm") and h[3:].isdigit() for h in header)
        expected = dataset_columns(n_q, n_p)
    for col in expected:
        if col not in index:
            raise FormatError(f"{path}: dataset is missing column {col!r}")
    try:
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if data.shape[0] == 0:
        raise FormatError(f"{path}: no data rows")
    if data.shape[1] != len(header):
        raise FormatError(f"{path}: {data.shape[1]} values per row, header has {len(header)}")

    def cols(prefix, n):
        return data[:, [index[f"{prefix}{i}"] for i in range(n)]]

    n_q = sum(c.startswith("q") for c in expected)
    n_p = sum(c.startswith("pwm") for c in expected)
    contact = data[:, index["contact"]] != 0 if "contact" in index else None
    try:
        return Dataset(
            t=data[:, index["t"]],
            q=cols("q", n_q),
            pwm=cols("pwm", n_p) if n_p else np.zeros((data.shape[0], 0)),
            wrench=data[:, [index[w] for w in WRENCH_NAMES]],
            contact=contact,
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def dumps(doc) -> str:
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def read_parameter_file(path, size: int) -> np.ndarray:
    """Parameter vector from a params document (``{"values": [...]}``) or a
    bare JSON list."""
    doc = read_json(path)
    values = doc.get("values") if isinstance(doc, dict) else doc
    if values is None:
        raise FormatError(f"{path}: no 'values' field")
    Phi = np.asarray(values, dtype=float).reshape(-1)
    if Phi.size != size:
        raise FormatError(f"{path}: {Phi.size} parameters, model needs {size}")
    return Phi
