"""CSV import/export with JSON provenance sidecars.

Complex values are written as adjacent ``*_re`` / ``*_im`` columns. Every CSV
written here is plain RFC-4180 with one header row; run metadata and
provenance go to ``<name>.meta.json`` next to it.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .estimators import ScatterEstimate
from .model import Dataset


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def provenance(config: Optional[dict] = None, seed: Optional[int] = None) -> dict:
    return {"tool": "robust_glrt", "version": __version__,
            "config_sha256": config_hash(config or {}), "seed": seed}


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_meta(path, meta: dict) -> Path:
    mp = meta_path(path)
    mp.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return mp


def read_meta(path) -> dict:
    return json.loads(meta_path(path).read_text())


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], meta: Optional[dict] = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    if meta is not None:
        write_meta(path, meta)
    return path


def read_table(path):
    """Return ``(header, rows)`` with every cell as a string."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def complex_columns(prefix: str, count: int) -> list:
    return [f"{prefix}{k}_{part}" for k in range(count) for part in ("re", "im")]


def _interleave(M: np.ndarray) -> np.ndarray:
    out = np.empty(M.shape[:-1] + (2 * M.shape[-1],))
    out[..., 0::2] = M.real
    out[..., 1::2] = M.imag
    return out


def _deinterleave(A: np.ndarray) -> np.ndarray:
    return A[..., 0::2] + 1j * A[..., 1::2]


def write_complex_matrix(path, M: np.ndarray, meta: Optional[dict] = None) -> Path:
    """One CSV row per matrix row, columns ``c{j}_re, c{j}_im``."""
    M = np.atleast_2d(M)
    return write_table(path, complex_columns("c", M.shape[1]), _interleave(M).tolist(), meta)


def read_complex_matrix(path) -> np.ndarray:
    header, rows = read_table(path)
    return _deinterleave(np.array(rows, dtype=float).reshape(len(rows), len(header)))


def write_dataset(path, data: Dataset, meta: Optional[dict] = None) -> Path:
    """One row per observation: ``x`` columns, then ``tau`` and ``z`` when the
    ground truth is present."""
    N = data.N
    header = complex_columns("x", N)
    block = [_interleave(data.X.T)]
    if data.has_truth:
        header += ["tau"] + complex_columns("z", N)
        block += [data.tau[:, None], _interleave(data.Z.T)]
    meta = dict(meta or {})
    meta.setdefault("N", N)
    meta.setdefault("n", data.n)
    return write_table(path, header, np.hstack(block).tolist(), meta)


def read_dataset(path) -> Dataset:
    header, rows = read_table(path)
    A = np.array(rows, dtype=float).reshape(len(rows), len(header))
    N = sum(1 for h in header if h.startswith("x") and h.endswith("_re"))
    X = _deinterleave(A[:, :2 * N]).T.copy()
    Z = tau = None
    if "tau" in header:
        tau = A[:, 2 * N].copy()
        Z = _deinterleave(A[:, 2 * N + 1:]).T.copy()
    meta = read_meta(path) if meta_path(path).exists() else {}
    return Dataset(X=X, Z=Z, tau=tau, meta=meta)


def write_scatter(path, est: ScatterEstimate, meta: Optional[dict] = None) -> Path:
    meta = dict(meta or {})
    meta.update({"rho": est.rho, "iterations": est.iterations, "final_residual": est.final_residual})
    return write_complex_matrix(path, est.matrix, meta)


def read_scatter(path) -> ScatterEstimate:
    meta = read_meta(path)
    return ScatterEstimate(rho=float(meta["rho"]), matrix=read_complex_matrix(path),
                           iterations=int(meta["iterations"]), final_residual=float(meta["final_residual"]))
