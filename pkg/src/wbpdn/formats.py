"""Plain-text matrix files and JSON documents.

Matrix text format: a header line ``m n`` (vectors use ``n 1``) followed by
``m`` rows of whitespace-separated decimals written with 17 significant
digits, which round-trips every double exactly.

All index sets in files are 1-based.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import InputError
from .model import ProblemInstance, make_instance

INSTANCE_FORMAT = "wbpdn-instance"
FORMAT_VERSION = 1


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_matrix_text(a) -> str:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputError(f"expected a vector or matrix, got shape {arr.shape}")
    lines = [f"{arr.shape[0]} {arr.shape[1]}"]
    lines += [" ".join(format_float(v) for v in row) for row in arr]
    return "\n".join(lines) + "\n"


def read_matrix_text(text: str) -> np.ndarray:
    """Parse the matrix text format; always returns a 2-d array."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise InputError("matrix text must start with a 'm n' header line")
    try:
        m, n = int(rows[0][0]), int(rows[0][1])
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise InputError(f"malformed matrix text: {exc}") from None
    if data.shape != (m, n):
        raise InputError(f"header declares {m}x{n} but body is {data.shape}")
    return data


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and an atomic rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_document(doc: Mapping[str, Any]) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def one_based(idx) -> list[int]:
    return [int(i) + 1 for i in idx]


def zero_based(idx, n: int, name: str = "index set") -> list[int]:
    out = [int(i) - 1 for i in idx]
    if any(i < 0 or i >= n for i in out):
        raise InputError(f"{name} has 1-based indices outside [1, {n}]")
    return out


def instance_to_dict(inst: ProblemInstance) -> dict:
    m, n = inst.A.shape
    ens = inst.ensemble
    return {
        "format": INSTANCE_FORMAT,
        "version": FORMAT_VERSION,
        "shape": {"m": m, "n": n, "k": inst.k},
        "matrix": inst.A.tolist(),
        "observation": inst.b.tolist(),
        "truth": inst.truth.tolist(),
        "noise": None if ens.noise is None else ens.noise.tolist(),
        "K": one_based(inst.prior.estimate_set),
        "E": one_based(inst.prior.true_support),
        "rho": inst.prior.rho,
        "alpha": inst.prior.alpha,
        "w": inst.w,
        "lambda": inst.lam,
        "eps": inst.eps,
        "seed": inst.seed,
        "generator": dict(inst.generator),
    }


def instance_from_dict(doc: Mapping[str, Any]) -> ProblemInstance:
    if doc.get("format") != INSTANCE_FORMAT:
        raise InputError(f"not an instance bundle (format={doc.get('format')!r})")
    try:
        A = np.array(doc["matrix"], dtype=float)
        n = A.shape[1] if A.ndim == 2 else 0
        K = zero_based(doc["K"], n, "K")
        return make_instance(
            A,
            doc["observation"],
            doc["truth"],
            K,
            doc["w"],
            doc["lambda"],
            doc["eps"],
            doc["shape"]["k"],
            doc.get("noise"),
            doc.get("seed"),
            doc.get("generator"),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise InputError(f"malformed instance bundle: {exc!r}") from None


def dumps_instance(inst: ProblemInstance) -> str:
    return dumps_document(instance_to_dict(inst))


def loads_instance(text: str) -> ProblemInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"instance bundle is not valid JSON: {exc}") from None
    return instance_from_dict(doc)
