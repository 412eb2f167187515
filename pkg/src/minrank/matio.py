"""Plain-text matrix format shared by the library and the CLI.

Layout: first line holds the dimension n, followed by n rows of n
whitespace-separated decimal values.  Reading symmetrizes via
(A + A^T) / 2 and rejects inputs whose asymmetry exceeds
1e-6 * ||A||_F.
"""

from __future__ import annotations

import io

import numpy as np

from .linalg import asymmetry, symmetrize

ASYMMETRY_RTOL = 1e-6


def loads_matrix(text: str) -> np.ndarray:
    tokens = text.split()
    if not tokens:
        raise ValueError("empty matrix file")
    try:
        n = int(tokens[0])
    except ValueError as exc:
        raise ValueError(f"first token must be the dimension, got {tokens[0]!r}") from exc
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    vals = tokens[1:]
    if len(vals) != n * n:
        raise ValueError(f"expected {n * n} entries for n={n}, got {len(vals)}")
    try:
        a = np.array([float(v) for v in vals], dtype=float).reshape(n, n)
    except ValueError as exc:
        raise ValueError(f"non-numeric matrix entry: {exc}") from exc
    skew = asymmetry(a)
    limit = ASYMMETRY_RTOL * float(np.linalg.norm(a))
    if skew > limit:
        raise ValueError(
            f"matrix is not symmetric: ||A - A^T||_F = {skew:.3e} "
            f"exceeds {limit:.3e}"
        )
    return symmetrize(a)


def load_matrix(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_matrix(fh.read())


def dumps_matrix(a: np.ndarray) -> str:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    buf = io.StringIO()
    buf.write(f"{n}\n")
    for i in range(n):
        buf.write(" ".join(f"{v:.17g}" for v in a[i]))
        buf.write("\n")
    return buf.getvalue()


def save_matrix(path: str, a: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_matrix(a))
