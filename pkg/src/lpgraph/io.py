"""File formats: edge lists, packed adjacency, decompositions, CSV output."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .linalg import SpectralDecomposition
from .model import Adjacency

ADJ_MAGIC = b"LPGA1"
VEC_MAGIC = b"LPGV1"
MAT_MAGIC = b"LPGP1"


class FormatError(ValueError):
    """Malformed input file."""


def fmt(x) -> str:
    """Six significant digits for floats; integers and strings unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


# edge lists -----------------------------------------------------------------

def write_edge_list(adj: Adjacency, path) -> None:
    edges = adj.edges()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"n {adj.n} hollow {int(adj.hollow)}\n")
        for i, j in edges:
            fh.write(f"{i} {j}\n")


def read_edge_list(path) -> Adjacency:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "n" or header[2] != "hollow":
            raise FormatError("edge list header must read 'n <count> hollow <0|1>'")
        try:
            n, hollow = int(header[1]), bool(int(header[3]))
        except ValueError as exc:
            raise FormatError("bad edge list header") from exc
        pairs = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise FormatError(f"line {lineno}: expected 'i j'")
            pairs.append((int(parts[0]), int(parts[1])))
    return Adjacency.from_edges(n, pairs, hollow)


def write_packed(adj: Adjacency, path) -> None:
    with open(path, "wb") as fh:
        fh.write(ADJ_MAGIC)
        fh.write(struct.pack("<Q", adj.n))
        fh.write(adj.bits.tobytes())


def read_packed(path) -> Adjacency:
    raw = Path(path).read_bytes()
    if raw[:5] != ADJ_MAGIC:
        raise FormatError("not a packed adjacency file")
    (n,) = struct.unpack("<Q", raw[5:13])
    bits = np.frombuffer(raw[13:], dtype=np.uint8).copy()
    expected = (n * (n + 1) // 2 + 7) // 8
    if bits.size != expected:
        raise FormatError("packed adjacency has the wrong length")
    bits.setflags(write=False)
    tri_diag = np.unpackbits(bits, count=n * (n + 1) // 2)
    idx = np.arange(1, n + 1) * np.arange(2, n + 2) // 2 - 1
    return Adjacency(bits, n, hollow=not tri_diag[idx].any())


def read_graph(path) -> Adjacency:
    """Edge list or packed adjacency, by content."""
    with open(path, "rb") as fh:
        head = fh.read(5)
    return read_packed(path) if head == ADJ_MAGIC else read_edge_list(path)


def read_point_cloud(path) -> np.ndarray:
    pts = np.loadtxt(path, delimiter=",", ndmin=2)
    if not np.all(np.isfinite(pts)):
        raise FormatError("point cloud contains non-finite values")
    return pts


# decompositions ---------------------------------------------------------------

def write_decomposition(dec: SpectralDecomposition, csv_path, vectors_path=None) -> None:
    rows = [(k, dec.eigenvalues[k], dec.residuals[k]) for k in range(dec.k)]
    write_csv(csv_path, ["index", "eigenvalue", "residual"], rows)
    if vectors_path is not None:
        with open(vectors_path, "wb") as fh:
            fh.write(VEC_MAGIC)
            fh.write(struct.pack("<QQ", dec.n, dec.k))
            fh.write(np.ascontiguousarray(dec.eigenvalues, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(dec.vectors, dtype="<f8").tobytes())


def read_decomposition_vectors(path) -> tuple:
    raw = Path(path).read_bytes()
    if raw[:5] != VEC_MAGIC:
        raise FormatError("not a decomposition vector file")
    n, k = struct.unpack("<QQ", raw[5:21])
    vals = np.frombuffer(raw, dtype="<f8", count=k, offset=21)
    vecs = np.frombuffer(raw, dtype="<f8", count=n * k, offset=21 + 8 * k).reshape(n, k)
    return vals.copy(), vecs.copy()


def write_matrix_binary(m: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAT_MAGIC)
        fh.write(struct.pack("<Q", m.shape[0]))
        fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def read_matrix_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:5] != MAT_MAGIC:
        raise FormatError("not a matrix file")
    (n,) = struct.unpack("<Q", raw[5:13])
    return np.frombuffer(raw, dtype="<f8", offset=13).reshape(n, n).copy()
