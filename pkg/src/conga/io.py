"""File formats: count CSVs, sample stores and JSON reports.

Rows and columns in parse errors are 1-based file coordinates.  JSON output
is written with sorted keys and a trailing newline so reruns are
byte-identical.
"""
from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import ParseError
from .model import pair_indices
from .posterior import PosteriorSamples

SCHEMA_VERSION = 1


def _is_int(text):
    try:
        int(text)
    except ValueError:
        return False
    return True


def read_counts(path):
    """Read a comma-separated count matrix.

    A first row containing any non-integer field is taken as a header.

    Returns
    -------
    data : ndarray of int64, shape (n, P)
    header : list of str or None
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    # trailing blank lines are tolerated
    while rows and not any(f.strip() for f in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError(f"{path} is empty")
    header = None
    start = 0
    first = [f.strip() for f in rows[0]]
    if not all(_is_int(f) for f in first):
        header, start = first, 1
    width = len(header) if header else len(first)
    values = []
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", row=i)
        parsed = []
        for c, field in enumerate(row, start=1):
            field = field.strip()
            try:
                v = int(field)
            except ValueError:
                raise ParseError(f"non-integer count {field!r}", row=i, column=c) from None
            if v < 0:
                raise ParseError(f"negative count {v}", row=i, column=c)
            parsed.append(v)
        values.append(parsed)
    if not values:
        raise ParseError(f"{path} has no data rows")
    if width < 2:
        raise ParseError("need at least two columns (nodes)")
    return np.array(values, dtype=np.int64), header


def write_counts(path, data, header=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        w.writerows(np.asarray(data, dtype=np.int64).tolist())


def _pair_names(P):
    return [f"beta_{j}_{l}" for j, l in zip(*pair_indices(P))]


def write_samples(path, samples):
    """Retained draws as CSV, one ``beta_j_l`` column per pair, full precision."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_pair_names(samples.P)) + "\n")
        for row in samples.beta:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def read_samples(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path} is empty")
    names = rows[0]
    q = len(names)
    try:
        draws = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    draws = draws.reshape(-1, q)
    try:
        return PosteriorSamples.from_draws(draws)
    except Exception as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_json(path, obj):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", row=exc.lineno, column=exc.colno) from None


def graph_to_dict(estimate, names=None):
    P = estimate.P
    iu = pair_indices(P)
    edges = []
    for k, (j, l) in enumerate(zip(*iu)):
        if estimate.adjacency[j, l]:
            edges.append({
                "j": int(j), "l": int(l),
                "s": float(estimate.significance[k]),
                "ci_lower": float(estimate.ci_lower[k]),
                "ci_upper": float(estimate.ci_upper[k]),
            })
    return {
        "schema_version": SCHEMA_VERSION,
        "level": float(estimate.level),
        "nodes": list(names) if names else [str(j) for j in range(P)],
        "edges": edges,
    }


def write_edge_list(path, estimate):
    """``j,l,S`` for every pair, for external graph renderers."""
    with open(path, "w", newline="") as fh:
        fh.write("j,l,S\n")
        for k, (j, l) in enumerate(zip(*pair_indices(estimate.P))):
            fh.write(f"{j},{l},{estimate.significance[k]!r}\n")


def difference_to_dict(diff, P):
    iu = pair_indices(P)
    return {
        "schema_version": SCHEMA_VERSION,
        "level": float(diff.level),
        "n_draws": int(diff.n_draws),
        "similarity": float(diff.similarity),
        "flagged": [
            {"j": int(j), "l": int(l),
             "delta_ci_lower": float(diff.delta_ci_lower[k]),
             "delta_ci_upper": float(diff.delta_ci_upper[k])}
            for k, (j, l) in enumerate(zip(*iu)) if diff.flagged[k]
        ],
    }


def truth_to_dict(edges, spec, seed):
    return {
        "schema_version": SCHEMA_VERSION,
        "edges": [[int(j), int(l)] for j, l in edges],
        "spec": spec,
        "seed": seed,
    }
