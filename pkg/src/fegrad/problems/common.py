"""Shared plumbing for the example problems."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np


@dataclass
class Check:
    name: str
    measured: float
    expected: str
    passed: bool

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: measured {self.measured:.6g} (expected {self.expected})"


@dataclass
class Result:
    name: str
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, measured, expected, passed):
        self.checks.append(Check(name, float(measured), expected, bool(passed)))

    def report(self):
        return "\n".join(c.line() for c in self.checks)


def load_config(cls, path=None, **overrides):
    """Build a config dataclass from an optional JSON problem file."""
    values = {}
    if path is not None:
        values.update(json.loads(Path(path).read_text()))
    values.update(overrides)
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise KeyError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**values)


def config_dict(cfg):
    return asdict(cfg) if is_dataclass(cfg) else dict(cfg)


def write_nodal_csv(path, coords, values, names):
    """One row per node: id, coordinates, values."""
    coords = np.asarray(coords)
    values = np.asarray(values).reshape(len(coords), -1)
    axes = "xyz"[: coords.shape[1]]
    header = ["node", *axes, *names]
    rows = np.column_stack([np.arange(len(coords)), coords, values])
    fmt = ["%d"] + ["%.17g"] * (rows.shape[1] - 1)
    np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="", fmt=fmt)


def write_vtk(path, mesh, point_data=None):
    """Legacy ASCII VTK unstructured grid."""
    cell_types = {"Tri3": 5, "Quad4": 9, "Tet4": 10, "Line2": 3}
    X = np.zeros((mesh.n_nodes, 3))
    X[:, : mesh.dim] = mesh.coords
    lines = ["# vtk DataFile Version 3.0", "fegrad", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_nodes} double")
    lines += [" ".join(repr(float(v)) for v in row) for row in X]
    n_cells = sum(b.n_elements for b in mesh.blocks)
    size = sum(b.n_elements * (b.conn.shape[1] + 1) for b in mesh.blocks)
    lines.append(f"CELLS {n_cells} {size}")
    for b in mesh.blocks:
        lines += [f"{len(c)} " + " ".join(map(str, c)) for c in b.conn.tolist()]
    lines.append(f"CELL_TYPES {n_cells}")
    for b in mesh.blocks:
        lines += [str(cell_types[b.kind])] * b.n_elements
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, vals in point_data.items():
            vals = np.asarray(vals).reshape(mesh.n_nodes, -1)
            if vals.shape[1] == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [repr(float(v)) for v in vals[:, 0]]
            else:
                V = np.zeros((mesh.n_nodes, 3))
                V[:, : vals.shape[1]] = vals
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(repr(float(v)) for v in row) for row in V]
    Path(path).write_text("\n".join(lines) + "\n")


def nodal_average(op, elem_values):
    """Area-weighted average of per-element values at the nodes."""
    w = op.wdetJ.sum(axis=1)
    vals = np.asarray(elem_values).reshape(op.n_elements, -1)
    num = np.zeros((op.n_nodes, vals.shape[1]))
    den = np.zeros(op.n_nodes)
    for a in range(op.n_en):
        np.add.at(num, op.conn[:, a], w[:, None] * vals)
        np.add.at(den, op.conn[:, a], w)
    return num / np.maximum(den, 1e-300)[:, None]
