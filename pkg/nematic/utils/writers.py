"""Result files: per-step diagnostics, field snapshots and rate tables.

All numbers are written with 17 significant digits, so a float64 read back
from any of these files is bit-identical to the value written.
"""
import csv
import logging
import os

import numpy as np

from nematic.models.experiment import SNAPSHOT_FORMATS
from nematic.models.state import DiagnosticsRecord
from nematic.services.bulk_service import BulkService
from nematic.utils.errors import ConfigError, NematicError, OutputError

logger = logging.getLogger(__name__)

DIAGNOSTICS_HEADER = ('step', 'time', 'tau', 'energy', 'sup_norm', 's', 'g', 'clamped')
RATES_HEADER = ('resolution', 'error_grad', 'rate_grad', 'error_L2', 'rate_L2', 'error_s', 'rate_s')
AXES = 'xyz'

FLOAT_FORMAT = '%.17g'


def _fmt(value):
    return '' if value is None else FLOAT_FORMAT % value


def _open(path):
    directory = os.path.dirname(os.fspath(path))
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        return open(path, 'w', encoding='utf-8', newline='')
    except OSError as e:
        logger.error(f"Cannot open {path} for writing: {e}")
        raise OutputError(path, e)


def write_diagnostics(records, path):
    """diagnostics.csv：表头 + 每步一行"""
    records = list(records)
    if not records:
        raise NematicError("write_diagnostics needs at least one record")
    f = _open(path)
    try:
        with f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(DIAGNOSTICS_HEADER)
            for r in records:
                writer.writerow([r.step, _fmt(r.time), _fmt(r.tau), _fmt(r.energy), _fmt(r.sup_norm),
                                 _fmt(r.s), _fmt(r.g), int(bool(r.clamped))])
    except OSError as e:
        raise OutputError(path, e)
    logger.info(f"Wrote {len(records)} diagnostics rows to {path}")


def read_diagnostics(path):
    """读回 diagnostics.csv"""
    try:
        with open(path, encoding='utf-8', newline='') as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise ConfigError(f"cannot read diagnostics {path}: {e}")
    return [
        DiagnosticsRecord(
            step=int(row['step']),
            time=float(row['time']),
            tau=float(row['tau']),
            energy=float(row['energy']),
            sup_norm=float(row['sup_norm']),
            s=float(row['s']),
            g=float(row['g']),
            clamped=row['clamped'] == '1',
        )
        for row in rows
    ]


def energy_increases(records, rel_tol=1e-12):
    """返回能量上升的步号列表；空列表表示单调不增"""
    bad = []
    for prev, cur in zip(records, records[1:]):
        if cur.energy > prev.energy + rel_tol * max(1.0, abs(prev.energy)):
            bad.append(cur.step)
    return bad


def snapshot_fields(Q, extras=None):
    """快照中的逐点数据：(标量场字典, 指向矢)"""
    scalars = {}
    for (i, j), values in zip(Q.pairs, Q.components):
        scalars[f"Q_{i + 1}{j + 1}"] = values
    scalars['eigen_gap'] = BulkService.eigen_gap_field(Q, 1.0 / Q.dim).values
    for name, field in (extras or {}).items():
        values = getattr(field, 'values', field)
        values = np.broadcast_to(np.asarray(values, dtype=float), Q.mesh.shape)
        scalars[name] = values
    return scalars, BulkService.dominant_director(Q)


def _vtk_order(values):
    # VTK 点序 x 变化最快
    return np.asarray(values).ravel(order='F')


def _write_vtk(f, Q, scalars, director):
    mesh = Q.mesh
    dims = list(mesh.shape) + [1] * (3 - mesh.dim)
    spacing = [mesh.h] * mesh.dim + [1.0] * (3 - mesh.dim)
    f.write("# vtk DataFile Version 3.0\n")
    f.write("nematic Q-tensor snapshot\n")
    f.write("ASCII\n")
    f.write("DATASET STRUCTURED_POINTS\n")
    f.write("DIMENSIONS %d %d %d\n" % tuple(dims))
    f.write("ORIGIN 0 0 0\n")
    f.write("SPACING %s %s %s\n" % tuple(_fmt(s) for s in spacing))
    f.write("POINT_DATA %d\n" % np.prod(dims))
    for name, values in scalars.items():
        f.write(f"SCALARS {name} double 1\n")
        f.write("LOOKUP_TABLE default\n")
        np.savetxt(f, _vtk_order(values), fmt=FLOAT_FORMAT)
    f.write("VECTORS director double\n")
    vectors = np.stack([_vtk_order(director[..., k]) for k in range(3)], axis=1)
    np.savetxt(f, vectors, fmt=FLOAT_FORMAT)


def _write_csv(f, Q, scalars, director):
    mesh = Q.mesh
    index = np.indices(mesh.shape).reshape(mesh.dim, -1).T
    names = list(scalars)
    columns = [values.ravel() for values in scalars.values()]
    columns += [director[..., k].ravel() for k in range(3)]
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(list(AXES[:mesh.dim]) + names + [f"director_{a}" for a in AXES])
    data = np.stack(columns, axis=1)
    for idx, row in zip(index, data):
        writer.writerow([int(p) for p in idx] + [_fmt(v) for v in row])


def write_snapshot(Q, path, format='vtk', extras=None):
    """写出一帧张量场：各分量、主指向矢与 Q + I/d 的特征值间隙

    extras 为附加标量场 {名称: ScalarGridField 或数组}。
    """
    if format not in SNAPSHOT_FORMATS:
        raise ConfigError(f"snapshot format must be one of {', '.join(SNAPSHOT_FORMATS)}, got {format!r}")
    scalars, director = snapshot_fields(Q, extras)
    f = _open(path)
    try:
        with f:
            if format == 'vtk':
                _write_vtk(f, Q, scalars, director)
            else:
                _write_csv(f, Q, scalars, director)
    except OSError as e:
        raise OutputError(path, e)
    logger.debug(f"Wrote {format} snapshot to {path}")


def write_rate_table(table, path):
    """rates.csv：首行收敛率为空"""
    f = _open(path)
    try:
        with f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(RATES_HEADER)
            for row in table.rows:
                writer.writerow([_fmt(row.resolution), _fmt(row.error_grad), _fmt(row.rate_grad),
                                 _fmt(row.error_L2), _fmt(row.rate_L2), _fmt(row.error_s), _fmt(row.rate_s)])
    except OSError as e:
        raise OutputError(path, e)
    logger.info(f"Wrote {len(table.rows)} {table.kind} rows to {path}")
