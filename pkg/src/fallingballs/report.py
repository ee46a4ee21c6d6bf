"""CSV/JSON emission with a schema version and the run configuration echoed in."""
from __future__ import annotations

import csv
import dataclasses
import json
import math

import numpy as np

SCHEMA_VERSION = 1


def fmt(v):
    """Round-trip text for a cell: 17 significant digits for floats."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if v is None:
        return ""
    return str(v)


def jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj) if not f.name.startswith("_")}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_csv(fh, header, rows, command, config):
    """Rows under a header, preceded by '#' lines carrying schema version and config."""
    fh.write(f"# schema_version={SCHEMA_VERSION}\n")
    fh.write(f"# command={command}\n")
    fh.write("# config=" + json.dumps(jsonable(config), sort_keys=True) + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def write_json(fh, result, command, config):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": jsonable(config),
        "result": jsonable(result),
    }
    json.dump(doc, fh, indent=2, sort_keys=True)
    fh.write("\n")


def read_csv(fh):
    """Inverse of write_csv: (meta dict, header, rows as strings)."""
    meta = {}
    lines = []
    for line in fh:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = json.loads(val) if key == "config" else val
        else:
            lines.append(line)
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]
