"""
Output files: reports, splits, fixtures and plot-ready CSV.

Every file is written whole-file atomically (temp file in the destination
directory, then ``os.replace``), so concurrent experiment trials never
leave half-written output behind.
"""

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .dense import SplitTensor
from .errors import InputError
from .topology import PathSet, Topology
from .traffic import DemandMatrix, demands_to_csv, demands_to_json

logger = logging.getLogger(__name__)


def atomic_write_text(output_file: str, text: str) -> str:
    """Write ``text`` to ``output_file`` via a temp file and rename.

    Returns:
        The output path
    """
    directory = os.path.dirname(os.path.abspath(output_file))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(output_file))
    try:
        with os.fdopen(fd, "w", newline="") as out:
            out.write(text)
        os.replace(tmp, output_file)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info("Wrote %s", output_file)
    return output_file


def write_json(output_file: str, data) -> str:
    return atomic_write_text(output_file, json.dumps(data, indent=2) + "\n")


@dataclass
class RunManifest:
    """What a run read, how it was configured and what it wrote.

    Attributes:
        inputs: Role -> input path (topology, demands, paths, initial split)
        config: Echo of the solver or generator settings
        outputs: Role -> output path
        seed: Root seed, when randomness was involved
        version: ssdo-te version that produced the run
    """
    inputs: Dict[str, str] = field(default_factory=dict)
    config: Dict[str, object] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    version: str = ""

    def __post_init__(self):
        if not self.version:
            from . import __version__
            self.version = __version__

    def check_inputs(self) -> None:
        """Raises FileNotFoundError for the first missing input file."""
        for role, path in self.inputs.items():
            if not os.path.exists(path):
                raise FileNotFoundError(f"{role} file '{path}' not found")

    def to_dict(self) -> dict:
        return asdict(self)


def save_report(report, output_file: str, manifest: Optional[RunManifest] = None) -> str:
    """Write a SolveReport as JSON, with the manifest embedded."""
    return write_json(output_file, report.to_dict(manifest.to_dict() if manifest else None))


def split_to_dict(split, topology: Topology) -> dict:
    """JSON document for a SplitTensor or a PathSplit."""
    if isinstance(split, SplitTensor):
        return {"form": "dense", "ratios": split.to_records(topology)}
    data = split.to_dict(topology)
    data["form"] = "path"
    return data


def save_split(split, topology: Topology, output_file: str) -> str:
    return write_json(output_file, split_to_dict(split, topology))


def load_any_split(filename: str, topology: Topology, paths: PathSet):
    """Read a split file written by ``save_split`` in either form.

    Raises:
        FileNotFoundError: If the file doesn't exist
        InputError: On malformed or invalid ratios
    """
    from .dense import load_split
    from .paths import load_path_split

    try:
        with open(filename) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Split file '{filename}' not found")
    except json.JSONDecodeError as e:
        raise InputError(f"invalid JSON: {e.msg}", path=filename, line=e.lineno)
    if isinstance(data, dict) and "pairs" in data:
        return load_path_split(filename, topology, paths)
    return load_split(filename, topology, paths)


def save_topology(topology: Topology, output_file: str) -> str:
    return write_json(output_file, topology.to_dict())


def save_path_set(paths: PathSet, topology: Topology, output_file: str) -> str:
    return write_json(output_file, paths.to_dict(topology))


def save_demands(demands: DemandMatrix, output_file: str) -> str:
    """CSV unless the file name ends in .json."""
    if output_file.endswith(".json"):
        return atomic_write_text(output_file, demands_to_json(demands) + "\n")
    return atomic_write_text(output_file, demands_to_csv(demands))


def utilization_rows(topology: Topology, load: np.ndarray) -> List[dict]:
    """One row per edge: src, dst, capacity, load, utilization."""
    rows = []
    for i, j in topology.edge_list():
        c = float(topology.capacity[i, j])
        bounded = np.isfinite(c)
        rows.append({
            "src": topology.names[i],
            "dst": topology.names[j],
            "capacity": c if bounded else "unbounded",
            "load": float(load[i, j]),
            "utilization": float(load[i, j]) / c if bounded else 0.0,
        })
    return rows


def split_loads(topology: Topology, demands: DemandMatrix, split) -> np.ndarray:
    """|V|x|V| edge loads of a split in either form."""
    if isinstance(split, SplitTensor):
        from .dense import edge_loads
        return edge_loads(split, demands)
    from .paths import path_utilization

    state = path_utilization(topology, demands, split)
    load = np.zeros_like(topology.capacity)
    for e, (i, j) in enumerate(state.index.edges):
        load[i, j] = state.load[e]
    return load


def write_csv(output_file: str, rows: Sequence[Mapping], columns: Iterable[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return atomic_write_text(output_file, buf.getvalue())


UTILIZATION_COLUMNS = ("src", "dst", "capacity", "load", "utilization")


def save_utilization_csv(topology: Topology, demands: DemandMatrix, split, output_file: str) -> str:
    rows = utilization_rows(topology, split_loads(topology, demands, split))
    return write_csv(output_file, rows, UTILIZATION_COLUMNS)


def save_fixture(
    output_dir: str,
    topology: Topology,
    paths: PathSet,
    demands: DemandMatrix,
    initial=None,
) -> Dict[str, str]:
    """Write topology.json, paths.json, demands.csv and optionally initial_split.json.

    Returns:
        Role -> written path
    """
    outputs = {
        "topology": save_topology(topology, os.path.join(output_dir, "topology.json")),
        "paths": save_path_set(paths, topology, os.path.join(output_dir, "paths.json")),
        "demands": save_demands(demands, os.path.join(output_dir, "demands.csv")),
    }
    if initial is not None:
        outputs["initial_split"] = save_split(initial, topology, os.path.join(output_dir, "initial_split.json"))
    return outputs
