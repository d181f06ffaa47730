"""Extraction and export of the learned course-to-course influence graph.

An edge (source, target, weight) means: doing well in ``source`` lifts the
predicted grade of ``target`` when ``target`` is taken one or two terms
later, with the given learned weight before time decay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .solver import MFTCIModel

FORMATS = ("json", "dot")


@dataclass(frozen=True)
class InfluenceEdge:
    source: str
    target: str
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("influence edges carry strictly positive weight")


def top_influences(model: MFTCIModel, top_n: int = 10) -> list[InfluenceEdge]:
    """The ``top_n`` largest positive influence entries, descending.

    Ties break by (source, target) index order, so the list is a pure
    function of the influence matrix. Returns fewer edges when the matrix
    has fewer positive entries.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    ids = [""] * len(model.course_index)
    for cid, j in model.course_index.items():
        ids[j] = cid
    mi, mj = np.nonzero(model.influence > 0)
    ranked = sorted(
        zip(mi.tolist(), mj.tolist()),
        key=lambda ij: (-model.influence[ij[0], ij[1]], ij[0], ij[1]),
    )
    return [
        InfluenceEdge(ids[i], ids[j], float(model.influence[i, j]))
        for i, j in ranked[:top_n]
    ]


def load_course_names(source) -> dict[str, str]:
    """Parse a ``course_id,display_name`` CSV (optional header) into a map."""
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    names = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cid, _, name = line.partition(",")
        if cid.strip().lower() == "course_id":
            continue
        names[cid.strip()] = name.strip()
    return names


def export_graph(
    edges: list[InfluenceEdge],
    fmt: str = "json",
    names: dict[str, str] | None = None,
    seed: int | None = None,
) -> str:
    if fmt == "json":
        return export_json(edges, names=names, seed=seed)
    if fmt == "dot":
        return export_dot(edges, names=names, seed=seed)
    raise ValueError(f"unknown graph format {fmt!r}; expected one of {FORMATS}")


def export_json(
    edges: list[InfluenceEdge],
    names: dict[str, str] | None = None,
    seed: int | None = None,
) -> str:
    doc: dict = {}
    if seed is not None:
        doc["seed"] = seed
    nodes = sorted({e.source for e in edges} | {e.target for e in edges})
    if names:
        doc["names"] = {n: names[n] for n in nodes if n in names}
    doc["nodes"] = nodes
    doc["edges"] = [{"src": e.source, "dst": e.target, "w": e.weight} for e in edges]
    return json.dumps(doc, indent=1)


def parse_edges_json(text: str) -> list[InfluenceEdge]:
    """Inverse of :func:`export_json` (edge list only)."""
    doc = json.loads(text)
    return [
        InfluenceEdge(d["src"], d["dst"], float(d["w"])) for d in doc["edges"]
    ]


def export_dot(
    edges: list[InfluenceEdge],
    names: dict[str, str] | None = None,
    seed: int | None = None,
) -> str:
    """Graphviz digraph with weight-labeled edges, deterministic ordering."""
    lines = []
    if seed is not None:
        lines.append(f"// seed={seed}")
    lines.append("digraph influence {")
    nodes = sorted({e.source for e in edges} | {e.target for e in edges})
    for node in nodes:
        if names and node in names:
            lines.append(f'  "{node}" [label="{node}: {names[node]}"];')
        else:
            lines.append(f'  "{node}";')
    for e in edges:
        lines.append(f'  "{e.source}" -> "{e.target}" [label="{e.weight!r}", weight={e.weight!r}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
