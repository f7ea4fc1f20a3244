from __future__ import annotations

from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from .model import FLOW_TOLERANCE, Topology

Path = Tuple[int, ...]
LinkWeight = Callable[[int], Optional[float]]


def build_graph(topology: Topology, links: Optional[Iterable[int]] = None) -> nx.MultiDiGraph:
    """MultiDiGraph view of ``topology``; edge keys are link indices."""
    graph = nx.MultiDiGraph()
    graph.add_nodes_from(topology.nodes)
    selected = range(len(topology.links)) if links is None else sorted(set(links))
    for index in selected:
        link = topology.links[index]
        graph.add_edge(link.src, link.dst, key=index, capacity=link.capacity, energy=link.energy)
    return graph


def cheapest_path(topology: Topology, source: str, target: str, weight: LinkWeight) -> Optional[Path]:
    """Minimum-weight link path; links whose weight is None are unusable."""
    usable = {i: w for i in range(len(topology.links)) if (w := weight(i)) is not None}
    graph = build_graph(topology, usable)

    def edge_weight(u: str, v: str, keyed: Mapping[int, dict]) -> float:
        return min(usable[k] for k in keyed)

    try:
        nodes = nx.dijkstra_path(graph, source, target, weight=edge_weight)
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None
    return tuple(min(graph[u][v], key=lambda k: (usable[k], k)) for u, v in zip(nodes, nodes[1:]))


def decompose_flow(
    topology: Topology,
    link_flows: Mapping[int, float],
    source: str,
    target: str,
    tolerance: float = FLOW_TOLERANCE,
) -> List[Tuple[Path, float]]:
    """Split one session's link flows into source-target paths, fewest hops first."""
    remaining: Dict[int, float] = {i: v for i, v in link_flows.items() if v > tolerance}
    paths: List[Tuple[Path, float]] = []
    while remaining:
        path = cheapest_path(topology, source, target, lambda i: 1.0 if i in remaining else None)
        if path is None:
            break
        amount = min(remaining[i] for i in path)
        for i in path:
            remaining[i] -= amount
            if remaining[i] <= tolerance:
                del remaining[i]
        paths.append((path, amount))
    return paths


def primary_path(paths: Sequence[Tuple[Path, float]]) -> Path:
    if not paths:
        return ()
    best = max(range(len(paths)), key=lambda i: (paths[i][1], -i))
    return paths[best][0]


def simple_paths(topology: Topology, links: Iterable[int], source: str, target: str) -> List[Path]:
    graph = build_graph(topology, links)
    found = [tuple(k for _, _, k in edges) for edges in nx.all_simple_edge_paths(graph, source, target)]
    return sorted(found, key=lambda p: (len(p), p))


def pack_paths(
    topology: Topology,
    links: Iterable[int],
    demands: Sequence[Tuple[str, str, float]],
    tolerance: float = FLOW_TOLERANCE,
) -> Optional[List[Path]]:
    """Give every positive demand one simple path inside ``links`` within capacity.

    Depth-first over candidate paths, largest demand first. Returns the paths
    in demand order (empty for zero demands) or None when no packing exists.
    """
    links = sorted(set(links))
    residual = {i: topology.links[i].capacity for i in links}
    order = sorted(
        (k for k, d in enumerate(demands) if d[2] > 0),
        key=lambda k: (-demands[k][2], k),
    )
    candidates = {k: simple_paths(topology, links, demands[k][0], demands[k][1]) for k in order}
    chosen: Dict[int, Path] = {}

    def assign(position: int) -> bool:
        if position == len(order):
            return True
        k = order[position]
        rate = demands[k][2]
        for path in candidates[k]:
            if all(residual[i] + tolerance >= rate for i in path):
                for i in path:
                    residual[i] -= rate
                chosen[k] = path
                if assign(position + 1):
                    return True
                for i in path:
                    residual[i] += rate
                del chosen[k]
        return False

    if not assign(0):
        return None
    return [chosen.get(k, ()) for k in range(len(demands))]
