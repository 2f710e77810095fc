"""Labeled port graphs: design spaces, designs, and their binary chromosome encoding.

A design space holds every component instance that can occur in a design
(the instance list), the induced ordered lists of output and input ports,
and the enumerated list of feasible designs.  Designs are encoded as fixed
length bit vectors: one presence bit per instance followed by the flattened
output-by-input connection matrix.  All orderings are canonical (file or
construction order), so the same space always yields the same bit layout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ComponentType",
    "ComponentInstance",
    "Design",
    "DesignSpace",
    "Chromosome",
    "DesignSpaceFormatError",
    "EncodingError",
    "ChromosomeInconsistencyError",
    "encode",
    "decode",
    "hamming",
    "load_design_space",
]


class DesignSpaceFormatError(ValueError):
    """Raised when a design-space file or structure violates an invariant."""


class EncodingError(ValueError):
    """Raised when a design references instances or ports unknown to its space."""


class ChromosomeInconsistencyError(ValueError):
    """Raised when a chromosome sets a connection bit whose endpoint node is absent."""


@dataclass(frozen=True)
class ComponentType:
    """A component type with named, ordered input and output ports."""

    name: str
    input_ports: tuple[str, ...] = ()
    output_ports: tuple[str, ...] = ()

    def __post_init__(self):
        ports = self.input_ports + self.output_ports
        if not ports:
            raise DesignSpaceFormatError(f"component type {self.name!r} has no ports")
        if len(set(self.input_ports)) != len(self.input_ports) or len(
            set(self.output_ports)
        ) != len(self.output_ports):
            raise DesignSpaceFormatError(
                f"component type {self.name!r} has duplicate port names"
            )


@dataclass(frozen=True)
class ComponentInstance:
    """A node candidate: a uniquely named instance of a component type."""

    id: str
    type: ComponentType


@dataclass(frozen=True)
class Design:
    """One feasible topology: included instance ids plus directed port connections.

    Edges are pairs of indices into the space's output-port and input-port
    lists.  Designs stored in a :class:`DesignSpace` are canonicalized
    (nodes in instance order, edges sorted) so equality is structural.
    """

    nodes: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class Chromosome:
    """Fixed-length binary encoding of a design, packed into a Python int.

    Bit ``p`` of ``bits`` is layout position ``p``: the first ``|M|``
    positions are node-presence bits in instance order, the remaining
    ``|O|*|I|`` positions are the connection matrix flattened row-major
    with rows ordered like the space's output ports.
    """

    bits: int
    length: int

    def as_array(self) -> np.ndarray:
        """Unpacked 0/1 vector, one uint8 per layout position."""
        out = np.zeros(self.length, dtype=np.uint8)
        bits = self.bits
        idx = 0
        while bits:
            if bits & 1:
                out[idx] = 1
            bits >>= 1
            idx += 1
        return out

    def __str__(self):
        return "".join("1" if (self.bits >> p) & 1 else "0" for p in range(self.length))


def hamming(a: Chromosome, b: Chromosome) -> int:
    """Number of differing bit positions between two equal-length chromosomes."""
    if a.length != b.length:
        raise ValueError(f"chromosome length mismatch: {a.length} != {b.length}")
    return (a.bits ^ b.bits).bit_count()


# uint8 -> number of set bits, for vectorized Hamming over packed rows
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


class DesignSpace:
    """An immutable enumerated design space over a fixed component-instance list.

    Orderings are canonical: instances keep construction (file) order, ports
    are induced per instance in type-declaration order, and designs keep
    their list order.  The chromosome layout, and therefore every encoded
    design, is a pure function of this structure.
    """

    def __init__(
        self,
        instances: list[ComponentInstance] | tuple[ComponentInstance, ...],
        designs: list[Design] | tuple[Design, ...],
        validate: bool = True,
    ):
        self.instances: tuple[ComponentInstance, ...] = tuple(instances)
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DesignSpaceFormatError(f"duplicate instance ids: {dup}")
        self.instance_index: dict[str, int] = {i: k for k, i in enumerate(ids)}

        out_ports: list[tuple[str, str]] = []
        in_ports: list[tuple[str, str]] = []
        for inst in self.instances:
            out_ports.extend((inst.id, p) for p in inst.type.output_ports)
            in_ports.extend((inst.id, p) for p in inst.type.input_ports)
        self.output_ports: tuple[tuple[str, str], ...] = tuple(out_ports)
        self.input_ports: tuple[tuple[str, str], ...] = tuple(in_ports)
        self.out_index: dict[tuple[str, str], int] = {
            p: k for k, p in enumerate(self.output_ports)
        }
        self.in_index: dict[tuple[str, str], int] = {
            p: k for k, p in enumerate(self.input_ports)
        }
        self.n_node_bits = len(self.instances)
        self.chromosome_length = self.n_node_bits + len(out_ports) * len(in_ports)

        self.designs: tuple[Design, ...] = tuple(
            self._canonicalize(d, k, validate) for k, d in enumerate(designs)
        )
        self._matrix: np.ndarray | None = None
        self._packed: np.ndarray | None = None
        self._chromosomes: list[Chromosome | None] = [None] * len(self.designs)
        if validate:
            self._check_distinct()

    # -- construction helpers -------------------------------------------------

    def _canonicalize(self, design: Design, where: int, validate: bool) -> Design:
        if not validate:
            return design
        node_set = set(design.nodes)
        for nid in design.nodes:
            if nid not in self.instance_index:
                raise DesignSpaceFormatError(
                    f"designs[{where}]: unknown instance id {nid!r}"
                )
        if len(node_set) != len(design.nodes):
            raise DesignSpaceFormatError(f"designs[{where}]: duplicate node ids")
        n_out, n_in = len(self.output_ports), len(self.input_ports)
        for e, (o, i) in enumerate(design.edges):
            if not (0 <= o < n_out and 0 <= i < n_in):
                raise DesignSpaceFormatError(
                    f"designs[{where}].edges[{e}]: port index out of range"
                )
            if self.output_ports[o][0] not in node_set:
                raise DesignSpaceFormatError(
                    f"designs[{where}].edges[{e}]: source instance "
                    f"{self.output_ports[o][0]!r} not in design nodes"
                )
            if self.input_ports[i][0] not in node_set:
                raise DesignSpaceFormatError(
                    f"designs[{where}].edges[{e}]: target instance "
                    f"{self.input_ports[i][0]!r} not in design nodes"
                )
        if len(set(design.edges)) != len(design.edges):
            raise DesignSpaceFormatError(f"designs[{where}]: duplicate edges")
        nodes = tuple(
            inst.id for inst in self.instances if inst.id in node_set
        )
        return Design(nodes=nodes, edges=tuple(sorted(design.edges)))

    def _check_distinct(self):
        seen: dict[int, int] = {}
        for k in range(len(self.designs)):
            key = self.chromosome(k).bits
            if key in seen:
                raise DesignSpaceFormatError(
                    f"designs[{seen[key]}] and designs[{k}] are identical"
                )
            seen[key] = k

    # -- chromosome access -----------------------------------------------------

    def chromosome(self, design_id: int) -> Chromosome:
        """Chromosome of design ``design_id`` (cached)."""
        c = self._chromosomes[design_id]
        if c is None:
            c = encode(self.designs[design_id], self)
            self._chromosomes[design_id] = c
        return c

    @property
    def chromosome_matrix(self) -> np.ndarray:
        """All chromosomes as a (N, length) uint8 0/1 matrix (row = design id)."""
        if self._matrix is None:
            mat = np.zeros((len(self.designs), self.chromosome_length), dtype=np.uint8)
            for k in range(len(self.designs)):
                bits = self.chromosome(k).bits
                while bits:
                    low = bits & -bits
                    mat[k, low.bit_length() - 1] = 1
                    bits ^= low
            self._matrix = mat
        return self._matrix

    @property
    def packed_matrix(self) -> np.ndarray:
        """Bit-packed chromosome matrix (N, ceil(length/8)) for fast XOR/popcount."""
        if self._packed is None:
            self._packed = np.packbits(self.chromosome_matrix, axis=1, bitorder="little")
        return self._packed

    def hamming_many(self, design_id: int, candidate_ids: np.ndarray) -> np.ndarray:
        """Hamming distances from one design to many, via packed XOR + popcount."""
        packed = self.packed_matrix
        xor = np.bitwise_xor(packed[candidate_ids], packed[design_id])
        return _POPCOUNT[xor].sum(axis=1, dtype=np.int64)

    def __len__(self):
        return len(self.designs)

    def __repr__(self):
        return (
            f"DesignSpace({len(self.instances)} instances, "
            f"{len(self.designs)} designs, L={self.chromosome_length})"
        )


def encode(design: Design, space: DesignSpace) -> Chromosome:
    """Encode a design of ``space`` as a packed bit vector.

    Layout: node-presence bits in instance order, then the output-by-input
    connection matrix flattened row-major.
    """
    bits = 0
    n_in = len(space.input_ports)
    for nid in design.nodes:
        idx = space.instance_index.get(nid)
        if idx is None:
            raise EncodingError(f"design references unknown instance {nid!r}")
        bits |= 1 << idx
    n_out = len(space.output_ports)
    for o, i in design.edges:
        if not (0 <= o < n_out and 0 <= i < n_in):
            raise EncodingError(f"design references unknown port pair ({o}, {i})")
        bits |= 1 << (space.n_node_bits + o * n_in + i)
    return Chromosome(bits=bits, length=space.chromosome_length)


def decode(chromosome: Chromosome, space: DesignSpace) -> Design:
    """Rebuild the design whose :func:`encode` equals ``chromosome``.

    Raises :class:`ChromosomeInconsistencyError` if a connection bit is set
    while either endpoint's node bit is 0; chromosomes of feasible designs
    never trigger this.
    """
    if chromosome.length != space.chromosome_length:
        raise ValueError(
            f"chromosome length {chromosome.length} does not match space "
            f"length {space.chromosome_length}"
        )
    bits = chromosome.bits
    present = [
        inst.id for k, inst in enumerate(space.instances) if (bits >> k) & 1
    ]
    node_set = set(present)
    n_in = len(space.input_ports)
    edges = []
    edge_bits = bits >> space.n_node_bits
    while edge_bits:
        low = edge_bits & -edge_bits
        pos = low.bit_length() - 1
        edge_bits ^= low
        o, i = divmod(pos, n_in)
        if space.output_ports[o][0] not in node_set:
            raise ChromosomeInconsistencyError(
                f"edge ({o}, {i}) set but source node "
                f"{space.output_ports[o][0]!r} absent"
            )
        if space.input_ports[i][0] not in node_set:
            raise ChromosomeInconsistencyError(
                f"edge ({o}, {i}) set but target node "
                f"{space.input_ports[i][0]!r} absent"
            )
        edges.append((o, i))
    return Design(nodes=tuple(present), edges=tuple(sorted(edges)))


def load_design_space(path: str | Path) -> DesignSpace:
    """Load a design space from its JSON file format.

    The document must contain ``component_types`` (name, input_ports,
    output_ports), ``instances`` (id, type) and ``designs`` (nodes as id
    lists, edges as [out_instance, out_port, in_instance, in_port] rows).
    Array order in the file is the canonical order, so a given file always
    produces the same chromosome layout.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DesignSpaceFormatError(f"{path}: not valid JSON: {e}") from e

    for key in ("component_types", "instances", "designs"):
        if key not in doc or not isinstance(doc[key], list):
            raise DesignSpaceFormatError(f"{path}: missing or non-array field {key!r}")

    types: dict[str, ComponentType] = {}
    for k, t in enumerate(doc["component_types"]):
        try:
            ct = ComponentType(
                name=t["name"],
                input_ports=tuple(t.get("input_ports", ())),
                output_ports=tuple(t.get("output_ports", ())),
            )
        except (KeyError, TypeError) as e:
            raise DesignSpaceFormatError(f"{path}: component_types[{k}]: {e}") from e
        if ct.name in types:
            raise DesignSpaceFormatError(
                f"{path}: component_types[{k}]: duplicate type name {ct.name!r}"
            )
        types[ct.name] = ct

    instances = []
    for k, inst in enumerate(doc["instances"]):
        try:
            type_name = inst["type"]
            inst_id = inst["id"]
        except (KeyError, TypeError) as e:
            raise DesignSpaceFormatError(f"{path}: instances[{k}]: {e}") from e
        if type_name not in types:
            raise DesignSpaceFormatError(
                f"{path}: instances[{k}]: unknown component type {type_name!r}"
            )
        instances.append(ComponentInstance(id=inst_id, type=types[type_name]))

    # indexes needed to translate edge rows before the space exists
    out_index: dict[tuple[str, str], int] = {}
    in_index: dict[tuple[str, str], int] = {}
    for inst in instances:
        for p in inst.type.output_ports:
            out_index[(inst.id, p)] = len(out_index)
        for p in inst.type.input_ports:
            in_index[(inst.id, p)] = len(in_index)

    designs = []
    for k, d in enumerate(doc["designs"]):
        nodes = d.get("nodes")
        raw_edges = d.get("edges", [])
        if not isinstance(nodes, list):
            raise DesignSpaceFormatError(f"{path}: designs[{k}]: missing node list")
        edges = []
        for e, row in enumerate(raw_edges):
            if not (isinstance(row, list) and len(row) == 4):
                raise DesignSpaceFormatError(
                    f"{path}: designs[{k}].edges[{e}]: expected "
                    "[out_instance, out_port, in_instance, in_port]"
                )
            o = out_index.get((row[0], row[1]))
            if o is None:
                raise DesignSpaceFormatError(
                    f"{path}: designs[{k}].edges[{e}]: unknown output port "
                    f"({row[0]!r}, {row[1]!r})"
                )
            i = in_index.get((row[2], row[3]))
            if i is None:
                raise DesignSpaceFormatError(
                    f"{path}: designs[{k}].edges[{e}]: unknown input port "
                    f"({row[2]!r}, {row[3]!r})"
                )
            edges.append((o, i))
        designs.append(Design(nodes=tuple(nodes), edges=tuple(edges)))

    try:
        return DesignSpace(instances, designs)
    except DesignSpaceFormatError as e:
        raise DesignSpaceFormatError(f"{path}: {e}") from e
