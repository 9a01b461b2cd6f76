"""Reservoir circuit construction: layout, couplings, encoding, Trotter blocks.

A reservoir on N qubits interleaves injection qubits (reset and rotated every
time step to take one input feature) with their memory qubits.  Evolution is
a first-order Trotterized Ising step: one RXX entangler per interaction edge
plus one RZ field rotation per qubit, repeated `kappa` times.  Three edge
schedules are supported:

  fc-tfi      all-to-all pairs, lexicographic order
  nn-tfi      chain edges emitted sequentially 0-1, 1-2, ... (serial layout)
  opt-nn-tfi  chain edges emitted as an even brick layer then an odd brick
              layer, so the per-block depth does not grow with N

Circuits are plain gate lists; simulation lives in `simulator`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FC_TFI = "fc-tfi"
NN_TFI = "nn-tfi"
OPT_NN_TFI = "opt-nn-tfi"
VARIANTS = (FC_TFI, NN_TFI, OPT_NN_TFI)

INJECTION = "I"
MEMORY = "M"

ROTATION_KINDS = ("RY", "RZ", "RXX")
GATE_KINDS = ("RY", "RZ", "RXX", "H", "CNOT", "RESET")
_TWO_QUBIT_KINDS = ("RXX", "CNOT")


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        expected = 2 if self.kind in _TWO_QUBIT_KINDS else 1
        if len(self.qubits) != expected:
            raise ValueError(f"{self.kind} acts on {expected} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"duplicate qubit indices in {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise ValueError(f"negative qubit index in {self.qubits}")
        if self.kind in ROTATION_KINDS:
            if self.angle is None or not math.isfinite(self.angle):
                raise ValueError(f"{self.kind} requires a finite angle, got {self.angle}")
        elif self.angle is not None:
            raise ValueError(f"{self.kind} takes no angle")


@dataclass(frozen=True)
class QubitLayout:
    """d injection qubits, each followed by its m_per memory qubits."""

    d: int
    m_per: int

    def __post_init__(self):
        if self.d < 1 or self.m_per < 1:
            raise ValueError(f"need d >= 1 and m_per >= 1, got d={self.d}, m_per={self.m_per}")

    @property
    def n_qubits(self) -> int:
        return self.d * (1 + self.m_per)

    @property
    def roles(self) -> tuple[str, ...]:
        return (INJECTION,) + (MEMORY,) * self.m_per

    def role_list(self) -> list[str]:
        return list(self.roles) * self.d

    @property
    def injection_qubits(self) -> tuple[int, ...]:
        return tuple(i * (1 + self.m_per) for i in range(self.d))


def build_layout(d: int, m_per: int) -> QubitLayout:
    """Alternating layout: injection qubit, then its m_per memory qubits, d times."""
    return QubitLayout(d=d, m_per=m_per)


def chain_edges(n_qubits: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n_qubits - 1)]


def all_pair_edges(n_qubits: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n_qubits) for j in range(i + 1, n_qubits)]


def variant_edges(variant: str, n_qubits: int) -> list[tuple[int, int]]:
    if variant == FC_TFI:
        return all_pair_edges(n_qubits)
    if variant in (NN_TFI, OPT_NN_TFI):
        return chain_edges(n_qubits)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def sample_couplings(seed: int, edges, lo: float = -0.5, hi: float = 0.5) -> dict[tuple[int, int], float]:
    """Draw one i.i.d. uniform coupling per edge from a seeded generator."""
    if not lo < hi:
        raise ValueError(f"coupling range must satisfy lo < hi, got [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    values = rng.uniform(lo, hi, size=len(edges))
    return {(int(i), int(j)): float(v) for (i, j), v in zip(edges, values)}


@dataclass(frozen=True)
class HamiltonianSpec:
    """Interaction graph with couplings, uniform field, and Trotter settings."""

    layout: QubitLayout
    variant: str
    edges: tuple[tuple[int, int, float], ...]
    h: float = 0.5
    tau: float = 1.0
    kappa: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.kappa < 1:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")
        edges = tuple((int(i), int(j), float(jij)) for i, j, jij in self.edges)
        object.__setattr__(self, "edges", edges)
        expected = variant_edges(self.variant, self.layout.n_qubits)
        if [(i, j) for i, j, _ in edges] != expected:
            raise ValueError(f"{self.variant} on {self.layout.n_qubits} qubits requires edges {expected}")
        for i, j, jij in edges:
            if not -0.5 <= jij <= 0.5:
                raise ValueError(f"coupling J[{i},{j}]={jij} outside [-0.5, 0.5]")
        if not math.isfinite(self.h):
            raise ValueError(f"field h must be finite, got {self.h}")

    @property
    def n_qubits(self) -> int:
        return self.layout.n_qubits


def build_hamiltonian(layout: QubitLayout, variant: str, seed: int,
                      h: float = 0.5, tau: float = 1.0, kappa: int = 1,
                      j_range: tuple[float, float] = (-0.5, 0.5)) -> HamiltonianSpec:
    """Sample couplings for the variant's edge set and assemble the spec."""
    pairs = variant_edges(variant, layout.n_qubits)
    couplings = sample_couplings(seed, pairs, *j_range)
    edges = tuple((i, j, couplings[(i, j)]) for i, j in pairs)
    return HamiltonianSpec(layout=layout, variant=variant, edges=edges, h=h, tau=tau, kappa=kappa)


def encoding_angle(u: float) -> float:
    """Rotation angle 2*arcsin(sqrt(u)) mapping a unit-interval value to a qubit."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"input value {u} outside [0, 1]")
    return 2.0 * math.asin(math.sqrt(u))


def build_encoding(u_t, layout: QubitLayout) -> list[Gate]:
    """One RY per injection qubit, in layout order; memory qubits untouched."""
    u_t = np.asarray(u_t, dtype=float)
    if u_t.shape != (layout.d,):
        raise ValueError(f"expected {layout.d} input features, got shape {u_t.shape}")
    return [Gate("RY", (q,), encoding_angle(u)) for q, u in zip(layout.injection_qubits, u_t)]


def _scheduled_edges(spec: HamiltonianSpec):
    if spec.variant == OPT_NN_TFI:
        even = [e for e in spec.edges if e[0] % 2 == 0]
        odd = [e for e in spec.edges if e[0] % 2 == 1]
        return even + odd
    # nn-tfi keeps the deliberately serial chain order; fc-tfi is lexicographic
    return list(spec.edges)


def build_trotter_step(spec: HamiltonianSpec) -> list[Gate]:
    """Gate sequence approximating one Ising evolution of length tau.

    Each of the kappa repetitions applies every RXX entangler (scheduled per
    variant), then the RZ field column.  Angles are 2*J*tau/kappa and
    2*h*tau/kappa respectively.
    """
    dt = spec.tau / spec.kappa
    block = [Gate("RXX", (i, j), 2.0 * jij * dt) for i, j, jij in _scheduled_edges(spec)]
    block += [Gate("RZ", (q,), 2.0 * spec.h * dt) for q in range(spec.n_qubits)]
    return block * spec.kappa


def decompose_rxx(gate: Gate) -> list[Gate]:
    """Rewrite one RXX as H/CNOT/RZ (exactly equal as a two-qubit unitary)."""
    if gate.kind != "RXX":
        raise ValueError(f"expected an RXX gate, got {gate.kind}")
    a, b = gate.qubits
    return [
        Gate("H", (a,)),
        Gate("H", (b,)),
        Gate("CNOT", (a, b)),
        Gate("RZ", (b,), gate.angle),
        Gate("CNOT", (a, b)),
        Gate("H", (a,)),
        Gate("H", (b,)),
    ]


@dataclass
class Circuit:
    """Ordered gate list over n_qubits with block-boundary labels in `meta`."""

    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    meta: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, gate: Gate):
        if any(q >= self.n_qubits for q in gate.qubits):
            raise ValueError(f"gate {gate} references qubits outside 0..{self.n_qubits - 1}")

    def append(self, gate: Gate):
        self._check(gate)
        self.gates.append(gate)

    def mark(self, label: str):
        self.meta.append((len(self.gates), label))

    def __len__(self):
        return len(self.gates)


def build_window_circuit(window, spec: HamiltonianSpec) -> Circuit:
    """Circuit processing one input window, one block per time-series row.

    Every block resets all injection qubits, encodes the row, then applies
    the Trotterized evolution.  Construction is deterministic.
    """
    window = np.atleast_2d(np.asarray(window, dtype=float))
    if window.shape[1] != spec.layout.d:
        raise ValueError(f"window has {window.shape[1]} features, layout expects {spec.layout.d}")
    if np.any(window < 0.0) or np.any(window > 1.0):
        raise ValueError("window entries must lie in [0, 1]")
    circuit = Circuit(n_qubits=spec.n_qubits)
    evolution = build_trotter_step(spec)
    for step, row in enumerate(window):
        circuit.mark(f"block {step + 1}")
        for q in spec.layout.injection_qubits:
            circuit.append(Gate("RESET", (q,)))
        for g in build_encoding(row, spec.layout):
            circuit.append(g)
        for g in evolution:
            circuit.append(g)
    return circuit


def decompose_circuit(circuit: Circuit) -> Circuit:
    """Expand every RXX via `decompose_rxx`, keeping block labels aligned."""
    out = Circuit(n_qubits=circuit.n_qubits)
    boundaries = dict(circuit.meta)
    for index, gate in enumerate(circuit.gates):
        if index in boundaries:
            out.mark(boundaries[index])
        if gate.kind == "RXX":
            for g in decompose_rxx(gate):
                out.append(g)
        else:
            out.append(gate)
    if len(circuit.gates) in boundaries:
        out.mark(boundaries[len(circuit.gates)])
    return out


@dataclass(frozen=True)
class CircuitStats:
    depth: int
    gates: int


def depth_and_counts(circuit: Circuit, decompose: bool = False) -> CircuitStats:
    """Logical depth under greedy as-soon-as-possible layering, plus gate count.

    Each gate lands in the earliest layer where all its qubits are free;
    RESET occupies a layer slot like any single-qubit operation.
    """
    if decompose:
        circuit = decompose_circuit(circuit)
    busy = [0] * circuit.n_qubits
    for gate in circuit.gates:
        layer = 1 + max(busy[q] for q in gate.qubits)
        for q in gate.qubits:
            busy[q] = layer
    return CircuitStats(depth=max(busy, default=0), gates=len(circuit.gates))


# -- line-oriented text serialization ("KIND q0 [q1] [angle]") --

def circuit_to_text(circuit: Circuit) -> str:
    lines = [f"# qubits {circuit.n_qubits}"]
    boundaries = dict(circuit.meta)
    for index, gate in enumerate(circuit.gates):
        if index in boundaries:
            lines.append(f"# {boundaries[index]}")
        parts = [gate.kind, *map(str, gate.qubits)]
        if gate.angle is not None:
            parts.append(f"{gate.angle:.17g}")
        lines.append(" ".join(parts))
    if len(circuit.gates) in boundaries:
        lines.append(f"# {boundaries[len(circuit.gates)]}")
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> Circuit:
    n_qubits = None
    gates: list[Gate] = []
    meta: list[tuple[int, str]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            comment = line[1:].strip()
            if comment.startswith("qubits "):
                n_qubits = int(comment.split()[1])
            else:
                meta.append((len(gates), comment))
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind in ROTATION_KINDS:
            angle = float(tokens[-1])
            qubits = tuple(int(t) for t in tokens[1:-1])
        else:
            angle = None
            qubits = tuple(int(t) for t in tokens[1:])
        gates.append(Gate(kind, qubits, angle))
    if n_qubits is None:
        n_qubits = 1 + max((q for g in gates for q in g.qubits), default=0)
    return Circuit(n_qubits=n_qubits, gates=gates, meta=meta)
