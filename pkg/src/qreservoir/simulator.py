"""Exact density-matrix simulation with reset channels, plus a trajectory backend.

The density backend follows the reservoir protocol directly: states are
2^N x 2^N complex matrices, unitaries act in place over bit-indexed axes, and
the injection-qubit reset is the Kraus pair {|0><0|, |0><1|}.  Because reset
is non-unitary the density representation is the ground truth; a stochastic
pure-state trajectory backend (reset unravelled as a projective Z measurement
followed by |0> preparation) serves as a cross-check and scales further.

Convention: qubit k is bit k of the basis index, most significant first, so a
reshaped state tensor has one axis per qubit in qubit order.

`apply_gate`, `reset_qubits` and friends may overwrite their input buffer;
always use the returned array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuits import Circuit, Gate

# Hard cap for the dense backend: a 2^12 x 2^12 complex matrix is ~268 MB.
N_MAX_DENSITY = 12

DEFAULT_SHOTS = 4096


class SimulationSizeError(ValueError):
    """Raised when a circuit exceeds the dense-backend qubit limit."""


@dataclass(frozen=True)
class NoiseModel:
    """Synthetic depolarizing + reset-error noise (all probabilities in [0, 1)).

    p1/p2 add a depolarizing channel after every one-/two-qubit unitary;
    p_reset leaves a freshly reset qubit in |1> with that probability.
    """

    p1: float = 0.0
    p2: float = 0.0
    p_reset: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2", "p_reset"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {p}")

    @property
    def is_noiseless(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0 and self.p_reset == 0.0


def _n_qubits(rho: np.ndarray) -> int:
    n = int(round(math.log2(rho.shape[0])))
    if rho.shape != (2**n, 2**n):
        raise ValueError(f"not a square power-of-two matrix: shape {rho.shape}")
    return n


def _check_qubits(qubits, n: int):
    for q in qubits:
        if not 0 <= q < n:
            raise ValueError(f"qubit index {q} outside 0..{n - 1}")


def init_plus(n_qubits: int) -> np.ndarray:
    """Uniform-superposition product state (|+><+|)^n: every entry is 2^-n."""
    if not 1 <= n_qubits <= N_MAX_DENSITY:
        raise SimulationSizeError(f"density backend supports 1..{N_MAX_DENSITY} qubits, got {n_qubits}")
    dim = 2**n_qubits
    return np.full((dim, dim), 1.0 / dim, dtype=complex)


def gate_matrix(gate: Gate) -> np.ndarray:
    """Local (2x2 or 4x4) unitary of a non-RESET gate."""
    if gate.kind == "RY":
        c, s = math.cos(gate.angle / 2.0), math.sin(gate.angle / 2.0)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if gate.kind == "RZ":
        p = np.exp(-0.5j * gate.angle)
        return np.array([[p, 0.0], [0.0, p.conjugate()]])
    if gate.kind == "H":
        return np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)
    if gate.kind == "CNOT":
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    if gate.kind == "RXX":
        c = math.cos(gate.angle / 2.0)
        s = -1j * math.sin(gate.angle / 2.0)
        m = np.diag([c, c, c, c]).astype(complex)
        m[0, 3] = m[1, 2] = m[2, 1] = m[3, 0] = s
        return m
    raise ValueError(f"{gate.kind} has no unitary matrix")


def _apply_unitary_dm(rho: np.ndarray, u: np.ndarray, qubits, n: int) -> np.ndarray:
    """Generic U rho U^dag over the given qubit axes (row and column sides)."""
    t = rho.reshape((2,) * (2 * n))
    if len(qubits) == 1:
        (q,) = qubits
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [q])), 0, q)
        t = np.moveaxis(np.tensordot(t, u.conj(), axes=([n + q], [1])), -1, n + q)
    else:
        a, b = qubits
        u4 = u.reshape(2, 2, 2, 2)
        t = np.moveaxis(np.tensordot(u4, t, axes=([2, 3], [a, b])), (0, 1), (a, b))
        t = np.moveaxis(np.tensordot(t, u4.conj(), axes=([n + a, n + b], [2, 3])), (-2, -1), (n + a, n + b))
    return np.ascontiguousarray(t).reshape(rho.shape)


def apply_gate(rho: np.ndarray, gate: Gate) -> np.ndarray:
    """Evolve a density matrix by one unitary gate (RESET is a channel, not a gate)."""
    if gate.kind == "RESET":
        raise ValueError("RESET is non-unitary; use reset_qubits")
    n = _n_qubits(rho)
    _check_qubits(gate.qubits, n)
    if gate.kind == "RZ":
        # Diagonal gate: scale the two off-diagonal blocks of qubit q in place.
        rho = np.ascontiguousarray(rho)
        q = gate.qubits[0]
        t = np.moveaxis(rho.reshape((2,) * (2 * n)), (q, n + q), (0, 1))
        phase = np.exp(-1j * gate.angle)
        t[0, 1] *= phase
        t[1, 0] *= phase.conjugate()
        return rho
    if gate.kind == "RXX":
        # RXX = cos(a/2) I - i sin(a/2) XX, and XX acts as a pair of bit flips,
        # so the conjugation needs only axis-reversed views, no matmul.
        a, b = gate.qubits
        t = rho.reshape((2,) * (2 * n))
        c, s = math.cos(gate.angle / 2.0), math.sin(gate.angle / 2.0)
        row = np.flip(t, (a, b))
        col = np.flip(t, (n + a, n + b))
        both = np.flip(t, (a, b, n + a, n + b))
        out = (c * c) * t + (s * s) * both + (1j * c * s) * (col - row)
        return np.ascontiguousarray(out).reshape(rho.shape)
    return _apply_unitary_dm(rho, gate_matrix(gate), gate.qubits, n)


def reset_qubits(rho: np.ndarray, qubits) -> np.ndarray:
    """Trace out each listed qubit and re-prepare it in |0> (in place)."""
    n = _n_qubits(rho)
    _check_qubits(qubits, n)
    rho = np.ascontiguousarray(rho)
    t = rho.reshape((2,) * (2 * n))
    for q in qubits:
        v = np.moveaxis(t, (q, n + q), (0, 1))
        v[0, 0] += v[1, 1]
        v[0, 1] = 0.0
        v[1, 0] = 0.0
        v[1, 1] = 0.0
    return rho


def _mix_qubits(rho: np.ndarray, qubits, n: int) -> np.ndarray:
    """Replace the listed qubits by the maximally mixed state (fresh array)."""
    t = rho.reshape((2,) * (2 * n)).copy()
    for q in qubits:
        v = np.moveaxis(t, (q, n + q), (0, 1))
        avg = 0.5 * (v[0, 0] + v[1, 1])
        v[0, 0] = avg
        v[1, 1] = avg
        v[0, 1] = 0.0
        v[1, 0] = 0.0
    return t.reshape(rho.shape)


def apply_depolarizing(rho: np.ndarray, qubits, p: float) -> np.ndarray:
    """Depolarize the listed qubits: (1-p) rho + p (maximally mixed on them)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"depolarizing probability must lie in [0, 1), got {p}")
    if p == 0.0 or not qubits:
        return rho
    n = _n_qubits(rho)
    _check_qubits(qubits, n)
    mixed = _mix_qubits(rho, qubits, n)
    rho *= 1.0 - p
    rho += p * mixed
    return rho


def _apply_reset_error(rho: np.ndarray, q: int, p: float) -> np.ndarray:
    """Faulty reset: with probability p the qubit ends in |1> instead of |0>."""
    n = _n_qubits(rho)
    t = rho.reshape((2,) * (2 * n))
    flipped = np.flip(t, (q, n + q))
    out = (1.0 - p) * t + p * flipped
    return np.ascontiguousarray(out).reshape(rho.shape)


def expect_z(rho: np.ndarray, qubit: int) -> float:
    """Tr(Z_q rho): diagonal sum signed by bit q."""
    n = _n_qubits(rho)
    _check_qubits([qubit], n)
    diag = np.real(np.diagonal(rho)).reshape((2,) * n)
    marginal = diag.sum(axis=tuple(i for i in range(n) if i != qubit))
    return float(marginal[0] - marginal[1])


def all_z(rho: np.ndarray) -> np.ndarray:
    """All single-qubit Z expectations from one pass over the diagonal."""
    n = _n_qubits(rho)
    diag = np.real(np.diagonal(rho)).reshape((2,) * n)
    out = np.empty(n)
    for q in range(n):
        marginal = diag.sum(axis=tuple(i for i in range(n) if i != q))
        out[q] = marginal[0] - marginal[1]
    return out


def purity(rho: np.ndarray) -> float:
    # Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
    return float(np.real(np.vdot(rho, rho)))


def validate_density(rho: np.ndarray, atol: float = 1e-10, check_eigs: bool = False):
    """Assert the channel contract: unit trace, Hermiticity, and optionally positivity."""
    trace = np.trace(rho)
    if abs(trace - 1.0) > atol:
        raise AssertionError(f"trace drifted to {trace}")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise AssertionError("state is not Hermitian")
    if check_eigs:
        smallest = np.linalg.eigvalsh(rho)[0]
        if smallest < -1e-8:
            raise AssertionError(f"negative eigenvalue {smallest}")


def run_circuit_dm(circuit: Circuit, noise: NoiseModel | None = None) -> np.ndarray:
    """Evolve (|+><+|)^N through the circuit; deterministic even with noise.

    Noise, when enabled, inserts a depolarizing channel after every unitary
    and a bit-flip error after every reset.
    """
    if circuit.n_qubits > N_MAX_DENSITY:
        raise SimulationSizeError(
            f"{circuit.n_qubits} qubits exceeds the density backend limit {N_MAX_DENSITY}; "
            "use the trajectory backend")
    noise = noise or NoiseModel()
    rho = init_plus(circuit.n_qubits)
    for gate in circuit.gates:
        if gate.kind == "RESET":
            rho = reset_qubits(rho, gate.qubits)
            if noise.p_reset > 0.0:
                rho = _apply_reset_error(rho, gate.qubits[0], noise.p_reset)
        else:
            rho = apply_gate(rho, gate)
            p = noise.p2 if len(gate.qubits) == 2 else noise.p1
            if p > 0.0:
                rho = apply_depolarizing(rho, gate.qubits, p)
    return rho


# -- factored density evolution --
#
# A state whose qubits were just reset is low rank: rho = sum_i |f_i><f_i|
# with every |f_i> supported on the subspace where the reset ("grounded")
# qubits are |0>.  The engine below stores only the factor rows over the
# non-grounded qubits, so unitaries become batched pure-state updates, RESET
# becomes a row split (one per Kraus branch) that also drops an axis, and a
# QR pass caps the row count at the support dimension.  This is an exact
# reorganization of the density simulation (no approximation), and it is what
# makes 12-qubit window pipelines tractable.

class _FactoredState:
    """rho = sum_i |row_i><row_i| over the non-grounded qubits, in qubit order."""

    def __init__(self, n_qubits: int):
        self.n = n_qubits
        self.active = list(range(n_qubits))  # non-grounded, ascending
        self.states = np.full((1, 2**n_qubits), 2.0 ** (-n_qubits / 2.0), dtype=complex)

    def _tensor(self):
        return self.states.reshape((self.states.shape[0],) + (2,) * len(self.active))

    def _axis(self, q: int) -> int:
        return 1 + self.active.index(q)

    def reset(self, q: int):
        if q not in self.active:
            return  # already grounded, reset is a no-op
        r = self.states.shape[0]
        v = np.moveaxis(self._tensor(), self._axis(q), 1)
        out = np.empty((2 * r, self.states.shape[1] // 2), dtype=complex)
        out[:r] = v[:, 0].reshape(r, -1)
        out[r:] = v[:, 1].reshape(r, -1)
        self.states = out
        self.active.remove(q)
        if self.states.shape[0] > 2 * self.states.shape[1]:
            self.states = np.linalg.qr(self.states, mode="r")

    def _expand_with_column(self, q: int, column: np.ndarray):
        """Re-introduce grounded qubit q, its axis set to `column` * |old row>."""
        r, dims = self.states.shape
        position = 1 + sum(1 for a in self.active if a < q)
        out = np.empty((r, 2 * dims), dtype=complex)
        self.active.insert(position - 1, q)
        view = np.moveaxis(out.reshape((r,) + (2,) * len(self.active)), position, 1)
        old = self.states.reshape((r,) + (2,) * (len(self.active) - 1))
        view[:, 0] = column[0] * old
        view[:, 1] = column[1] * old
        self.states = out

    def apply(self, gate: Gate):
        grounded = [q for q in gate.qubits if q not in self.active]
        if len(gate.qubits) == 1 and grounded:
            # fused expansion: the qubit is |0>, so only the first matrix
            # column contributes
            self._expand_with_column(gate.qubits[0], gate_matrix(gate)[:, 0])
            return
        for q in grounded:
            self._expand_with_column(q, np.array([1.0, 0.0]))
        t = self._tensor()
        if gate.kind == "RZ":
            v = np.moveaxis(t, self._axis(gate.qubits[0]), 1)
            v[:, 0] *= np.exp(-0.5j * gate.angle)
            v[:, 1] *= np.exp(0.5j * gate.angle)
            return
        if gate.kind == "RXX":
            # in place: t <- cos(a/2) t - i sin(a/2) (t with both axes reversed)
            a, b = (self._axis(q) for q in gate.qubits)
            c, s = math.cos(gate.angle / 2.0), math.sin(gate.angle / 2.0)
            flipped = np.flip(t, (a, b)) * (-1j * s)
            t *= c
            t += flipped
            return
        u = gate_matrix(gate)
        if len(gate.qubits) == 1:
            ax = self._axis(gate.qubits[0])
            t = np.moveaxis(np.tensordot(u, t, axes=([1], [ax])), 0, ax)
        else:
            a, b = (self._axis(q) for q in gate.qubits)
            t = np.moveaxis(np.tensordot(u.reshape(2, 2, 2, 2), t, axes=([2, 3], [a, b])),
                            (0, 1), (a, b))
        self.states = np.ascontiguousarray(t).reshape(self.states.shape)

    def full_factor(self) -> np.ndarray:
        """Factor rows over all n qubits (grounded axes re-inserted as |0>)."""
        r = self.states.shape[0]
        out = np.zeros((r,) + (2,) * self.n, dtype=complex)
        grounded_axes = [1 + q for q in range(self.n) if q not in self.active]
        view = np.moveaxis(out, grounded_axes, range(1, 1 + len(grounded_axes)))
        view[(slice(None),) + (0,) * len(grounded_axes)] = self.states.reshape(
            (r,) + (2,) * len(self.active))
        return out.reshape(r, -1)

    def all_z(self) -> np.ndarray:
        out = np.ones(self.n)  # grounded qubits are exactly |0>: <Z> = +1
        probs = (np.abs(self.states) ** 2).reshape((self.states.shape[0],) + (2,) * len(self.active))
        for ax, q in enumerate(self.active):
            keep = tuple(i for i in range(probs.ndim) if i != 1 + ax)
            marginal = probs.sum(axis=keep)
            out[q] = marginal[0] - marginal[1]
        return out


def run_circuit_factored(circuit: Circuit) -> np.ndarray:
    """Noiseless density evolution in factored form.

    Returns factor rows F over all qubits, with rho = sum_i |F_i><F_i|;
    equals run_circuit_dm up to float rounding at a fraction of the cost
    whenever resets keep the rank low (every window circuit does).
    """
    state = _FactoredState(circuit.n_qubits)
    for gate in circuit.gates:
        if gate.kind == "RESET":
            state.reset(gate.qubits[0])
        else:
            state.apply(gate)
    return state.full_factor()


def window_all_z_factored(circuit: Circuit) -> np.ndarray:
    """All <Z_j> of the factored evolution without materializing the factor."""
    state = _FactoredState(circuit.n_qubits)
    for gate in circuit.gates:
        if gate.kind == "RESET":
            state.reset(gate.qubits[0])
        else:
            state.apply(gate)
    return state.all_z()


def factor_to_dm(states: np.ndarray) -> np.ndarray:
    """Assemble the dense density matrix from factor rows (testing aid)."""
    return states.T @ states.conj()


def all_z_factor(states: np.ndarray) -> np.ndarray:
    """All single-qubit Z expectations directly from factor rows."""
    n = int(round(math.log2(states.shape[1])))
    probs = np.abs(states) ** 2
    t = probs.reshape((states.shape[0],) + (2,) * n)
    out = np.empty(n)
    for q in range(n):
        marginal = t.sum(axis=tuple(i for i in range(n + 1) if i != 1 + q))
        out[q] = marginal[0] - marginal[1]
    return out


# -- stochastic pure-state trajectories --

def _apply_state_op(state: np.ndarray, op, n: int) -> np.ndarray:
    """One precompiled (kind, qubits, payload) unitary on a state vector."""
    kind, qubits, payload = op
    t = state.reshape((2,) * n)
    if kind == "RZ":
        v = np.moveaxis(t, qubits[0], 0)
        v[0] *= payload[0]
        v[1] *= payload[1]
        return state
    if kind == "RXX":
        c, isin = payload
        flipped = np.flip(t, qubits) * isin
        t *= c
        t += flipped
        return state
    if len(qubits) == 1:
        t = np.moveaxis(np.tensordot(payload, t, axes=([1], [qubits[0]])), 0, qubits[0])
    else:
        a, b = qubits
        t = np.moveaxis(np.tensordot(payload.reshape(2, 2, 2, 2), t, axes=([2, 3], [a, b])),
                        (0, 1), (a, b))
    return np.ascontiguousarray(t).reshape(state.shape)


def _compile_state_ops(circuit: Circuit):
    """Precompute per-gate payloads so trajectories share the setup work."""
    ops = []
    for gate in circuit.gates:
        if gate.kind == "RESET":
            ops.append(("RESET", gate.qubits, None))
        elif gate.kind == "RZ":
            half = np.exp(-0.5j * gate.angle)
            ops.append(("RZ", gate.qubits, (half, half.conjugate())))
        elif gate.kind == "RXX":
            payload = (math.cos(gate.angle / 2.0), -1j * math.sin(gate.angle / 2.0))
            ops.append(("RXX", gate.qubits, payload))
        else:
            ops.append((gate.kind, gate.qubits, gate_matrix(gate)))
    return ops


def _reset_state(state: np.ndarray, q: int, n: int, rng) -> np.ndarray:
    """Projective Z measurement of qubit q (Born rule), then prepare |0>."""
    t = np.moveaxis(state.reshape((2,) * n), q, 0)
    p1 = float(np.sum(np.abs(t[1]) ** 2))
    outcome = 1 if rng.random() < p1 else 0
    norm = math.sqrt(p1 if outcome else 1.0 - p1)
    fresh = np.zeros_like(t)
    fresh[0] = t[outcome] / norm
    return np.ascontiguousarray(np.moveaxis(fresh, 0, q)).reshape(state.shape)


def _state_all_z(state: np.ndarray, n: int) -> np.ndarray:
    probs = np.abs(state) ** 2
    t = probs.reshape((2,) * n)
    out = np.empty(n)
    for q in range(n):
        marginal = t.sum(axis=tuple(i for i in range(n) if i != q))
        out[q] = marginal[0] - marginal[1]
    return out


def _run_one_trajectory(ops, n: int, rng) -> np.ndarray:
    state = np.full(2**n, 2.0 ** (-n / 2.0), dtype=complex)
    for op in ops:
        if op[0] == "RESET":
            state = _reset_state(state, op[1][0], n, rng)
        else:
            state = _apply_state_op(state, op, n)
    return _state_all_z(state, n)


def run_circuit_trajectory(circuit: Circuit, seed, n_traj: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-qubit mean <Z_j> over stochastic trajectories, with standard errors.

    `seed` is an int or any SeedSequence entropy; per-trajectory seeds are
    spawned from it deterministically, so the result is bit-reproducible for
    a fixed (circuit, seed, n_traj).
    """
    if n_traj < 1:
        raise ValueError(f"need at least one trajectory, got {n_traj}")
    ops = _compile_state_ops(circuit)
    children = np.random.SeedSequence(seed).spawn(n_traj)
    samples = np.empty((n_traj, circuit.n_qubits))
    for k, child in enumerate(children):
        samples[k] = _run_one_trajectory(ops, circuit.n_qubits, np.random.default_rng(child))
    means = samples.mean(axis=0)
    if n_traj > 1:
        sems = samples.std(axis=0, ddof=1) / math.sqrt(n_traj)
    else:
        sems = np.zeros(circuit.n_qubits)
    return means, sems


# -- projective sampling from a final density matrix --

@dataclass
class ShotEstimate:
    """Finite-shot Z estimates: per-qubit means plus the bitstring histogram."""

    shots: int
    z_means: np.ndarray
    counts: dict[str, int] = field(default_factory=dict)


def sample_shots(rho: np.ndarray, shots: int, seed) -> ShotEstimate:
    """Draw computational-basis bitstrings from the diagonal of rho.

    `seed` is an int or any SeedSequence entropy; fixed seed, fixed sample.
    """
    if shots < 1:
        raise ValueError(f"need at least one shot, got {shots}")
    n = _n_qubits(rho)
    probs = np.clip(np.real(np.diagonal(rho)), 0.0, None)
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    outcomes = rng.choice(probs.size, size=shots, p=probs)
    values, freqs = np.unique(outcomes, return_counts=True)
    counts = {format(int(v), f"0{n}b"): int(c) for v, c in zip(values, freqs)}
    z_means = np.zeros(n)
    for value, freq in zip(values, freqs):
        bits = np.array([(int(value) >> (n - 1 - q)) & 1 for q in range(n)])
        z_means += freq * (1.0 - 2.0 * bits)
    z_means /= shots
    return ShotEstimate(shots=shots, z_means=z_means, counts=counts)
