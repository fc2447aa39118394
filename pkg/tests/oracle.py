"""Dense brute-force reference implementation used by the tests.

Everything here is computed with explicit matrices over the full
occupation basis: ladder operators are built entry by entry, linear mode
transforms act through the exponential of their quadratic generator, and
probabilities come from dense vectors.  The package under test never
shares code with this module beyond the registry data type.
"""

from __future__ import annotations

import itertools
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import schur
from scipy.sparse.linalg import expm_multiply

from loccphase.fock import ModeRegistry, QuantumState

BasisState = Tuple[int, ...]


class DenseFock:
    """Full occupation basis with sparse-matrix ladder operators."""

    def __init__(self, registry: ModeRegistry):
        self.registry = registry
        self.dims = [2 if m.is_fermion else registry.boson_cap + 1
                     for m in registry.modes]
        self.fermion = [m.is_fermion for m in registry.modes]
        self.basis: List[BasisState] = list(
            itertools.product(*[range(d) for d in self.dims]))
        self.index = {b: i for i, b in enumerate(self.basis)}
        self.dim = len(self.basis)
        self._creation_cache: Dict[int, sp.csr_matrix] = {}

    # -- ladder matrices ---------------------------------------------------

    def creation(self, mode: int) -> sp.csr_matrix:
        if mode in self._creation_cache:
            return self._creation_cache[mode]
        rows, cols, vals = [], [], []
        for col, occ in enumerate(self.basis):
            n = occ[mode]
            if self.fermion[mode]:
                if n == 1:
                    continue
                below = sum(occ[j] for j in range(mode) if self.fermion[j])
                factor = -1.0 if below % 2 else 1.0
            else:
                if n + 1 >= self.dims[mode]:
                    continue
                factor = math.sqrt(n + 1)
            new = occ[:mode] + (n + 1,) + occ[mode + 1:]
            rows.append(self.index[new])
            cols.append(col)
            vals.append(factor)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))
        self._creation_cache[mode] = mat
        return mat

    def annihilation(self, mode: int) -> sp.csr_matrix:
        # real matrices, so the adjoint is the transpose
        return self.creation(mode).T.tocsr()

    # -- state conversion --------------------------------------------------

    def vector(self, state: QuantumState) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        for occ, amp in state.items():
            v[self.index[occ]] = amp
        return v

    def to_state(self, vec: np.ndarray, tol: float = 1e-14) -> QuantumState:
        amps = {self.basis[i]: vec[i] for i in range(self.dim)
                if abs(vec[i]) > tol}
        return QuantumState(self.registry, amps)

    def vacuum_vector(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index[self.registry.vacuum_occupations()]] = 1.0
        return v

    # -- linear mode transforms --------------------------------------------

    def transform(self, vec: np.ndarray, modes: Sequence[int],
                  T: np.ndarray) -> np.ndarray:
        """Unitary that maps c_i^dag -> sum_j T[i, j] c_j^dag on the subset.

        Implemented as expm of the quadratic generator; exact provided the
        subset's total occupation never exceeds any bosonic cap.
        """
        T = np.asarray(T, dtype=complex)
        if not np.allclose(T.conj().T @ T, np.eye(T.shape[0]), atol=1e-12):
            raise ValueError("oracle transform requires a unitary matrix")
        # K = log(T^T) so that e^X c_k^dag e^-X = sum_j T[k, j] c_j^dag
        # with X = sum_ij K_ij c_i^dag c_j; Schur keeps the log accurate
        # on repeated eigenvalues.
        U, Q = schur(T.T, output="complex")
        K = Q @ np.diag(np.log(np.diag(U))) @ Q.conj().T
        X = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for a, ma in enumerate(modes):
            for b, mb in enumerate(modes):
                if abs(K[a, b]) < 1e-16:
                    continue
                X = X + K[a, b] * (self.creation(ma) @ self.annihilation(mb))
        out = expm_multiply(X, vec)
        norm = np.linalg.norm(out)
        if abs(np.linalg.norm(vec) - 1.0) < 1e-9 and norm > 0.0:
            out = out / norm
        return out

    # -- measurement -------------------------------------------------------

    def occupation_probabilities(self, vec: np.ndarray,
                                 modes: Sequence[int]) -> Dict[BasisState, float]:
        probs: Dict[BasisState, float] = {}
        for i, occ in enumerate(self.basis):
            p = abs(vec[i]) ** 2
            if p <= 0.0:
                continue
            key = tuple(occ[m] for m in modes)
            probs[key] = probs.get(key, 0.0) + p
        return probs

    def project(self, vec: np.ndarray, predicate) -> Tuple[np.ndarray, float]:
        kept = np.array([predicate(occ) for occ in self.basis])
        out = np.where(kept, vec, 0.0)
        prob = float(np.vdot(out, out).real)
        if prob <= 0.0:
            raise ValueError("projection has zero probability")
        return out / math.sqrt(prob), prob


def permutation_parity(sequence: Sequence[int]) -> int:
    """+1/-1 parity of the permutation sorting the sequence ascending."""
    inv = 0
    items = list(sequence)
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if items[i] > items[j]:
                inv += 1
    return -1 if inv % 2 else 1


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def oracle_interference_sign(registry: ModeRegistry, x: BasisState,
                             y: BasisState,
                             _cache: Dict[tuple, "DenseFock"] = {}) -> int:
    """Dense recomputation of the pairing-interference parity between two
    occupation patterns of a primary-only fermionic registry."""
    from loccphase.protocols import reference_extended_registry

    key = (registry.boson_cap,
           tuple((m.party, m.label, m.species, m.charge, m.register)
                 for m in registry.modes))
    if key not in _cache:
        _cache[key] = DenseFock(reference_extended_registry(registry))
    dense = _cache[key]
    ext = dense.registry
    n = len(registry)
    primary = [ext.index_of(m.party, m.label, "primary") for m in registry.modes]
    reference = [ext.index_of(m.party, m.label, "reference") for m in registry.modes]
    bs = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)

    def component(a: BasisState, b: BasisState) -> np.ndarray:
        vec = dense.vacuum_vector()
        for m in sorted([reference[k] for k in range(n) if b[k]], reverse=True):
            vec = dense.creation(m) @ vec
        for m in sorted([primary[k] for k in range(n) if a[k]], reverse=True):
            vec = dense.creation(m) @ vec
        for p, r in zip(primary, reference):
            vec = dense.transform(vec, [p, r], bs)
        return vec

    outcome = [0] * len(ext)
    for k in range(n):
        outcome[primary[k]] = x[k]
        outcome[reference[k]] = y[k]
    idx = dense.index[tuple(outcome)]
    ratio = component(y, x)[idx] / component(x, y)[idx]
    assert abs(abs(ratio) - 1.0) < 1e-9
    return 0 if ratio.real > 0 else 1
