"""Dense complex-matrix building blocks on the tripartite Hilbert space.

The simulated system is a t-qubit (externally modulated two-level system),
a stationary ancilla qubit and a single cavity mode truncated at ``n_tr``
photons.  Tensor factors are ordered t-qubit (x) ancilla (x) field
throughout the package, so the basis index of ``|q, q_a, n>`` is
``q*2*(n_tr+1) + q_a*(n_tr+1) + n``.

Everything is kept dense: the largest Hilbert space used anywhere is a few
hundred states, far below the point where sparsity would pay off.
"""

import numpy as np

HERMITICITY_RTOL = 1e-12


def fock_annihilation(n_tr):
    """Photon annihilation operator on the Fock space truncated at n_tr.

    Returns an (n_tr+1) x (n_tr+1) matrix with <n-1|a|n> = sqrt(n).
    """
    if n_tr < 1:
        raise ValueError("n_tr must be >= 1 (need at least states |0> and |1>)")
    a = np.zeros((n_tr + 1, n_tr + 1), dtype=complex)
    for n in range(1, n_tr + 1):
        a[n - 1, n] = np.sqrt(n)
    return a


def fock_number(n_tr):
    """Photon number operator diag(0, 1, ..., n_tr)."""
    return np.diag(np.arange(n_tr + 1, dtype=float)).astype(complex)


def qubit_operators():
    """Qubit operators in the ordered basis (|g>, |e>).

    Returns a dict with keys 'se' (excited-state projector |e><e|),
    'sz' (|e><e| - |g><g|), 'sm' (|g><e|), 'sp' (|e><g|) and 'sx'.
    """
    se = np.diag([0.0, 1.0]).astype(complex)
    sz = np.diag([-1.0, 1.0]).astype(complex)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    sp = sm.conj().T
    sx = sm + sp
    return {"se": se, "sz": sz, "sm": sm, "sp": sp, "sx": sx}


def tensor3(op_t, op_a, op_f):
    """Embed single-subsystem operators: op_t (x) op_a (x) op_f.

    op_t and op_a must be 2x2 (t-qubit, ancilla); op_f acts on the field.
    """
    op_t = np.asarray(op_t)
    op_a = np.asarray(op_a)
    op_f = np.asarray(op_f)
    if op_t.shape != (2, 2) or op_a.shape != (2, 2):
        raise ValueError("qubit factors must be 2x2, got %s and %s"
                         % (op_t.shape, op_a.shape))
    if op_f.ndim != 2 or op_f.shape[0] != op_f.shape[1]:
        raise ValueError("field factor must be square, got %s" % (op_f.shape,))
    return np.kron(np.kron(op_t, op_a), op_f)


def is_hermitian(M, rtol=HERMITICITY_RTOL):
    M = np.asarray(M)
    scale = max(np.abs(M).max(), 1e-300)
    return np.abs(M - M.conj().T).max() <= rtol * scale


def eig_hermitian(M, check=True):
    """Eigendecomposition of a Hermitian matrix with a fixed phase convention.

    Eigenvalues come out ascending; degenerate groups are ordered by the
    index of each eigenvector's dominant component.  The global phase of
    every eigenvector is fixed so that its largest-magnitude component is
    real and positive, which makes amplitude tables reproducible up to one
    overall sign.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns.
    """
    M = np.asarray(M, dtype=complex)
    if check and not is_hermitian(M):
        raise ValueError("matrix is not Hermitian within tolerance %g"
                         % HERMITICITY_RTOL)
    vals, vecs = np.linalg.eigh(M)
    # stable ordering inside (near-)degenerate groups
    scale = max(abs(vals[0]), abs(vals[-1]), 1.0)
    tol = 1e-12 * scale
    i = 0
    n = len(vals)
    while i < n:
        j = i + 1
        while j < n and vals[j] - vals[i] <= tol:
            j += 1
        if j - i > 1:
            dom = [int(np.argmax(np.abs(vecs[:, k]))) for k in range(i, j)]
            order = np.argsort(dom, kind="stable")
            vecs[:, i:j] = vecs[:, i + order]
            vals[i:j] = vals[i + order]
        i = j
    vecs = fix_phases(vecs)
    return vals, vecs


def fix_phases(vecs):
    """Rotate each column so its largest-magnitude entry is real positive."""
    vecs = np.array(vecs, dtype=complex, copy=True)
    for k in range(vecs.shape[1]):
        idx = int(np.argmax(np.abs(vecs[:, k])))
        z = vecs[idx, k]
        if z != 0:
            vecs[:, k] *= np.conj(z) / abs(z)
            # strip the residual imaginary dust on the pivot
            if abs(vecs[idx, k].imag) < 1e-14 * abs(vecs[idx, k]):
                vecs[idx, k] = vecs[idx, k].real
    return vecs
