"""Closed-form spectral results and transition-rate formulas.

Two complementary treatments of the static Hamiltonian in the conjoint
basis:

* far from level degeneracies, second order perturbation theory in the
  ancilla-field coupling g (`perturbative_state`);
* near a degeneracy, exact diagonalization of the 4-state block
  A_n = {A0^n, A1^(n-1), A2^(n-1), A3^(n-2)} via the quartic characteristic
  equation solved with Ferrari's trigonometric resolvent
  (`subspace_matrix`, `ferrari_roots`, `m1_eigenstates`), optionally with
  frequency shifts from the counter-rotating coupling to the neighboring
  blocks (`bloch_siegert_shifts`).

The transition-rate formulas at the bottom give the modulation-induced
rates out of the ground state in terms of the block amplitudes.
"""

import numpy as np
from dataclasses import dataclass, field

from .model import conjoint_basis, bare_index
from .operators import eig_hermitian


class DegeneracyError(ValueError):
    """Perturbation theory requested too close to a level degeneracy."""


class ComplexRootError(ValueError):
    """Quartic produced complex roots where four real ones were expected."""


# ---------------------------------------------------------------------------
# nondegenerate perturbation theory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbativeState:
    """Second-order expansion of the dressed state dominated by |A_0^n>.

    Coefficients are on the kets named in the attribute (photon index
    relative to n); entries whose photon index would be negative are zero.
    The state is not normalized: c_a0_n = 1 by construction.
    """

    n: int
    c_a0_n: float
    c_a1_nm1: float
    c_a1_np1: float
    c_a2_nm1: float
    c_a2_np1: float
    c_a0_nm2: float
    c_a3_nm2: float
    c_a0_np2: float
    c_a3_np2: float
    c_a3_n: float
    xi: tuple          # (xi1, xi2, xi3, xi4, xi5)
    energy: float      # lambda_{0,n}

    def to_vector(self, p):
        """Non-normalized state on the full Hilbert space."""
        basis = conjoint_basis(p)
        v4 = np.zeros((4, p.n_tr + 1))
        n = self.n
        v4[0, n] = self.c_a0_n
        if n >= 1:
            v4[1, n - 1] = self.c_a1_nm1
            v4[2, n - 1] = self.c_a2_nm1
        v4[1, n + 1] = self.c_a1_np1
        v4[2, n + 1] = self.c_a2_np1
        if n >= 2:
            v4[0, n - 2] = self.c_a0_nm2
            v4[3, n - 2] = self.c_a3_nm2
        v4[0, n + 2] = self.c_a0_np2
        v4[3, n + 2] = self.c_a3_np2
        v4[3, n] = self.c_a3_n
        full = np.kron(basis.states, np.eye(p.n_tr + 1)) @ v4.reshape(-1)
        return full.astype(complex)


def _denominators(p, basis):
    nu = p.nu
    dp, dm = basis.d_plus, basis.d_minus
    return (nu - dp + dm, nu + dp - dm, nu - dp - dm, nu + dp + dm)


def xi_coefficients(p, n, basis=None):
    """Second-order mixing coefficients xi1..xi5 (xi3 carries the n dependence).

    The coefficient entering xi4/xi5 is d_minus; it was pinned by matching
    the expansion against exact eigenvectors at small g.
    """
    if basis is None:
        basis = conjoint_basis(p)
    nu = p.nu
    dp, dm = basis.d_plus, basis.d_minus
    s01, s02 = basis.sigma01, basis.sigma02
    q1, q2, q3, q4 = _denominators(p, basis)   # nu -Dp+Dm, +Dp-Dm, -Dp-Dm, +Dp+Dm
    xi1 = (s01 ** 2 / q1 + s02 ** 2 / q3) / (2 * nu)
    xi2 = (s01 ** 2 / q2 + s02 ** 2 / q4) / (2 * nu)
    xi3 = -(s01 * s02 * dm / dp) * (n / (q1 * q3) + (n + 1) / (q4 * q2))
    xi4 = s01 * s02 * dm / ((nu - dp) * q3 * q1)
    xi5 = -s01 * s02 * dm / ((nu + dp) * q4 * q2)
    return xi1, xi2, xi3, xi4, xi5


def perturbative_state(p, n, basis=None):
    """Dressed state |A_0,n> and its energy to second order in g.

    Requires the working point to be far from the block degeneracies:
    min |nu +- D+ +- D-| must exceed 5*g*sqrt(n+1), otherwise a
    DegeneracyError points the caller至 the subspace treatment.
    """
    if n < 0:
        raise ValueError("photon index n must be >= 0")
    if basis is None:
        basis = conjoint_basis(p)
    dens = _denominators(p, basis)
    guard = 5.0 * p.g * np.sqrt(n + 1.0)
    if min(abs(q) for q in dens) <= guard:
        raise DegeneracyError(
            "parameters are within %g of a block degeneracy "
            "(min |nu +- D+ +- D-| = %g); use subspace_matrix instead"
            % (guard, min(abs(q) for q in dens)))
    g = p.g
    s01, s02 = basis.sigma01, basis.sigma02
    q1, q2, q3, q4 = dens
    xi = xi_coefficients(p, n, basis)
    sq_n = np.sqrt(n) if n >= 1 else 0.0
    sq_np1 = np.sqrt(n + 1.0)
    sq_nnm1 = np.sqrt(n * (n - 1.0)) if n >= 2 else 0.0
    sq_np12 = np.sqrt((n + 1.0) * (n + 2.0))
    energy = (basis.energies[0] + p.nu * n
              + g * g * (s01 ** 2 * n / q1 - s01 ** 2 * (n + 1) / q2
                         + s02 ** 2 * n / q3 - s02 ** 2 * (n + 1) / q4))
    return PerturbativeState(
        n=n,
        c_a0_n=1.0,
        c_a1_nm1=g * s01 * sq_n / q1,
        c_a1_np1=-g * s01 * sq_np1 / q2,
        c_a2_nm1=g * s02 * sq_n / q3,
        c_a2_np1=-g * s02 * sq_np1 / q4,
        c_a0_nm2=g * g * sq_nnm1 * xi[0],
        c_a3_nm2=g * g * sq_nnm1 * xi[3],
        c_a0_np2=g * g * sq_np12 * xi[1],
        c_a3_np2=g * g * sq_np12 * xi[4],
        c_a3_n=g * g * xi[2],
        xi=xi,
        energy=energy,
    )


def ground_energy(p, basis=None):
    """lambda_{0,0}: perturbative energy of the global ground state."""
    if basis is None:
        basis = conjoint_basis(p)
    q1, q2, q3, q4 = _denominators(p, basis)
    s01, s02 = basis.sigma01, basis.sigma02
    return basis.energies[0] - p.g ** 2 * (s01 ** 2 / q2 + s02 ** 2 / q4)


# ---------------------------------------------------------------------------
# near-degenerate 4-state blocks
# ---------------------------------------------------------------------------

@dataclass
class SubspaceSolution:
    """Diagonalization data of the block A_n = {A0^n, A1^(n-1), A2^(n-1), A3^(n-2)}.

    The block Hamiltonian is X*I + M1 with

        M1 = [[0,  a,  b,  0],
              [a,  x,  0, -c],
              [b,  0,  y,  d],
              [0, -c,  d,  z]]

    roots holds the eigenvalues of M1 ascending; phi[i] the amplitude row of
    root i on (A0^n, A1^(n-1), A2^(n-1), A3^(n-2)); energies = X + roots.
    """

    n: int
    X: float
    a: float
    b: float
    c: float
    d: float
    x: float
    y: float
    z: float
    B: float
    C: float
    D: float
    E: float
    bs_corrected: bool
    roots: np.ndarray = None
    phi: np.ndarray = None

    @property
    def energies(self):
        return self.X + self.roots

    def matrix(self):
        return np.array([[0, self.a, self.b, 0],
                         [self.a, self.x, 0, -self.c],
                         [self.b, 0, self.y, self.d],
                         [0, -self.c, self.d, self.z]], dtype=float)

    def basis_rows(self, p):
        """Full-space basis indices of the four block states (conjoint x Fock)."""
        n = self.n
        return [(0, n), (1, n - 1), (2, n - 1), (3, n - 2)]

    def state_vector(self, p, i, basis=None):
        """Block eigenstate i as a vector on the full Hilbert space."""
        if basis is None:
            basis = conjoint_basis(p)
        v4 = np.zeros((4, p.n_tr + 1))
        for w, (k, m) in zip(self.phi[i], self.basis_rows(p)):
            v4[k, m] = w
        return (np.kron(basis.states, np.eye(p.n_tr + 1)) @ v4.reshape(-1)).astype(complex)


def _quartic_coefficients(a, b, c, d, x, y, z):
    B = -(x + y + z)
    C = x * y + (x + y) * z - a * a - b * b - c * c - d * d
    D = ((a * a + c * c) * y + (b * b + d * d) * x + (a * a + b * b) * z
         - x * y * z)
    E = (2 * a * b * c * d + a * a * d * d + b * b * c * c
         - a * a * y * z - b * b * x * z)
    return B, C, D, E


def ferrari_roots(B, C, D, E):
    """Four real roots of L^4 + B L^3 + C L^2 + D L + E = 0, ascending.

    Uses the trigonometric resolvent; valid whenever all roots are real
    (always the case for characteristic polynomials of real symmetric
    matrices).  Tiny negative radicands from roundoff are clamped; a
    resolvent degeneracy (S ~ 0) first retries the next resolvent branch
    and only then falls back to the companion matrix.
    """
    scale = 1.0 + max(abs(B), abs(C) ** 0.5, abs(D) ** (1.0 / 3.0),
                      abs(E) ** 0.25)
    p = C - 3.0 * B * B / 8.0
    q = D + 0.5 * B * (B * B / 4.0 - C)
    disc0 = C * C - 3.0 * B * D + 12.0 * E
    if disc0 < -1e-9 * scale ** 4:
        raise ComplexRootError(
            "negative resolvent discriminant (B=%g, C=%g, D=%g, E=%g)"
            % (B, C, D, E))
    d0 = np.sqrt(max(disc0, 0.0))
    d1 = (2.0 * C ** 3 - 9.0 * C * (B * D + 8.0 * E)
          + 27.0 * (B * B * E + D * D))
    if d0 > 0:
        phi = np.arccos(np.clip(d1 / (2.0 * d0 ** 3), -1.0, 1.0)) / 3.0
    else:
        phi = 0.0

    def roots_for(cos_term):
        S2 = (d0 * cos_term - p) / 6.0
        if S2 < 0 and S2 > -1e-12 * scale ** 2:
            S2 = 0.0
        if S2 <= 0:
            return None
        S = np.sqrt(S2)
        if S < 1e-12 * scale:
            return None
        u1 = -4.0 * S2 - 2.0 * p + q / S
        u2 = -4.0 * S2 - 2.0 * p - q / S
        tol = 1e-9 * scale ** 2
        if u1 < -tol or u2 < -tol:
            return None
        r1 = np.sqrt(max(u1, 0.0))
        r2 = np.sqrt(max(u2, 0.0))
        base = -B / 4.0
        return np.sort([base - S - r1 / 2, base - S + r1 / 2,
                        base + S - r2 / 2, base + S + r2 / 2])

    for cos_term in (np.cos(phi), np.cos(phi - 2.0 * np.pi / 3.0),
                     np.cos(phi + 2.0 * np.pi / 3.0)):
        roots = roots_for(cos_term)
        if roots is not None:
            return roots

    # all resolvent branches degenerate: companion-matrix fallback
    roots = np.roots([1.0, B, C, D, E])
    if np.abs(roots.imag).max() > 1e-7 * scale:
        raise ComplexRootError(
            "quartic has complex roots (B=%g, C=%g, D=%g, E=%g)"
            % (B, C, D, E))
    return np.sort(roots.real)


def _m2_shifts(p, n, basis):
    """Frequency shifts of {A0^(n-2), A1^(n-1), A2^(n-1), A3^n} for n >= 1.

    These states are connected only by the counter-rotating part of the
    ancilla-field coupling; the block matrix has the same structure as M1.
    """
    nu = p.nu
    g = p.g
    dp, dm = basis.d_plus, basis.d_minus
    s01, s02 = basis.sigma01, basis.sigma02
    a = g * np.sqrt(n - 1.0) * s01
    b = g * np.sqrt(n - 1.0) * s02
    c = g * np.sqrt(float(n)) * s02
    d = g * np.sqrt(float(n)) * s01
    x = nu + dp - dm
    y = nu + dp + dm
    z = 2.0 * (nu + dp)
    lt = ferrari_roots(*_quartic_coefficients(a, b, c, d, x, y, z))
    return np.array([lt[0], lt[1] - x, lt[2] - y, lt[3] - z])


@dataclass(frozen=True)
class BlochSiegertShifts:
    """Shifts (delta_0^{n-2}, delta_1^{n-1}, delta_2^{n-1}, delta_3^n)."""

    n: int
    delta_0_nm2: float
    delta_1_nm1: float
    delta_2_nm1: float
    delta_3_n: float


def bloch_siegert_shifts(p, n, basis=None):
    """Counter-rotating frequency shifts from the block containing A3^n."""
    if n < 2:
        raise ValueError("Bloch-Siegert block needs n >= 2")
    if basis is None:
        basis = conjoint_basis(p)
    d = _m2_shifts(p, n, basis)
    return BlochSiegertShifts(n=n, delta_0_nm2=d[0], delta_1_nm1=d[1],
                              delta_2_nm1=d[2], delta_3_n=d[3])


def subspace_matrix(p, n, corrected=False, basis=None):
    """Block matrix data for A_n = {A0^n, A1^(n-1), A2^(n-1), A3^(n-2)}.

    With corrected=True the diagonal absorbs the counter-rotating shifts:
    X -> X + delta_0^n, x -> x + delta_1^(n-1) - delta_0^n, and so on, with
    delta_3^0 = 0 since A3^0 has no counter-rotating partners outside the
    block itself.
    """
    if n < 2:
        raise ValueError("subspace index n must be >= 2 "
                         "(the block spans photon numbers n, n-1, n-2)")
    if basis is None:
        basis = conjoint_basis(p)
    nu = p.nu
    g = p.g
    dp, dm = basis.d_plus, basis.d_minus
    s01, s02 = basis.sigma01, basis.sigma02
    a = g * np.sqrt(float(n)) * s01
    b = g * np.sqrt(float(n)) * s02
    c = g * np.sqrt(n - 1.0) * s02
    d = g * np.sqrt(n - 1.0) * s01
    x = dp - dm - nu
    y = dp + dm - nu
    z = 2.0 * (dp - nu)
    X = nu * n + basis.energies[0]
    if corrected:
        d0n = _m2_shifts(p, n + 2, basis)[0]
        dn = _m2_shifts(p, n, basis)
        d3 = _m2_shifts(p, n - 2, basis)[3] if n - 2 >= 1 else 0.0
        X += d0n
        x += dn[1] - d0n
        y += dn[2] - d0n
        z += d3 - d0n
    B, C, D, E = _quartic_coefficients(a, b, c, d, x, y, z)
    return SubspaceSolution(n=n, X=X, a=a, b=b, c=c, d=d, x=x, y=y, z=z,
                            B=B, C=C, D=D, E=E, bs_corrected=corrected)


def m1_eigenstates(sol):
    """Amplitude rows phi[i] for each root, orthonormal, phi[i][3] >= 0.

    Uses the closed forms where they are regular; degenerate roots or
    vanishing couplings (a or c ~ 0) divert to the dense eigensolver, which
    also serves as a residual check on the closed-form path.
    """
    if sol.roots is None:
        sol.roots = ferrari_roots(sol.B, sol.C, sol.D, sol.E)
    roots = sol.roots
    a, b, c, d = sol.a, sol.b, sol.c, sol.d
    x, z = sol.x, sol.z
    scale = max(np.abs(sol.matrix()).max(), 1e-300)
    closed_ok = (abs(a) > 1e-9 * scale and abs(c) > 1e-9 * scale
                 and np.min(np.diff(roots)) > 1e-7 * scale)
    phi = np.zeros((4, 4))
    if closed_ok:
        for i, L in enumerate(roots):
            den = b + (L * (x - L) * d / a + a * d) / c
            if abs(den) < 1e-10 * scale:
                closed_ok = False
                break
            Phi = (((c - (x - L) * (z - L) / c) * L / a
                    - a * (z - L) / c) / den)
            theta = (1.0 + Phi ** 2
                     + (d * Phi + z - L) ** 2 / c ** 2
                     + (c * c - (x - L) * (z - L) - (x - L) * d * Phi) ** 2
                     / (a * a * c * c)) ** -0.5
            phi[i, 0] = theta / a * (c - (x - L) / c * ((z - L) + d * Phi))
            phi[i, 1] = theta / c * (d * Phi + z - L)
            phi[i, 2] = theta * Phi
            phi[i, 3] = theta
    if closed_ok:
        gram = phi @ phi.T
        if np.abs(gram - np.eye(4)).max() > 1e-9:
            closed_ok = False
    if not closed_ok:
        vals, vecs = eig_hermitian(sol.matrix().astype(complex))
        sol.roots = vals
        phi = vecs.T.real.copy()
        for i in range(4):
            if phi[i, 3] < 0 or (phi[i, 3] == 0 and phi[i, np.argmax(np.abs(phi[i]))] < 0):
                phi[i] *= -1.0
    sol.phi = phi
    return phi


def solve_subspace(p, n, corrected=True, basis=None):
    """One call: block matrix, Ferrari roots and amplitudes."""
    sol = subspace_matrix(p, n, corrected=corrected, basis=basis)
    sol.roots = ferrari_roots(sol.B, sol.C, sol.D, sol.E)
    m1_eigenstates(sol)
    return sol


# ---------------------------------------------------------------------------
# modulation-induced transition rates
# ---------------------------------------------------------------------------

def analytic_rate_2exc(p, sol, i, basis=None):
    """Rate of |A_0,0> -> block-n=2 eigenstate i, first order in g.

    R = (eps*h^2/2) * [N0*N3*phi_i^(3) - g*T_i]  with
    T_i = (s01*N1/(nu+D+-D-) + s02*N2/(nu+D++D-)) * (N1*phi_i^(1) + N2*phi_i^(2)).
    """
    if sol.n != 2:
        raise ValueError("2-excitation rate needs the n=2 block")
    if p.eps == 0 or p.h == 0:
        return 0.0
    if basis is None:
        basis = conjoint_basis(p)
    if sol.phi is None:
        m1_eigenstates(sol)
    N0, N1, N2, N3 = basis.norms
    q1, q2, q3, q4 = _denominators(p, basis)
    ph = sol.phi[i]
    Ti = ((basis.sigma01 * N1 / q2 + basis.sigma02 * N2 / q4)
          * (N1 * ph[1] + N2 * ph[2]))
    return p.eps * p.h ** 2 / 2.0 * (N0 * N3 * ph[3] - p.g * Ti)


def analytic_rate_ladder(p, sol_n, i, sol_np2, j, basis=None):
    """Rate between block eigenstates |phi_(n,i)> and |phi_(n+2,j)>.

    R = (eps/2) * N0*N3*h^2 * phi_(n,i)^(0) * phi_(n+2,j)^(3).
    """
    if sol_np2.n != sol_n.n + 2:
        raise ValueError("blocks must be two photons apart")
    if p.eps == 0 or p.h == 0:
        return 0.0
    if basis is None:
        basis = conjoint_basis(p)
    if sol_n.phi is None:
        m1_eigenstates(sol_n)
    if sol_np2.phi is None:
        m1_eigenstates(sol_np2)
    N0, N1, N2, N3 = basis.norms
    return (p.eps / 2.0 * N0 * N3 * p.h ** 2
            * sol_n.phi[i][0] * sol_np2.phi[j][3])


def analytic_rate_4exc(p, sol, i, basis=None):
    """Order-of-magnitude lower bound on the |A_0,0> -> n=4 block rate.

    R ~ sqrt(2) * (eps/2) * h^2 * g^2 * phi_i^(3) * N3 * (N0*xi2 + N3*xi5),
    built from the second-order tail of the ground state; known to
    underestimate the exact rate.
    """
    if sol.n != 4:
        raise ValueError("4-excitation rate needs the n=4 block")
    if p.eps == 0 or p.h == 0 or p.g == 0:
        return 0.0
    if basis is None:
        basis = conjoint_basis(p)
    if sol.phi is None:
        m1_eigenstates(sol)
    xi = xi_coefficients(p, 0, basis)
    N0, N1, N2, N3 = basis.norms
    return (np.sqrt(2.0) * p.eps / 2.0 * p.h ** 2 * p.g ** 2
            * sol.phi[i][3] * N3 * (N0 * xi[1] + N3 * xi[4]))
