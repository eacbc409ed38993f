"""Physical model: parameters, conjoint two-atom basis, Hamiltonians, dissipators.

All frequencies and rates are expressed in units of the cavity frequency
``nu`` and times in units of ``1/nu``.  The t-qubit transition frequency is
modulated as ``Omega(t) = omega0 + eps*sin(eta*t)`` while everything else is
static.

The "conjoint" atomic basis A0..A3 diagonalizes the two-atom Hamiltonian

    H_a = omega0*se + omega_a*se_a + h*sx*sx_a

and is the natural frame for the analytic treatment: with it the static
Hamiltonian is H0 = nu*n + sum_i lam_i |A_i><A_i| + g*(a + a^+)*sx_a.
"""

import warnings
from dataclasses import dataclass, replace, asdict

import numpy as np

from .operators import fock_annihilation, fock_number, qubit_operators, tensor3

CONFIG_KEYS = ("nu", "omega0", "omega_a", "g", "h", "eps", "eta",
               "gamma", "gamma_ph", "gamma_a", "gamma_ph_a", "n_tr")


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the tripartite system, in units of nu.

    nu          cavity frequency (the unit, normally 1)
    omega0      bare t-qubit frequency
    omega_a     ancilla frequency
    g           ancilla-field coupling
    h           t-qubit-ancilla coupling
    eps         modulation amplitude of the t-qubit frequency
    eta         modulation frequency
    gamma       t-qubit relaxation rate
    gamma_ph    t-qubit pure dephasing rate
    gamma_a     ancilla relaxation rate
    gamma_ph_a  ancilla pure dephasing rate
    n_tr        photon-number truncation of the Fock space
    """

    omega0: float
    omega_a: float
    g: float
    h: float
    eps: float = 0.0
    eta: float = 0.0
    gamma: float = 0.0
    gamma_ph: float = 0.0
    gamma_a: float = 0.0
    gamma_ph_a: float = 0.0
    n_tr: int = 15
    nu: float = 1.0

    def __post_init__(self):
        for name in ("nu", "omega0", "omega_a", "g", "h", "eps", "eta",
                     "gamma", "gamma_ph", "gamma_a", "gamma_ph_a"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError("%s must be finite and >= 0, got %r" % (name, v))
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.g >= self.nu or self.h >= self.nu:
            raise ValueError("couplings g, h must stay below the cavity frequency")
        if int(self.n_tr) != self.n_tr or self.n_tr < 2:
            raise ValueError("n_tr must be an integer >= 2")
        object.__setattr__(self, "n_tr", int(self.n_tr))
        if self.eta > 0 and self.eps > 0.5 * self.eta:
            warnings.warn("eps = %.3g exceeds 0.5*eta = %.3g: outside the "
                          "weak-modulation regime" % (self.eps, 0.5 * self.eta),
                          stacklevel=2)

    @property
    def dim(self):
        return 4 * (self.n_tr + 1)

    def with_(self, **kw):
        """Copy with some fields replaced."""
        return replace(self, **kw)

    # --- flat key=value config round trip -------------------------------

    def to_config(self):
        """Serialize as 'key = value' lines, one per parameter."""
        d = asdict(self)
        lines = ["%s = %.17g" % (k, d[k]) if k != "n_tr" else "n_tr = %d" % d[k]
                 for k in CONFIG_KEYS]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text, overrides=None):
        """Parse a flat key=value document ('#' starts a comment).

        Unknown keys are a hard error.  `overrides` (dict of key -> string
        or number) is applied after the file, last one wins.
        """
        values = {}
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("line %d: expected 'key = value', got %r" % (ln, raw))
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ValueError("line %d: unknown parameter %r (accepted: %s)"
                                 % (ln, key, ", ".join(CONFIG_KEYS)))
            values[key] = val
        if overrides:
            for key, val in overrides.items():
                if key not in CONFIG_KEYS:
                    raise ValueError("unknown parameter %r (accepted: %s)"
                                     % (key, ", ".join(CONFIG_KEYS)))
                values[key] = val
        kwargs = {}
        for key, val in values.items():
            kwargs[key] = int(float(val)) if key == "n_tr" else float(val)
        missing = [k for k in ("omega0", "omega_a", "g", "h") if k not in kwargs]
        if missing:
            raise ValueError("config must define at least: %s (missing %s)"
                             % ("omega0, omega_a, g, h", ", ".join(missing)))
        return cls(**kwargs)


@dataclass(frozen=True)
class AtomicBasis:
    """The four conjoint eigenstates of the two-atom Hamiltonian H_a.

    states      4x4 real matrix, column k is |A_k> in the ordered two-atom
                basis (|g,g_a>, |g,e_a>, |e,g_a>, |e,e_a>)
    energies    lam_0 <= lam_1 <= lam_2 <= lam_3
    w_plus/-    (omega_a +- omega0)/2
    d_plus/-    sqrt(w_plus/-^2 + h^2)
    norms       normalization constants N_0..N_3 (dimension 1/frequency)
    sigma01/02  <A_0| sx_a |A_1,2>, the only couplings out of A_0
    """

    states: np.ndarray
    energies: np.ndarray
    w_plus: float
    w_minus: float
    d_plus: float
    d_minus: float
    norms: np.ndarray
    sigma01: float
    sigma02: float

    def sigma_x_a(self):
        """sx_a written in the conjoint basis (4x4, symmetric)."""
        sxa = np.kron(np.eye(2), qubit_operators()["sx"].real)
        return self.states.T @ sxa @ self.states


def conjoint_basis(p):
    """Diagonalize H_a = omega0*se + omega_a*se_a + h*sx*sx_a in closed form.

    The eigenpairs are

        |A_0> = N_0 [(W+ + D+)|g,g_a> - h|e,e_a>],   lam_0 = W+ - D+
        |A_1> = N_1 [(W- - D-)|g,e_a> + h|e,g_a>],   lam_1 = W+ - D-
        |A_2> = N_2 [(W- + D-)|g,e_a> + h|e,g_a>],   lam_2 = W+ + D-
        |A_3> = N_3 [(W+ - D+)|g,g_a> - h|e,e_a>],   lam_3 = W+ + D+

    with W+- = (omega_a +- omega0)/2 and D+- = sqrt(W+-^2 + h^2).  The h -> 0
    limits are taken explicitly so all four states stay well defined: A_3 ->
    -|e,e_a>, and A_1, A_2 resolve to the appropriate bare or symmetric /
    antisymmetric combinations depending on the sign of W-.
    """
    h = p.h
    wp = 0.5 * (p.omega_a + p.omega0)
    wm = 0.5 * (p.omega_a - p.omega0)
    dp = np.hypot(wp, h)
    dm = np.hypot(wm, h)

    states = np.zeros((4, 4))
    if h > 0:
        # (W+ - D+) = -h^2/(W+ + D+) rewritten to avoid cancellation
        states[:, 0] = [wp + dp, 0.0, 0.0, -h]
        states[:, 3] = [-h * h / (wp + dp), 0.0, 0.0, -h]
        if wm >= 0:
            states[:, 1] = [0.0, -h * h / (wm + dm), h, 0.0]
            states[:, 2] = [0.0, wm + dm, h, 0.0]
        else:
            states[:, 1] = [0.0, wm - dm, h, 0.0]
            states[:, 2] = [0.0, h * h / (dm - wm), h, 0.0]
    else:
        # uncoupled atoms: continuous h -> 0+ limit of the forms above
        states[:, 0] = [1.0, 0.0, 0.0, 0.0]
        states[:, 3] = [0.0, 0.0, 0.0, -1.0]
        if wm > 0:
            states[:, 1] = [0.0, 0.0, 1.0, 0.0]
            states[:, 2] = [0.0, 1.0, 0.0, 0.0]
        elif wm < 0:
            states[:, 1] = [0.0, -1.0, 0.0, 0.0]
            states[:, 2] = [0.0, 0.0, 1.0, 0.0]
        else:
            s = 1.0 / np.sqrt(2.0)
            states[:, 1] = [0.0, -s, s, 0.0]
            states[:, 2] = [0.0, s, s, 0.0]
    norms = np.zeros(4)
    for k in range(4):
        n = np.linalg.norm(states[:, k])
        states[:, k] /= n
        norms[k] = 1.0 / n
    if h == 0:
        # The normalization constants of the degenerate closed forms diverge
        # like 1/h; store the h -> 0+ limits (inf where divergent).  They
        # only ever enter rates through products that vanish with h.
        norms[0] = 0.5 / wp if wp > 0 else np.inf
        norms[3] = np.inf
        norms[1] = 0.5 / abs(wm) if wm < 0 else np.inf
        norms[2] = 0.5 / wm if wm > 0 else np.inf

    energies = np.array([wp - dp, wp - dm, wp + dm, wp + dp])
    sxa = np.kron(np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]]))
    sig = states.T @ sxa @ states
    return AtomicBasis(states=states, energies=energies, w_plus=wp, w_minus=wm,
                       d_plus=dp, d_minus=dm, norms=norms,
                       sigma01=float(sig[0, 1]), sigma02=float(sig[0, 2]))


def build_H0(p, basis=None, rwa=False):
    """Static Hamiltonian H0 on the full t-qubit (x) ancilla (x) field space.

    With rwa=True the ancilla-field counter-rotating term
    g*(a*sm_a + a^+*sp_a) is dropped, leaving only g*(a*sp_a + a^+*sm_a);
    the t-qubit-ancilla coupling is untouched.
    """
    q = qubit_operators()
    a = fock_annihilation(p.n_tr)
    If = np.eye(p.n_tr + 1, dtype=complex)
    I2 = np.eye(2, dtype=complex)
    H = p.nu * tensor3(I2, I2, fock_number(p.n_tr))
    H += p.omega0 * tensor3(q["se"], I2, If)
    H += p.omega_a * tensor3(I2, q["se"], If)
    H += p.h * tensor3(q["sx"], q["sx"], If)
    if rwa:
        H += p.g * (tensor3(I2, q["sp"], a) + tensor3(I2, q["sm"], a.conj().T))
    else:
        H += p.g * tensor3(I2, q["sx"], a + a.conj().T)
    return H


def build_H0_conjoint(p, basis=None):
    """H0 assembled in the conjoint form nu*n + sum lam_i |A_i><A_i| + g(a+a^+)sx_a.

    Agrees with build_H0 elementwise; kept as an independent assembly path.
    """
    if basis is None:
        basis = conjoint_basis(p)
    a = fock_annihilation(p.n_tr)
    If = np.eye(p.n_tr + 1, dtype=complex)
    proj = basis.states @ np.diag(basis.energies) @ basis.states.T
    H = p.nu * np.kron(np.eye(4, dtype=complex), fock_number(p.n_tr))
    H += np.kron(proj.astype(complex), If)
    sxa = np.kron(np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex))
    H += p.g * np.kron(sxa, a + a.conj().T)
    return H


def modulation(p, t):
    """Instantaneous t-qubit frequency shift eps*sin(eta*t)."""
    return p.eps * np.sin(p.eta * np.asarray(t))


def build_H(p, t):
    """Total Hamiltonian H(t) = H0 + eps*sin(eta*t)*se_t."""
    q = qubit_operators()
    If = np.eye(p.n_tr + 1, dtype=complex)
    return build_H0(p) + modulation(p, t) * tensor3(q["se"], np.eye(2, dtype=complex), If)


def lindblad_dissipators(p, kappa=0.0):
    """Zero-temperature dissipation channels as (rate, jump operator) pairs.

    Channels: t-qubit relaxation (gamma, sm), t-qubit dephasing
    (gamma_ph/2, sz), ancilla relaxation (gamma_a, sm_a), ancilla dephasing
    (gamma_ph_a/2, sz_a).  Cavity decay is off in the model; pass kappa > 0
    to add (kappa, a) as an extra channel.  Channels with zero rate are
    dropped, so the unitary limit returns an empty list.
    """
    for name, v in (("gamma", p.gamma), ("gamma_ph", p.gamma_ph),
                    ("gamma_a", p.gamma_a), ("gamma_ph_a", p.gamma_ph_a),
                    ("kappa", kappa)):
        if v < 0:
            raise ValueError("%s must be >= 0" % name)
    q = qubit_operators()
    If = np.eye(p.n_tr + 1, dtype=complex)
    I2 = np.eye(2, dtype=complex)
    pairs = [
        (p.gamma, tensor3(q["sm"], I2, If)),
        (p.gamma_ph / 2.0, tensor3(q["sz"], I2, If)),
        (p.gamma_a, tensor3(I2, q["sm"], If)),
        (p.gamma_ph_a / 2.0, tensor3(I2, q["sz"], If)),
        (kappa, tensor3(I2, I2, fock_annihilation(p.n_tr))),
    ]
    return [(rate, op) for rate, op in pairs if rate > 0]


def paper_rates(g):
    """Default damping set used in the dissipative runs, scaled from g.

    gamma = 5e-3*g, gamma_ph = gamma/2, ancilla rates 5x smaller.
    """
    gamma = 5e-3 * g
    return dict(gamma=gamma, gamma_ph=gamma / 2.0,
                gamma_a=gamma / 5.0, gamma_ph_a=gamma / 10.0)


def bare_index(p, q, q_a, n):
    """Basis index of |q, q_a, n| in the t (x) ancilla (x) field ordering."""
    if q not in (0, 1) or q_a not in (0, 1):
        raise ValueError("qubit labels must be 0 (ground) or 1 (excited)")
    if not 0 <= n <= p.n_tr:
        raise ValueError("photon index %d outside truncation 0..%d" % (n, p.n_tr))
    return (2 * q + q_a) * (p.n_tr + 1) + n


def bare_ket(p, q, q_a, n):
    """Unit vector |q, q_a, n> on the full space."""
    v = np.zeros(p.dim, dtype=complex)
    v[bare_index(p, q, q_a, n)] = 1.0
    return v


def conjoint_transform(p, basis=None):
    """Matrix whose columns are the |A_k^n| product states.

    Column index k*(n_tr+1) + n.  Multiplying a state vector by the
    transpose gives its conjoint-basis amplitudes.
    """
    if basis is None:
        basis = conjoint_basis(p)
    return np.kron(basis.states, np.eye(p.n_tr + 1))
