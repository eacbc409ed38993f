"""Exact diagonalization, dressed-state labeling, rates and parameter scans.

Dressed states are labeled by the conjoint-basis product component
|A_k^n> that dominates them, matching the way transitions are named across
the package ("A0,0" is the ground state, "A1,1" the state dominated by
|A_1> with one photon, ...).  Near an anti-crossing no component dominates;
such states carry a 'mixed' flag and scans report them rather than drop
them, which is also what produces the physical discontinuities of the
resonance curves when the dominant component flips between grid points.
"""

import os
import re
import io
import csv
from dataclasses import dataclass
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .operators import eig_hermitian, qubit_operators, tensor3
from .model import build_H0, conjoint_basis, conjoint_transform, modulation
from . import analytic


class ConvergenceError(RuntimeError):
    """Spectrum did not converge at the requested Fock truncation."""


@dataclass
class DressedSpectrum:
    """Labeled eigensystem of the static Hamiltonian.

    energies    ascending eigenvalues
    states      orthonormal eigenvectors (columns), phase-fixed
    conj_amp    conjoint-basis amplitudes, conj_amp[k*(n_tr+1)+n, l]
    labels      per state: (k, n, overlap, mixed)
    """

    params: object
    basis: object
    energies: np.ndarray
    states: np.ndarray
    conj_amp: np.ndarray
    labels: list
    rwa: bool = False

    @property
    def dim(self):
        return self.states.shape[0]

    def index_of(self, k, n):
        """Eigenstate with maximal overlap on the bare product |A_k^n>."""
        n_tr = self.params.n_tr
        if not (0 <= k <= 3 and 0 <= n <= n_tr):
            raise ValueError("label (A%d, %d) outside the retained basis" % (k, n))
        return int(np.argmax(np.abs(self.conj_amp[k * (n_tr + 1) + n, :])))

    def index_of_vector(self, v):
        """Eigenstate with maximal overlap on an arbitrary full-space vector."""
        return int(np.argmax(np.abs(self.states.conj().T @ np.asarray(v, dtype=complex))))

    def quartet(self, l, n):
        """Amplitudes of eigenstate l on the block (A0^n, A1^(n-1), A2^(n-1), A3^(n-2))."""
        n_tr = self.params.n_tr
        rows = [0 * (n_tr + 1) + n, 1 * (n_tr + 1) + n - 1,
                2 * (n_tr + 1) + n - 1, 3 * (n_tr + 1) + n - 2]
        return self.conj_amp[rows, l].real.copy()

    def sigma_e_matrix(self):
        """<phi_m| se_t |phi_l> for all dressed pairs."""
        p = self.params
        pe = tensor3(qubit_operators()["se"], np.eye(2, dtype=complex),
                     np.eye(p.n_tr + 1, dtype=complex))
        return self.states.conj().T @ pe @ self.states


MIXED_THRESHOLD = 0.5


def _label_states(conj_amp, n_tr):
    labels = []
    w = np.abs(conj_amp) ** 2
    for l in range(conj_amp.shape[1]):
        col = w[:, l]
        best = int(np.argmax(col))
        k, n = divmod(best, n_tr + 1)
        ov = float(col[best])
        labels.append((k, n, ov, ov < MIXED_THRESHOLD))
    return labels


def dressed_spectrum(p, rwa=False, check_convergence=False, conv_tol=1e-6):
    """Diagonalize H0 and label every eigenstate in the conjoint basis.

    check_convergence repeats the diagonalization at n_tr + 5 and demands
    that the energies of all states labeled with n <= n_tr/2 move by less
    than conv_tol; failure raises ConvergenceError suggesting a larger
    truncation.
    """
    H = build_H0(p, rwa=rwa)
    vals, vecs = eig_hermitian(H)
    U = conjoint_transform(p)
    conj = U.T @ vecs
    spec = DressedSpectrum(params=p, basis=conjoint_basis(p), energies=vals,
                           states=vecs, conj_amp=conj,
                           labels=_label_states(conj, p.n_tr), rwa=rwa)
    if check_convergence:
        worst = convergence_shift(p, rwa=rwa, spec=spec)
        if worst > conv_tol:
            raise ConvergenceError(
                "energies move by %.3g > %.3g when n_tr %d -> %d; "
                "increase n_tr" % (worst, conv_tol, p.n_tr, p.n_tr + 5))
    return spec


def convergence_shift(p, rwa=False, spec=None, dn=5):
    """Largest energy move of the low-photon states when n_tr grows by dn."""
    if spec is None:
        spec = dressed_spectrum(p, rwa=rwa)
    p_big = p.with_(n_tr=p.n_tr + dn)
    big = dressed_spectrum(p_big, rwa=rwa)
    worst = 0.0
    for l, (k, n, ov, mixed) in enumerate(spec.labels):
        if mixed or n > p.n_tr // 2:
            continue
        lb = big.index_of(k, n)
        worst = max(worst, abs(spec.energies[l] - big.energies[lb]))
    return worst


def transition_rate(spec, m, l, eps):
    """R_(m;l) = (eps/2) <phi_m| se_t |phi_l>; complex in general."""
    if m == l:
        raise ValueError("transition needs two distinct states")
    p = spec.params
    pe = tensor3(qubit_operators()["se"], np.eye(2, dtype=complex),
                 np.eye(p.n_tr + 1, dtype=complex))
    return eps / 2.0 * complex(np.vdot(spec.states[:, m], pe @ spec.states[:, l]))


def dimensionless_rate(spec, m, l, eps):
    """r = |R_(m;l)| / nu, the quantity plotted in every rate curve."""
    return abs(transition_rate(spec, m, l, eps)) / spec.params.nu


def resonant_frequency(spec, m, l):
    """Modulation frequency addressing the m <-> l transition: |E_l - E_m|."""
    if m == l:
        raise ValueError("transition needs two distinct states")
    return abs(spec.energies[l] - spec.energies[m])


def resonance_shift(spec, m, l, eps, iters=4):
    """Second-order drive-induced shift of the m <-> l resonance.

    The modulation eps*sin(eta*t)*se_t light-shifts every dressed level
    through its off-resonant couplings; driving at the bare splitting
    |E_lm| therefore sits slightly off the true resonance.  Returns the
    corrected modulation frequency obtained by iterating

        eta = |E_lm| + shift_l(eta) - shift_m(eta)

    with shift_m = sum_k (eps*M_mk/2)^2 * [1/(E_mk - eta) + 1/(E_mk + eta)]
    over all k (the resonant sideband of the partner state is excluded;
    it is the coherent coupling itself, not a shift).
    """
    M = spec.sigma_e_matrix().real
    E = spec.energies
    eta0 = abs(E[l] - E[m])
    lo, hi = (m, l) if E[l] >= E[m] else (l, m)
    eta = eta0

    def level_shift(state, partner, eta):
        A2 = (eps * M[state, :] / 2.0) ** 2
        dE = E[state] - E
        s = 0.0
        for k in range(len(E)):
            if k == state or A2[k] == 0.0:
                continue
            for sgn in (-1.0, 1.0):
                den = dE[k] + sgn * eta
                if k == partner and abs(den) < 0.5 * eta:
                    continue
                s += A2[k] / den
        return s

    for _ in range(iters):
        eta = eta0 + level_shift(hi, lo, eta) - level_shift(lo, hi, eta)
    return eta


def rwa_toggle(p):
    """Builder for the Hamiltonian without the ancilla-field counter-rotating term.

    Returns a callable H(t); H(None) or H() gives the static part.
    """
    q = qubit_operators()
    If = np.eye(p.n_tr + 1, dtype=complex)
    H0 = build_H0(p, rwa=True)
    pe = tensor3(q["se"], np.eye(2, dtype=complex), If)

    def build(t=None):
        if t is None:
            return H0
        return H0 + modulation(p, t) * pe

    return build


# ---------------------------------------------------------------------------
# labels and scans
# ---------------------------------------------------------------------------

_LABEL_RE = re.compile(r"^A([0-3]),(\d+)$")
_PHI_RE = re.compile(r"^phi(\d+),([1-4])$")


def parse_label(text):
    """Parse 'A<k>,<n>' (bare-dominant state) or 'phi<n>,<i>' (block state).

    Returns ("A", k, n) or ("phi", n, i) with i 1-based ascending in energy.
    """
    text = text.strip()
    m = _LABEL_RE.match(text)
    if m:
        return ("A", int(m.group(1)), int(m.group(2)))
    m = _PHI_RE.match(text)
    if m:
        return ("phi", int(m.group(1)), int(m.group(2)))
    raise ValueError("bad state label %r (expected 'A<k>,<n>' or 'phi<n>,<i>')" % text)


def format_label(lab):
    if lab[0] == "A":
        return "A%d,%d" % (lab[1], lab[2])
    return "phi%d,%d" % (lab[1], lab[2])


def resolve_label(spec, lab):
    """Map a parsed label to an eigenstate index of the spectrum."""
    if isinstance(lab, str):
        lab = parse_label(lab)
    if lab[0] == "A":
        return spec.index_of(lab[1], lab[2])
    _, n, i = lab
    sol = analytic.solve_subspace(spec.params, n, corrected=True)
    target = sol.state_vector(spec.params, i - 1)
    return spec.index_of_vector(target)


def _scan_point(args):
    (p_base, omega0, transitions, eps_scale, fixed_eps, rwa) = args
    p = p_base.with_(omega0=omega0)
    eps = fixed_eps if fixed_eps is not None else eps_scale * omega0
    spec = dressed_spectrum(p, rwa=rwa)
    rows = []
    for src, dst in transitions:
        ls = resolve_label(spec, src)
        ld = resolve_label(spec, dst)
        r = dimensionless_rate(spec, ls, ld, eps)
        eta_r = resonant_frequency(spec, ls, ld)
        flags = []
        if spec.labels[ls][3]:
            flags.append("mixed-src")
        if spec.labels[ld][3]:
            flags.append("mixed-dst")
        tid = "%s->%s" % (format_label(parse_label(src) if isinstance(src, str) else src),
                          format_label(parse_label(dst) if isinstance(dst, str) else dst))
        rows.append((omega0, tid, r, eta_r, "+".join(flags)))
    return rows


def scan_omega0(p_base, omega0_grid, transitions, eps_scale=0.1, fixed_eps=None,
                rwa=False, jobs=1):
    """Rate and resonance of each transition across a grid of omega0 values.

    transitions: list of (source, target) labels as strings or parsed
    tuples.  By default the modulation amplitude follows eps = 0.1*omega0
    like the reproduction runs; pass fixed_eps to pin it.  Rows come back
    in grid-major order regardless of jobs.
    """
    grid = np.asarray(omega0_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("omega0 grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("omega0 grid must be strictly increasing")
    for src, dst in transitions:   # validate early
        if isinstance(src, str):
            parse_label(src)
        if isinstance(dst, str):
            parse_label(dst)
    tasks = [(p_base, float(w), transitions, eps_scale, fixed_eps, rwa)
             for w in grid]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            per_point = list(ex.map(_scan_point, tasks, chunksize=4))
    else:
        per_point = [_scan_point(t) for t in tasks]
    rows = [row for point in per_point for row in point]
    return rows


SCAN_HEADER = ("omega0", "transition_id", "rate", "eta_r", "flag")


def scan_to_csv(rows, fh=None):
    """Render scan rows as CSV with the canonical header; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_HEADER)
    for omega0, tid, r, eta_r, flag in rows:
        w.writerow(["%.17g" % omega0, tid, "%.12e" % r, "%.12e" % eta_r, flag])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


@dataclass
class TransitionTable:
    """Rate table between dressed states at fixed parameters."""

    rows: list   # (m, l, E_lm, R, label_m, label_l)

    def as_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("m", "l", "e_lm", "rate_abs", "label_m", "label_l"))
        for m, l, elm, R, lm, ll in self.rows:
            w.writerow([m, l, "%.12e" % elm, "%.12e" % abs(R), lm, ll])
        return buf.getvalue()


def transition_table(spec, eps, source=0, targets=None, min_rate=0.0):
    """Rates from one dressed state to a set of targets (default: all)."""
    p = spec.params
    pe = tensor3(qubit_operators()["se"], np.eye(2, dtype=complex),
                 np.eye(p.n_tr + 1, dtype=complex))
    col = pe @ spec.states[:, source]
    if targets is None:
        targets = [l for l in range(spec.dim) if l != source]
    rows = []
    for l in targets:
        R = eps / 2.0 * complex(np.vdot(spec.states[:, l], col)).conjugate()
        if abs(R) / p.nu < min_rate:
            continue
        elm = spec.energies[l] - spec.energies[source]
        km, nm, ovm, mixm = spec.labels[source]
        kl, nl, ovl, mixl = spec.labels[l]
        lab_m = "A%d,%d%s" % (km, nm, "*" if mixm else "")
        lab_l = "A%d,%d%s" % (kl, nl, "*" if mixl else "")
        rows.append((source, l, elm, R, lab_m, lab_l))
    return TransitionTable(rows=rows)
