"""Time propagation and observables.

Three propagators, all classical fixed-step 4th order Runge-Kutta:

* `evolve_schrodinger`: the lab-frame Schrodinger equation with
  H(t) = H0 + eps*sin(eta*t)*se_t.  The step obeys two ceilings: at least
  `steps_per_period` steps per drive cycle, and a phase-accuracy bound
  derived from the populated energy band so that the mandatory half-step
  Richardson re-run reproduces the final fidelities to < 1e-6.  The norm
  is never renormalized; its drift is monitored as a correctness probe.
* `evolve_lindblad`: the zero-temperature master equation with the model's
  dissipation channels.  Trace, hermiticity and positivity are monitored
  at every sample instead of the Richardson re-run (the trace is conserved
  identically by the scheme, so drift there flags genuine step failure).
* `evolve_dressed_amplitudes`: the amplitude equations in the dressed
  basis, either exact ('full', unitarily equivalent to the lab frame) or
  with rapidly oscillating terms dropped ('rwa').

Density matrices are propagated in the full operator space; no unraveling.
"""

import numpy as np
from dataclasses import dataclass, field
from numba import njit

from .operators import qubit_operators, tensor3
from .model import build_H0, lindblad_dissipators, conjoint_transform

RICHARDSON_TOL = 1e-6
NORM_TOL = 1e-6
POSITIVITY_TOL = 1e-6
PHASE_BUDGET = 1e-7


class StepSizeError(RuntimeError):
    """Integrator step failed its accuracy or physicality checks."""


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _rk4_se(H, pe, eps, eta, psi0, dt, nsteps, sample_every, samples):
    psi = psi0.copy()
    t = 0.0
    si = 0
    for step in range(nsteps):
        if step % sample_every == 0:
            samples[si] = psi
            si += 1
        s1 = eps * np.sin(eta * t)
        s2 = eps * np.sin(eta * (t + 0.5 * dt))
        s4 = eps * np.sin(eta * (t + dt))
        k1 = -1j * (np.dot(H, psi) + s1 * (pe * psi))
        y = psi + (0.5 * dt) * k1
        k2 = -1j * (np.dot(H, y) + s2 * (pe * y))
        y = psi + (0.5 * dt) * k2
        k3 = -1j * (np.dot(H, y) + s2 * (pe * y))
        y = psi + dt * k3
        k4 = -1j * (np.dot(H, y) + s4 * (pe * y))
        psi = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    samples[si] = psi
    return si + 1


@njit(cache=True)
def _lind_rhs(H, P, W, rho, s, rates, nnz, src, dst, wgt, out):
    d = rho.shape[0]
    com = np.dot(H, rho) - np.dot(rho, H)
    for i in range(d):
        for j in range(d):
            out[i, j] = (-1j * (com[i, j] + s * P[i, j] * rho[i, j])
                         + W[i, j] * rho[i, j])
    for ch in range(rates.shape[0]):
        gam = rates[ch]
        m = nnz[ch]
        for a in range(m):
            ia = dst[ch, a]
            sa = src[ch, a]
            wa = wgt[ch, a]
            for b in range(m):
                out[ia, dst[ch, b]] += gam * wa * wgt[ch, b] * rho[sa, src[ch, b]]


@njit(cache=True)
def _rk4_lind(H, P, W, eps, eta, rho0, dt, nsteps, sample_every,
              rates, nnz, src, dst, wgt, targets,
              diag_out, fid_out, tr_out, herm_out, mineig_out):
    d = rho0.shape[0]
    nt = targets.shape[0]
    rho = rho0.copy()
    k1 = np.zeros((d, d), dtype=np.complex128)
    k2 = np.zeros((d, d), dtype=np.complex128)
    k3 = np.zeros((d, d), dtype=np.complex128)
    k4 = np.zeros((d, d), dtype=np.complex128)
    t = 0.0
    si = 0
    for step in range(nsteps + 1):
        if step % sample_every == 0 or step == nsteps:
            tr = 0.0
            for i in range(d):
                diag_out[si, i] = rho[i, i].real
                tr += rho[i, i].real
            tr_out[si] = tr
            hd = 0.0
            for i in range(d):
                for j in range(i, d):
                    dev = abs(rho[i, j] - np.conj(rho[j, i]))
                    if dev > hd:
                        hd = dev
            herm_out[si] = hd
            hermrho = 0.5 * (rho + rho.conj().T)
            ev = np.linalg.eigvalsh(hermrho)
            mineig_out[si] = ev[0]
            for q in range(nt):
                u = targets[q]
                v = np.dot(rho, u)
                acc = 0.0
                for i in range(d):
                    acc += (np.conj(u[i]) * v[i]).real
                fid_out[si, q] = acc
            si += 1
        if step == nsteps:
            break
        s1 = eps * np.sin(eta * t)
        s2 = eps * np.sin(eta * (t + 0.5 * dt))
        s4 = eps * np.sin(eta * (t + dt))
        _lind_rhs(H, P, W, rho, s1, rates, nnz, src, dst, wgt, k1)
        _lind_rhs(H, P, W, rho + (0.5 * dt) * k1, s2, rates, nnz, src, dst, wgt, k2)
        _lind_rhs(H, P, W, rho + (0.5 * dt) * k2, s2, rates, nnz, src, dst, wgt, k3)
        _lind_rhs(H, P, W, rho + dt * k3, s4, rates, nnz, src, dst, wgt, k4)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    return si, rho


@njit(cache=True)
def _rk4_dressed_full(M, E, eps, eta, A0, dt, nsteps, sample_every, samples):
    d = A0.shape[0]
    A = A0.copy()
    t = 0.0
    si = 0

    def rhs(tt, Av):
        u = np.exp(-1j * E * tt) * Av
        v = np.dot(M, u)
        return -1j * eps * np.sin(eta * tt) * (np.exp(1j * E * tt) * v)

    for step in range(nsteps):
        if step % sample_every == 0:
            samples[si] = A
            si += 1
        k1 = rhs(t, A)
        k2 = rhs(t + 0.5 * dt, A + (0.5 * dt) * k1)
        k3 = rhs(t + 0.5 * dt, A + (0.5 * dt) * k2)
        k4 = rhs(t + dt, A + dt * k3)
        A = A + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    samples[si] = A
    return si + 1


@njit(cache=True)
def _rk4_dressed_rwa(RS, R0, E, eta, A0, dt, nsteps, sample_every, samples):
    A = A0.copy()
    t = 0.0
    si = 0

    def rhs(tt, Av):
        u = np.exp(-1j * E * tt) * Av
        w = np.cos(eta * tt) * np.dot(RS, u) + 1j * np.sin(eta * tt) * np.dot(R0, u)
        return -np.exp(1j * E * tt) * w

    for step in range(nsteps):
        if step % sample_every == 0:
            samples[si] = A
            si += 1
        k1 = rhs(t, A)
        k2 = rhs(t + 0.5 * dt, A + (0.5 * dt) * k1)
        k3 = rhs(t + 0.5 * dt, A + (0.5 * dt) * k2)
        k4 = rhs(t + dt, A + dt * k3)
        A = A + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    samples[si] = A
    return si + 1


# ---------------------------------------------------------------------------
# trajectories and observables
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Sampled time series of a single run.

    fidelities maps a state label to |<target|psi>|^2 (or Tr[rho P]); the
    psi array is kept for pure-state runs, only the final density operator
    for master-equation runs.
    """

    times: np.ndarray
    n_avg: np.ndarray
    se_t: np.ndarray
    se_a: np.ndarray
    n_tot: np.ndarray
    q_mandel: np.ndarray
    fock: np.ndarray                   # (ns, n_tr+1) populations
    fidelities: dict
    norm: np.ndarray = None            # pure runs: <psi|psi>; rho runs: trace
    psi: np.ndarray = None
    amplitudes: np.ndarray = None      # dressed runs: A_l(t)
    final_state: np.ndarray = None
    final_rho: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def fidelity_sum(self):
        if not self.fidelities:
            return np.zeros_like(self.times)
        return np.sum(list(self.fidelities.values()), axis=0)

    def to_csv(self, fh=None):
        import io, csv as _csv
        buf = io.StringIO()
        w = _csv.writer(buf, lineterminator="\n")
        labels = list(self.fidelities)
        head = (["t", "n_avg", "se_t", "se_a", "n_tot", "q_mandel"]
                + ["p%d" % n for n in range(9)]
                + ["f_%s" % lab.replace(",", "_") for lab in labels])
        w.writerow(head)
        pk = np.zeros((len(self.times), 9))
        avail = min(9, self.fock.shape[1])
        pk[:, :avail] = self.fock[:, :avail]
        for i, t in enumerate(self.times):
            row = (["%.9g" % t]
                   + ["%.12e" % v for v in (self.n_avg[i], self.se_t[i],
                                            self.se_a[i], self.n_tot[i],
                                            self.q_mandel[i])]
                   + ["%.12e" % v for v in pk[i]]
                   + ["%.12e" % self.fidelities[lab][i] for lab in labels])
            w.writerow(row)
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _diag_vectors(p):
    Nf = p.n_tr + 1
    I2 = np.eye(2)
    se = np.diag([0.0, 1.0])
    nvec = np.kron(np.kron(I2, I2), np.diag(np.arange(Nf, dtype=float)))
    se_t = np.kron(np.kron(se, I2), np.eye(Nf))
    se_a = np.kron(np.kron(I2, se), np.eye(Nf))
    return np.diag(nvec).copy(), np.diag(se_t).copy(), np.diag(se_a).copy()


def mandel_q(n_avg, n2_avg, form="variance"):
    """Mandel Q from first and second moments; 0 at the vacuum.

    form='variance' is (var - mean)/mean, the standard definition, which
    satisfies the squeezed-vacuum benchmark Q = 1 + 2<n>.  form='printed'
    exposes the alternative bracket (var - mean^2)/mean for auditing.
    """
    n_avg = np.asarray(n_avg, dtype=float)
    n2 = np.asarray(n2_avg, dtype=float)
    var = n2 - n_avg ** 2
    num = var - n_avg if form == "variance" else var - n_avg ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(n_avg > 0, num / np.where(n_avg > 0, n_avg, 1.0), 0.0)
    return q if q.ndim else float(q)


def observables(state, spec=None, fidelity_targets=(), p=None, q_form="variance"):
    """Expectation record of a pure state or density operator.

    fidelity_targets are state labels resolved through `spec`
    (see spectrum.resolve_label); returns a dict with n_avg, se_t, se_a,
    n_tot, q_mandel, fock (array) and fidelities (dict).
    """
    from .spectrum import resolve_label, parse_label, format_label
    if p is None:
        p = spec.params
    state = np.asarray(state, dtype=complex)
    nvec, se_t, se_a = _diag_vectors(p)
    Nf = p.n_tr + 1
    if state.ndim == 1:
        w = np.abs(state) ** 2
    else:
        w = np.diag(state).real
    n_avg = float(w @ nvec)
    n2_avg = float(w @ nvec ** 2)
    rec = {
        "n_avg": n_avg,
        "se_t": float(w @ se_t),
        "se_a": float(w @ se_a),
        "q_mandel": float(mandel_q(n_avg, n2_avg, form=q_form)),
        "fock": w.reshape(4, Nf).sum(axis=0),
    }
    rec["n_tot"] = rec["n_avg"] + rec["se_t"] + rec["se_a"]
    fid = {}
    for lab in fidelity_targets:
        idx = resolve_label(spec, lab)
        u = spec.states[:, idx]
        if state.ndim == 1:
            fid[format_label(parse_label(lab) if isinstance(lab, str) else lab)] = \
                float(abs(np.vdot(u, state)) ** 2)
        else:
            fid[format_label(parse_label(lab) if isinstance(lab, str) else lab)] = \
                float(np.real(np.vdot(u, state @ u)))
    rec["fidelities"] = fid
    return rec


# ---------------------------------------------------------------------------
# step-size policy
# ---------------------------------------------------------------------------

def _phase_limited_dt(t_end, band_halfwidth):
    """Largest step whose accumulated RK4 phase error stays within budget.

    For a mode at band offset w the per-step phase error is (w*dt)^5/120;
    over t_end/dt steps the total must stay below PHASE_BUDGET.
    """
    w = max(band_halfwidth, 1e-6)
    return (120.0 * PHASE_BUDGET / (t_end * w ** 5)) ** 0.25


def _choose_step(p, t_end, steps_per_period, band=None):
    if p.eta > 0:
        dt = (2.0 * np.pi / p.eta) / steps_per_period
    else:
        # undriven run: no drive period to resolve, fall back to sampling
        dt = t_end / max(steps_per_period, 1000)
    if band is not None:
        dt = min(dt, _phase_limited_dt(t_end, band))
    nsteps = max(1, int(np.ceil(t_end / dt)))
    return t_end / nsteps, nsteps


def _populated_band(spec, psi0, target_idx):
    """(center, halfwidth) of the energy band the run can populate."""
    ov = np.abs(spec.states.conj().T @ psi0) ** 2
    es = [spec.energies[l] for l in np.nonzero(ov > 1e-8)[0]]
    es += [spec.energies[l] for l in target_idx]
    lo, hi = min(es), max(es)
    pad = 0.15 * (hi - lo) + 0.2 * spec.params.nu
    center = 0.5 * (lo + hi)
    return center, 0.5 * (hi - lo) + pad


def _resolve_targets(spec, fidelity_targets):
    from .spectrum import resolve_label, parse_label, format_label
    idx, labels = [], []
    for lab in fidelity_targets:
        i = resolve_label(spec, lab)
        idx.append(i)
        labels.append(format_label(parse_label(lab) if isinstance(lab, str) else lab))
    return idx, labels


def _series_from_psi(p, times, psis, target_vecs, target_labels, q_form):
    nvec, se_t, se_a = _diag_vectors(p)
    w = np.abs(psis) ** 2
    norm = np.sqrt(w.sum(axis=1))
    n_avg = w @ nvec
    n2 = w @ nvec ** 2
    fock = w.reshape(len(times), 4, p.n_tr + 1).sum(axis=1)
    fid = {}
    for lab, u in zip(target_labels, target_vecs):
        fid[lab] = np.abs(psis @ u.conj()) ** 2
    se_t_s = w @ se_t
    se_a_s = w @ se_a
    return dict(times=times, n_avg=n_avg, se_t=se_t_s, se_a=se_a_s,
                n_tot=n_avg + se_t_s + se_a_s,
                q_mandel=mandel_q(n_avg, n2, form=q_form),
                fock=fock, fidelities=fid, norm=norm)


# ---------------------------------------------------------------------------
# public propagators
# ---------------------------------------------------------------------------

def evolve_schrodinger(p, psi0, t_end, sample_dt=None, spec=None,
                       fidelity_targets=("A0,0",), steps_per_period=200,
                       richardson=True, q_form="variance", rwa=False):
    """Propagate a pure state under H(t) = H0 + eps*sin(eta*t)*se_t.

    The Hamiltonian is shifted by the populated-band center (a global
    phase) to keep the integrator's phase error flat across the band.  The
    automatic Richardson verification re-runs at half step and demands the
    final fidelities agree to < 1e-6; norm drift beyond 1e-6 in either run
    raises StepSizeError.
    """
    from .spectrum import dressed_spectrum
    if spec is None:
        spec = dressed_spectrum(p, rwa=rwa)
    psi0 = np.asarray(psi0, dtype=complex)
    nrm = np.linalg.norm(psi0)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError("initial state must be normalized (|psi0| = %g)" % nrm)
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    target_idx, target_labels = _resolve_targets(spec, fidelity_targets)
    center, half = _populated_band(spec, psi0, target_idx)
    dt, nsteps = _choose_step(p, t_end, steps_per_period, band=half)
    d = p.dim
    H = (build_H0(p, rwa=rwa) - center * np.eye(d)).astype(np.complex128)
    pe = _diag_vectors(p)[1].astype(np.float64)
    if sample_dt is None:
        sample_dt = t_end / 1000.0
    sample_every = max(1, int(round(sample_dt / dt)))
    ns_max = nsteps // sample_every + 2

    def run(dt_run, nsteps_run, sample_every_run):
        buf = np.zeros((nsteps_run // sample_every_run + 2, d), dtype=np.complex128)
        ns = _rk4_se(H, pe, p.eps, p.eta, np.ascontiguousarray(psi0),
                     dt_run, nsteps_run, sample_every_run, buf)
        return buf[:ns]

    psis = run(dt, nsteps, sample_every)
    norm_drift = abs(np.linalg.norm(psis[-1]) - 1.0)
    if norm_drift > NORM_TOL:
        raise StepSizeError("norm drift %.2e exceeds %.0e at dt=%.3g; "
                            "increase steps_per_period" % (norm_drift, NORM_TOL, dt))
    target_vecs = [spec.states[:, i] for i in target_idx]
    rich_diff = None
    if richardson:
        psis_half = run(dt / 2.0, 2 * nsteps, 2 * sample_every)
        if abs(np.linalg.norm(psis_half[-1]) - 1.0) > NORM_TOL:
            raise StepSizeError("half-step run norm drift exceeds %.0e" % NORM_TOL)
        if target_vecs:
            f1 = np.array([abs(np.vdot(u, psis[-1])) ** 2 for u in target_vecs])
            f2 = np.array([abs(np.vdot(u, psis_half[-1])) ** 2 for u in target_vecs])
            rich_diff = float(np.abs(f1 - f2).max())
        else:
            rich_diff = float(np.abs(np.abs(psis[-1]) ** 2
                                     - np.abs(psis_half[-1]) ** 2).max())
        if rich_diff > RICHARDSON_TOL:
            raise StepSizeError(
                "half-step re-run moved final fidelities by %.2e (> %.0e); "
                "increase steps_per_period" % (rich_diff, RICHARDSON_TOL))
    times = np.arange(len(psis)) * sample_every * dt
    times[-1] = nsteps * dt
    series = _series_from_psi(p, times, psis, target_vecs, target_labels, q_form)
    return Trajectory(final_state=psis[-1], psi=psis,
                      meta=dict(dt=dt, nsteps=nsteps, norm_drift=norm_drift,
                                richardson_diff=rich_diff, band_center=center,
                                band_halfwidth=half, rwa=rwa),
                      **series)


def _lowering_channels(p, pairs):
    """Split (rate, op) pairs into elementwise and shift-type kernel data."""
    d = p.dim
    W = np.zeros((d, d))
    rates, srcs, dsts, wgts = [], [], [], []
    for rate, op in pairs:
        op = np.asarray(op)
        diag = np.diag(op)
        if np.abs(op - np.diag(diag)).max() < 1e-15:
            zz = diag.real
            W += rate * (np.outer(zz, zz) - np.outer(np.abs(zz) ** 2, np.ones(d)) / 2
                         - np.outer(np.ones(d), np.abs(zz) ** 2) / 2)
            continue
        nz = np.nonzero(np.abs(op) > 0)
        if np.any(np.abs(np.imag(op[nz])) > 0) or len(set(nz[1].tolist())) != len(nz[1]):
            raise ValueError("unsupported jump operator structure")
        src = nz[1].astype(np.int64)
        dst = nz[0].astype(np.int64)
        w = op[nz].real.astype(np.float64)
        LdL = (np.abs(op) ** 2).sum(axis=0)   # diagonal of L^+ L
        W -= rate / 2.0 * (LdL[:, None] + LdL[None, :])
        rates.append(rate)
        srcs.append(src)
        dsts.append(dst)
        wgts.append(w)
    nch = max(len(rates), 1)
    mx = max((len(s) for s in srcs), default=1)
    src_a = np.zeros((nch, mx), dtype=np.int64)
    dst_a = np.zeros((nch, mx), dtype=np.int64)
    wgt_a = np.zeros((nch, mx), dtype=np.float64)
    nnz = np.zeros(nch, dtype=np.int64)
    rate_a = np.zeros(nch, dtype=np.float64)
    for i in range(len(rates)):
        m = len(srcs[i])
        src_a[i, :m] = srcs[i]
        dst_a[i, :m] = dsts[i]
        wgt_a[i, :m] = wgts[i]
        nnz[i] = m
        rate_a[i] = rates[i]
    return W, rate_a, nnz, src_a, dst_a, wgt_a


def evolve_lindblad(p, rho0, t_end, sample_dt=None, spec=None,
                    fidelity_targets=(), steps_per_period=200,
                    kappa=0.0, q_form="variance"):
    """Propagate a density operator under the master equation.

    rho0 may be a pure state vector (taken to |psi><psi|) or a density
    matrix.  Trace, hermiticity and positivity are verified at every
    sample; positivity below -1e-6 raises StepSizeError.
    """
    from .spectrum import dressed_spectrum
    if spec is None:
        spec = dressed_spectrum(p)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    tr = np.trace(rho0).real
    if abs(tr - 1.0) > 1e-8:
        raise ValueError("initial density operator must have unit trace")
    if np.abs(rho0 - rho0.conj().T).max() > 1e-10:
        raise ValueError("initial density operator must be Hermitian")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    d = p.dim
    H = build_H0(p).astype(np.complex128)
    pe = _diag_vectors(p)[1]
    P = (pe[:, None] - pe[None, :]).astype(np.float64)
    W, rates, nnz, src, dst, wgt = _lowering_channels(p, lindblad_dissipators(p, kappa=kappa))
    dt, nsteps = _choose_step(p, t_end, steps_per_period)
    if sample_dt is None:
        sample_dt = t_end / 1000.0
    sample_every = max(1, int(round(sample_dt / dt)))
    target_idx, target_labels = _resolve_targets(spec, fidelity_targets)
    targets = (np.array([spec.states[:, i] for i in target_idx])
               if target_idx else np.zeros((0, d), dtype=complex))
    ns_max = nsteps // sample_every + 2
    diag_out = np.zeros((ns_max, d))
    fid_out = np.zeros((ns_max, max(1, len(target_idx))))
    tr_out = np.zeros(ns_max)
    herm_out = np.zeros(ns_max)
    mineig_out = np.zeros(ns_max)
    ns, rho_final = _rk4_lind(H, P, W, p.eps, p.eta,
                              np.ascontiguousarray(rho0), dt, nsteps,
                              sample_every, rates.astype(np.float64), nnz,
                              src, dst, wgt,
                              np.ascontiguousarray(targets, dtype=np.complex128),
                              diag_out, fid_out, tr_out, herm_out, mineig_out)
    tr_drift = float(np.abs(tr_out[:ns] - 1.0).max())
    if tr_drift > NORM_TOL:
        raise StepSizeError("trace drift %.2e exceeds %.0e" % (tr_drift, NORM_TOL))
    min_eig = float(mineig_out[:ns].min())
    if min_eig < -POSITIVITY_TOL:
        raise StepSizeError("density operator lost positivity (min eig %.2e)" % min_eig)
    herm_dev = float(herm_out[:ns].max())
    if herm_dev > 1e-10 * max(1.0, float(np.abs(rho_final).max())):
        raise StepSizeError("hermiticity deviation %.2e" % herm_dev)
    times = np.arange(ns) * sample_every * dt
    times[-1] = nsteps * dt
    nvec, se_t, se_a = _diag_vectors(p)
    w = diag_out[:ns]
    n_avg = w @ nvec
    n2 = w @ nvec ** 2
    se_t_s = w @ se_t
    se_a_s = w @ se_a
    fid = {lab: fid_out[:ns, i].copy() for i, lab in enumerate(target_labels)}
    return Trajectory(times=times, n_avg=n_avg, se_t=se_t_s, se_a=se_a_s,
                      n_tot=n_avg + se_t_s + se_a_s,
                      q_mandel=mandel_q(n_avg, n2, form=q_form),
                      fock=w.reshape(ns, 4, p.n_tr + 1).sum(axis=1),
                      fidelities=fid, norm=tr_out[:ns].copy(),
                      final_rho=rho_final,
                      meta=dict(dt=dt, nsteps=nsteps, trace_drift=tr_drift,
                                min_eig=min_eig, herm_dev=herm_dev))


def evolve_dressed_amplitudes(spec, eps, eta, A0, t_end, mode="full",
                              sample_dt=None, steps_per_period=200,
                              fidelity_targets=None, q_form="variance",
                              richardson=False):
    """Integrate the dressed-basis amplitude equations.

    mode='full' keeps every term (equivalent to the lab frame up to the
    dressed rotation); mode='rwa' drops the rapidly oscillating ones,
    leaving only near-resonant exchange with rates (eps/2)<m|se|l>.
    Fidelities are |A_l|^2 directly; other observables are reconstructed
    by rotating the amplitudes back to the bare frame at the sample times.
    """
    p = spec.params
    A0 = np.asarray(A0, dtype=complex)
    if abs(np.linalg.norm(A0) - 1.0) > 1e-8:
        raise ValueError("initial amplitudes must be normalized")
    if mode not in ("full", "rwa"):
        raise ValueError("mode must be 'full' or 'rwa'")
    if mode == "rwa" and eta > 0 and eps > 0.5 * eta:
        raise ValueError("rwa mode requires weak modulation (eps << eta)")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    M = spec.sigma_e_matrix()
    E = spec.energies.astype(np.float64)
    dt, nsteps = _choose_step(p.with_(eta=eta), t_end, steps_per_period)
    if sample_dt is None:
        sample_dt = t_end / 1000.0
    sample_every = max(1, int(round(sample_dt / dt)))

    def run(dt_run, nsteps_run, se_run):
        b = np.zeros((nsteps_run // se_run + 2, len(A0)), dtype=np.complex128)
        if mode == "full":
            ns = _rk4_dressed_full(np.ascontiguousarray(M), E, eps, eta,
                                   np.ascontiguousarray(A0), dt_run,
                                   nsteps_run, se_run, b)
        else:
            elm = E[None, :] - E[:, None]          # E_l - E_m at (m, l)
            sgn = np.sign(elm)
            R = (eps / 2.0) * M.real
            RS = np.ascontiguousarray((sgn * R).astype(np.complex128))
            R0 = np.ascontiguousarray((np.abs(sgn) * R).astype(np.complex128))
            ns = _rk4_dressed_rwa(RS, R0, E, eta, np.ascontiguousarray(A0),
                                  dt_run, nsteps_run, se_run, b)
        return b[:ns]

    amps = run(dt, nsteps, sample_every)
    drift = abs(np.linalg.norm(amps[-1]) - 1.0)
    if drift > NORM_TOL:
        raise StepSizeError("amplitude norm drift %.2e exceeds %.0e" % (drift, NORM_TOL))
    if richardson:
        amps_half = run(dt / 2.0, 2 * nsteps, 2 * sample_every)
        diff = np.abs(np.abs(amps[-1]) ** 2 - np.abs(amps_half[-1]) ** 2).max()
        if diff > RICHARDSON_TOL:
            raise StepSizeError("half-step re-run moved |A|^2 by %.2e" % diff)
    times = np.arange(len(amps)) * sample_every * dt
    times[-1] = nsteps * dt
    # rotate back to the bare frame for the generic observables
    phases = np.exp(-1j * np.outer(times, E))
    psis = (spec.states @ (phases * amps).T).T
    if fidelity_targets is None:
        labels = ["A%d,%d" % (k, n) for k, n, ov, mx in spec.labels]
        fid = {}
    else:
        idx, labels = _resolve_targets(spec, fidelity_targets)
        fid = {lab: np.abs(amps[:, i]) ** 2 for lab, i in zip(labels, idx)}
    series = _series_from_psi(p, times, psis, [], [], q_form)
    series["fidelities"] = fid
    return Trajectory(amplitudes=amps, final_state=psis[-1],
                      meta=dict(dt=dt, nsteps=nsteps, mode=mode, norm_drift=drift),
                      **series)
