"""Command-line front end.

Subcommands
-----------
spectrum    labeled low-lying eigenpairs of the static Hamiltonian
scan        rate / resonance curves over a grid of bare t-qubit frequencies
evolve      time evolution (Schrodinger or master equation) to CSV
reproduce   run a named reproduction preset (fig1..fig6, table1, table2)
verify      check a preset's outputs against its embedded reference targets

Frequencies are given in units of the cavity frequency, times in units of
one over the cavity frequency.  Exit codes: 0 success, 1 validation error,
2 numerical verification failure (verify only).  Diagnostics go to stderr;
data goes to files under --out, or to stdout where no --out is given.
"""

import argparse
import json
import os
import sys

import numpy as np

from .model import SystemParams, CONFIG_KEYS, bare_ket, paper_rates
from . import spectrum as sp
from . import dynamics as dyn
from . import experiments as exp


def _load_params(args):
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ValueError("--set expects key=value, got %r" % item)
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    else:
        text = ""
    if not text and not overrides:
        raise ValueError("provide --config and/or --set with at least "
                         "omega0, omega_a, g, h")
    return SystemParams.from_config(text, overrides)


def _emit(text, args, filename):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, filename)
        with open(path, "w") as fh:
            fh.write(text)
        print(path, file=sys.stderr)
    else:
        sys.stdout.write(text)


def _add_shared(sub):
    sub.add_argument("--config", help="flat key=value parameter file "
                     "(keys: %s)" % ", ".join(CONFIG_KEYS))
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a parameter (repeatable, last wins; "
                     "frequencies in units of the cavity frequency)")
    sub.add_argument("--out", help="output directory (default: stdout)")
    sub.add_argument("--format", choices=("csv", "json"), default="csv",
                     help="tabular output format")
    sub.add_argument("--jobs", type=int, default=os.cpu_count(),
                     help="worker processes for scans and presets")


def cmd_spectrum(args):
    p = _load_params(args)
    spec = sp.dressed_spectrum(p, rwa=args.rwa)
    n_show = min(args.levels, spec.dim)
    rows = []
    for l in range(n_show):
        k, n, ov, mixed = spec.labels[l]
        rows.append(dict(index=l, energy=spec.energies[l], k=k, n=n,
                         overlap=ov, flag="mixed" if mixed else ""))
    if args.format == "json":
        text = json.dumps(rows, indent=1, default=float) + "\n"
    else:
        lines = ["index,energy,k,n,overlap,flag"]
        for r in rows:
            lines.append("%d,%.12e,%d,%d,%.6f,%s"
                         % (r["index"], r["energy"], r["k"], r["n"],
                            r["overlap"], r["flag"]))
        text = "\n".join(lines) + "\n"
    _emit(text, args, "spectrum.%s" % args.format)
    return 0


def _parse_range(text):
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ValueError("--omega0 expects start:stop:step, got %r" % text)
    if step <= 0 or stop < start:
        raise ValueError("--omega0 range must be increasing with step > 0")
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def cmd_scan(args):
    p = _load_params(args)
    grid = _parse_range(args.omega0)
    transitions = []
    for t in args.transition:
        parts = t.split(":")
        if len(parts) != 2:
            raise ValueError("--transition expects src:dst labels, got %r" % t)
        sp.parse_label(parts[0])
        sp.parse_label(parts[1])
        transitions.append((parts[0], parts[1]))
    rows = sp.scan_omega0(p, grid, transitions, rwa=args.rwa, jobs=args.jobs)
    if args.format == "json":
        text = json.dumps([dict(zip(sp.SCAN_HEADER, r)) for r in rows],
                          indent=1, default=float) + "\n"
    else:
        text = sp.scan_to_csv(rows)
    _emit(text, args, "scan.%s" % args.format)
    return 0


def _parse_initial(text, p, spec):
    text = text.strip()
    try:
        lab = sp.parse_label(text)
    except ValueError:
        lab = None
    if lab is not None:
        return spec.states[:, sp.resolve_label(spec, lab)].copy()
    parts = [s.strip() for s in text.split(",")]
    if len(parts) != 3:
        raise ValueError("--initial expects a label like 'A0,0' or a bare "
                         "ket 'g,ga,0', got %r" % text)
    qmap = {"g": 0, "e": 1}
    amap = {"ga": 0, "ea": 1}
    if parts[0] not in qmap or parts[1] not in amap:
        raise ValueError("bare ket must look like 'g,ga,0' / 'e,ea,2'")
    return bare_ket(p, qmap[parts[0]], amap[parts[1]], int(parts[2]))


def cmd_evolve(args):
    p = _load_params(args)
    if p.eta <= 0:
        raise ValueError("evolve needs eta > 0 (set it via config or --set)")
    spec = sp.dressed_spectrum(p)
    psi0 = _parse_initial(args.initial, p, spec)
    targets = ["A0,0"]
    lab0 = None
    try:
        lab0 = sp.parse_label(args.initial.strip())
    except ValueError:
        pass
    if lab0 is not None and sp.format_label(lab0) not in targets:
        targets.append(sp.format_label(lab0))
    if args.lindblad:
        traj = dyn.evolve_lindblad(p, psi0, args.t_end, sample_dt=args.sample_dt,
                                   spec=spec, fidelity_targets=targets)
    else:
        traj = dyn.evolve_schrodinger(p, psi0, args.t_end,
                                      sample_dt=args.sample_dt, spec=spec,
                                      fidelity_targets=targets)
    _emit(traj.to_csv(), args, "trajectory.csv")
    return 0


def cmd_reproduce(args):
    ids = exp.PRESET_IDS if args.preset == "all" else [args.preset]
    out = args.out or "results"
    for pid in ids:
        manifest = exp.run_preset(pid, out, jobs=args.jobs)
        for f in manifest:
            print(f, file=sys.stderr)
    return 0


def cmd_verify(args):
    ids = exp.PRESET_IDS if args.preset == "all" else [args.preset]
    out = args.out or "results"
    ok = True
    for pid in ids:
        report = exp.verify_preset(pid, out)
        for item in report["targets"]:
            status = "pass" if item["pass"] else "FAIL"
            print("[%s] %s: measured %s (target %s, tol %s)"
                  % (status, item["target"], item["measured"],
                     item["cited"], item["tolerance"]), file=sys.stderr)
        ok = ok and report["all_pass"]
    return 0 if ok else 2


def build_parser():
    ap = argparse.ArgumentParser(
        prog="modcav",
        description="Photon generation from vacuum via a modulated qubit "
                    "coupled to a cavity through an ancilla: spectra, rates, "
                    "dynamics and reproduction presets.")
    subs = ap.add_subparsers(dest="command", required=True)

    s = subs.add_parser("spectrum", help="labeled eigenpairs of the static "
                        "Hamiltonian")
    _add_shared(s)
    s.add_argument("--levels", type=int, default=20,
                   help="how many lowest eigenpairs to emit")
    s.add_argument("--rwa", action="store_true",
                   help="drop the ancilla-field counter-rotating term")
    s.set_defaults(func=cmd_spectrum)

    s = subs.add_parser("scan", help="rate/resonance scan over omega0")
    _add_shared(s)
    s.add_argument("--omega0", required=True, metavar="START:STOP:STEP",
                   help="omega0 grid in units of the cavity frequency")
    s.add_argument("--transition", action="append", required=True,
                   metavar="SRC:DST",
                   help="transition labels, e.g. A0,0:A1,1 (repeatable)")
    s.add_argument("--rwa", action="store_true",
                   help="drop the ancilla-field counter-rotating term")
    s.set_defaults(func=cmd_scan)

    s = subs.add_parser("evolve", help="time evolution to a trajectory CSV")
    _add_shared(s)
    s.add_argument("--t-end", type=float, required=True,
                   help="final time in units of 1/cavity-frequency")
    s.add_argument("--sample-dt", type=float, default=None,
                   help="sampling interval (default: t_end/1000)")
    s.add_argument("--lindblad", action="store_true",
                   help="use the master equation with the configured rates")
    s.add_argument("--initial", default="g,ga,0",
                   help="initial state: dressed label 'A0,0' or bare ket "
                        "'g,ga,0'")
    s.set_defaults(func=cmd_evolve)

    s = subs.add_parser("reproduce", help="run a reproduction preset")
    _add_shared(s)
    s.add_argument("preset", choices=exp.PRESET_IDS + ("all",),
                   help="preset id")
    s.set_defaults(func=cmd_reproduce)

    s = subs.add_parser("verify", help="check preset outputs against "
                        "reference targets")
    _add_shared(s)
    s.add_argument("preset", choices=exp.PRESET_IDS + ("all",),
                   help="preset id")
    s.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, NotADirectoryError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 1
    except dyn.StepSizeError as e:
        print("integration error: %s" % e, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
