"""Command-line front end: state files, run configs, batch commands, CSV and SVG output."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracle
from .elliptic_core import dtn
from .errors import CollarMismatch, FbmhdError
from .field_calculus import workspace
from .fields import VectorField
from .functionals import distance, higher_energy
from .mhd_state import StateConfig, assemble, check_state, diagnostics
from .stepper import StepConfig, halt_reason, run, self_convergence, step
from .surface_geometry import BoundarySeries, DomainChart, build_surface

MAGIC = b"FBMHD1\n"
HEADER_KEYS = ("n_r", "n_theta", "M", "collar_delta", "epsilon")
CSV_COLUMNS = ("t", "E_total", "E3_total", "a_min", "tangency_res", "div_res_v", "div_res_B",
               "boundary_sup_disp", "halt_reason")

EXIT_OK, EXIT_IO, EXIT_CONSTRAINT, EXIT_HALT = 0, 1, 2, 3


class FormatError(ValueError):
    """Malformed state or config file."""


@dataclass(frozen=True, eq=False)
class StateFile:
    n_r: int
    n_theta: int
    collar_delta: float
    epsilon: float
    eta_coeffs: np.ndarray  # complex, length 2M+1
    v: np.ndarray           # (2, n_r, n_theta)
    B: np.ndarray

    @property
    def M(self):
        return self.eta_coeffs.size // 2

    @classmethod
    def from_state(cls, state, epsilon=0.0):
        chart = state.chart
        return cls(chart.n_r, chart.n_theta, float(state.surface.collar_delta), float(epsilon),
                   np.array(state.eta.coeffs), np.array(state.v.values), np.array(state.B.values))

    def to_bytes(self):
        head = [MAGIC]
        for key in HEADER_KEYS:
            val = getattr(self, key)
            head.append(f"{key}={val!r}\n".encode("ascii"))
        eta = np.empty(2 * self.eta_coeffs.size, dtype="<f8")
        eta[0::2] = self.eta_coeffs.real
        eta[1::2] = self.eta_coeffs.imag
        body = [eta.tobytes(), np.asarray(self.v, dtype="<f8").tobytes(),
                np.asarray(self.B, dtype="<f8").tobytes()]
        return b"".join(head + body)

    @classmethod
    def from_bytes(cls, data):
        if not data.startswith(MAGIC):
            raise FormatError("bad magic string")
        pos = len(MAGIC)
        header = {}
        for key in HEADER_KEYS:
            end = data.find(b"\n", pos)
            if end < 0:
                raise FormatError("truncated header")
            line = data[pos:end].decode("ascii", errors="replace")
            pos = end + 1
            name, sep, val = line.partition("=")
            if name != key or not sep:
                raise FormatError(f"expected header key {key!r}, got {line!r}")
            header[key] = val
        try:
            n_r, n_theta, M = int(header["n_r"]), int(header["n_theta"]), int(header["M"])
            collar, eps = float(header["collar_delta"]), float(header["epsilon"])
        except ValueError as exc:
            raise FormatError(f"bad header value: {exc}") from None
        if n_r < 1 or n_theta < 1 or M < 0:
            raise FormatError("nonpositive sizes in header")
        n_eta = 2 * (2 * M + 1)
        n_field = 2 * n_r * n_theta
        expected = 8 * (n_eta + 2 * n_field)
        payload = data[pos:]
        if len(payload) != expected:
            raise FormatError(f"payload has {len(payload)} bytes, header implies {expected}")
        arr = np.frombuffer(payload, dtype="<f8")
        eta = arr[:n_eta]
        coeffs = eta[0::2] + 1j * eta[1::2]
        v = arr[n_eta:n_eta + n_field].reshape(2, n_r, n_theta).astype(float)
        B = arr[n_eta + n_field:].reshape(2, n_r, n_theta).astype(float)
        return cls(n_r, n_theta, collar, eps, coeffs, v, B)

    def write(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path):
        return cls.from_bytes(Path(path).read_bytes())

    def chart(self):
        surf = build_surface(BoundarySeries(self.eta_coeffs), self.collar_delta)
        return DomainChart(surf, self.n_r, self.n_theta)

    def to_state(self, cfg=None, project=True, validate=True):
        cfg = cfg or StateConfig(self.n_r, self.n_theta)
        chart = self.chart()
        return assemble(chart, VectorField(chart, self.v), VectorField(chart, self.B), cfg,
                        project=project, validate=validate)

    def same_arrays(self, other):
        """Bitwise equality of header values and arrays."""
        return (self.n_r == other.n_r and self.n_theta == other.n_theta
                and self.collar_delta == other.collar_delta and self.epsilon == other.epsilon
                and all(a.tobytes() == b.tobytes() for a, b in (
                    (self.eta_coeffs, other.eta_coeffs), (self.v, other.v), (self.B, other.B))))


# run configuration -----------------------------------------------------------

_STEP_FIELDS = {f.name: f for f in dataclasses.fields(StepConfig)}
_EXTRA_KEYS = {"state": str, "T": float, "out": str, "svg": bool, "eps_list": list, "csv": str}


def _parse_bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise FormatError(f"not a boolean: {s!r}")


def _parse_value(key, raw):
    raw = raw.strip()
    if key in _EXTRA_KEYS:
        kind = _EXTRA_KEYS[key]
        if kind is list:
            return [float(x) for x in raw.replace(",", " ").split()]
        if kind is bool:
            return _parse_bool(raw)
        return kind(raw)
    typ = str(_STEP_FIELDS[key].type)
    if raw.lower() == "none" and "None" in typ:
        return None
    if typ.startswith("bool"):
        return _parse_bool(raw)
    if typ.startswith("int"):
        return int(raw)
    return float(raw)


@dataclass
class RunConfigFile:
    values: dict

    @classmethod
    def parse(cls, text):
        vals = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep:
                raise FormatError(f"line {lineno}: expected key=value")
            if key not in _STEP_FIELDS and key not in _EXTRA_KEYS:
                raise FormatError(f"line {lineno}: unknown key {key!r}")
            try:
                vals[key] = _parse_value(key, raw)
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
        return cls(vals)

    @classmethod
    def read(cls, path):
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def serialize(self):
        lines = []
        for key in sorted(self.values):
            val = self.values[key]
            if isinstance(val, list):
                val = ",".join(repr(x) for x in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{key}={val}")
        return "\n".join(lines) + "\n"

    def step_config(self, n_r, n_theta):
        kw = {k: v for k, v in self.values.items() if k in _STEP_FIELDS}
        kw["n_r"], kw["n_theta"] = n_r, n_theta
        try:
            return StepConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise FormatError(str(exc)) from None

    def get(self, key, default=None):
        return self.values.get(key, default)


# output ----------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    return repr(float(x))


def write_run_csv(stream, rows, final_reason, wall_times=None):
    cols = list(CSV_COLUMNS) + (["wall_time"] if wall_times is not None else [])
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(cols)
    for i, row in enumerate(rows):
        out = [_fmt(row[c]) for c in CSV_COLUMNS[:-1]]
        out.append(final_reason if i == len(rows) - 1 else "")
        if wall_times is not None:
            out.append(_fmt(wall_times[i]))
        w.writerow(out)


def read_run_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames[:len(CSV_COLUMNS)]) != CSV_COLUMNS:
            raise FormatError(f"unexpected CSV header {reader.fieldnames}")
        return list(reader)


def boundary_svg(curves, size=400):
    """SVG with one closed polyline per (label, eta, color) plus axes."""
    n = 512
    theta = 2 * np.pi * np.arange(n) / n
    pts = []
    rmax = 0.0
    for label, eta, color in curves:
        r = 1.0 + eta.values(n)
        rmax = max(rmax, float(np.max(r)))
        pts.append((label, r * np.cos(theta), r * np.sin(theta), color))
    scale = 0.45 * size / rmax
    c = size / 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<line x1="0" y1="{c}" x2="{size}" y2="{c}" stroke="#999" stroke-width="1"/>',
             f'<line x1="{c}" y1="0" x2="{c}" y2="{size}" stroke="#999" stroke-width="1"/>']
    for i, (label, x, y, color) in enumerate(pts):
        coords = " ".join(f"{c + scale * a:.3f},{c - scale * b:.3f}" for a, b in zip(x, y))
        parts.append(f'<polygon points="{coords}" fill="none" stroke="{color}" stroke-width="1.5">'
                     f'<title>{label}</title></polygon>')
        parts.append(f'<text x="8" y="{18 + 16 * i}" fill="{color}" font-size="12">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# commands --------------------------------------------------------------------

def _err(msg):
    print(msg, file=sys.stderr)


def _load(path, project=True, validate=True):
    sf = StateFile.read(path)
    return sf, sf.to_state(project=project, validate=validate)


def cmd_validate(args):
    try:
        sf, state = _load(args.state, validate=False)
    except (OSError, FormatError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    except FbmhdError as exc:
        print(f"invalid: {type(exc).__name__}: {exc}")
        return EXIT_CONSTRAINT
    d = diagnostics(state)
    print(f"div_residual_v={d.div_residual_v!r}")
    print(f"div_residual_B={d.div_residual_B!r}")
    print(f"tangency_residual={d.tangency_residual!r}")
    print(f"a_min={d.a_min!r}")
    print(f"collar_margin={d.collar_margin!r}")
    print(f"E={d.total_energy!r}")
    try:
        check_state(state)
    except FbmhdError as exc:
        print(f"invalid: {type(exc).__name__}: {exc}")
        return EXIT_CONSTRAINT
    print(f"E3={higher_energy(state).total!r}")
    print("valid")
    return EXIT_OK


def cmd_energy(args):
    try:
        _, state = _load(args.state)
    except (OSError, FormatError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    except FbmhdError as exc:
        _err(f"invalid: {type(exc).__name__}: {exc}")
        return EXIT_CONSTRAINT
    rep = higher_energy(state)
    print(f"E={diagnostics(state).total_energy!r}")
    for k, v in rep.components().items():
        print(f"{k}={v!r}")
    print(f"E3_total={rep.total!r}")
    return EXIT_OK


def cmd_distance(args):
    try:
        _, a = _load(args.state_a)
        _, b = _load(args.state_b)
    except (OSError, FormatError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    except FbmhdError as exc:
        _err(f"invalid: {type(exc).__name__}: {exc}")
        return EXIT_CONSTRAINT
    try:
        rep = distance(a, b)
    except CollarMismatch as exc:
        _err(f"incompatible: {exc}")
        return EXIT_CONSTRAINT
    for k in ("interior_plus", "interior_minus", "boundary_A", "boundary_Ah", "total"):
        print(f"{k}={getattr(rep, k)!r}")
    return EXIT_OK


def _config(args, required_state=True):
    cfgfile = RunConfigFile.read(args.config) if args.config else RunConfigFile({})
    state_path = getattr(args, "state", None) or cfgfile.get("state")
    if required_state and not state_path:
        raise FormatError("no state file given (config key 'state' or argument)")
    if state_path and args.config and not os.path.isabs(state_path) and not getattr(args, "state", None):
        state_path = str(Path(args.config).parent / state_path)
    return cfgfile, state_path


def _out_dir(args, cfgfile):
    out = args.out or cfgfile.get("out") or "."
    if args.config and not args.out and cfgfile.get("out") and not os.path.isabs(out):
        out = str(Path(args.config).parent / out)
    Path(out).mkdir(parents=True, exist_ok=True)
    return Path(out)


def cmd_step(args):
    try:
        cfgfile, path = _config(args)
        sf = StateFile.read(path)
        cfg = cfgfile.step_config(sf.n_r, sf.n_theta)
        out = _out_dir(args, cfgfile)
    except (OSError, FormatError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    try:
        state = sf.to_state(cfg=_state_cfg(cfg))
        new, rep = step(state, cfg)
    except FbmhdError as exc:
        _err(f"halt: {halt_reason(exc)}: {type(exc).__name__}: {exc}")
        return EXIT_HALT
    StateFile.from_state(new, cfg.epsilon).write(out / "step.fbmhd")
    for f in dataclasses.fields(rep):
        val = getattr(rep, f.name)
        if f.name in ("E3_before", "E3_after"):
            val = val.total if val is not None else None
        if f.name == "wall_time" and not args.timing:
            continue
        print(f"{f.name}={val!r}")
    return EXIT_OK


def _state_cfg(cfg):
    return StateConfig(cfg.n_r, cfg.n_theta, cfg.tol_elliptic, cfg.tol_div, cfg.tol_tangency,
                       cfg.c0_min)


def cmd_run(args):
    try:
        cfgfile, path = _config(args)
        sf = StateFile.read(path)
        cfg = cfgfile.step_config(sf.n_r, sf.n_theta)
        T = float(cfgfile.get("T", 1.0))
        if not T >= 0:
            raise FormatError("T must be nonnegative")
        out = _out_dir(args, cfgfile)
    except (OSError, FormatError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    csv_path = out / cfgfile.get("csv", "run.csv")
    svg = args.svg or bool(cfgfile.get("svg", False))
    try:
        state0 = sf.to_state(cfg=_state_cfg(cfg))
    except FbmhdError as exc:
        reason = halt_reason(exc)
        state0 = sf.to_state(cfg=_state_cfg(cfg), validate=False)
        d = diagnostics(state0)
        row = dict(t=0.0, E_total=d.total_energy, E3_total=float("nan"), a_min=d.a_min,
                   tangency_res=d.tangency_residual, div_res_v=d.div_residual_v,
                   div_res_B=d.div_residual_B, boundary_sup_disp=0.0)
        with open(csv_path, "w", newline="") as fh:
            write_run_csv(fh, [row], reason, [0.0] if args.timing else None)
        _err(f"halt: {reason}: {type(exc).__name__}: {exc}")
        return EXIT_HALT
    log = run(state0, T, cfg)
    rows = log.rows()
    reason = log.halt_reason or "none"
    walls = [0.0] + [r.wall_time for r in log.reports] if args.timing else None
    with open(csv_path, "w", newline="") as fh:
        write_run_csv(fh, rows, reason, walls)
    for i, (t, snap) in enumerate(log.snapshots[1:], 1):
        StateFile.from_state(snap, cfg.epsilon).write(out / f"snapshot_{i:05d}.fbmhd")
    StateFile.from_state(log.final_state, cfg.epsilon).write(out / "final.fbmhd")
    if svg:
        (out / "boundary.svg").write_text(boundary_svg([
            ("initial", log.initial_eta, "#1f77b4"), ("final", log.final_state.eta, "#d62728")]))
    if not log.completed:
        _err(f"halt: {log.halt_reason}: {log.halt_message}")
        return EXIT_HALT
    return EXIT_OK


def cmd_converge(args):
    try:
        cfgfile, path = _config(args)
        sf = StateFile.read(path)
        cfg = cfgfile.step_config(sf.n_r, sf.n_theta)
        T = float(cfgfile.get("T", 0.1))
        eps_list = cfgfile.get("eps_list") or [cfg.epsilon, cfg.epsilon / 2, cfg.epsilon / 4]
        out = _out_dir(args, cfgfile)
        state0 = sf.to_state(cfg=_state_cfg(cfg))
    except (OSError, FormatError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    except FbmhdError as exc:
        _err(f"halt: {halt_reason(exc)}: {exc}")
        return EXIT_HALT
    code = EXIT_OK
    rows = []
    try:
        rows = self_convergence(state0, T, eps_list, dataclasses.replace(cfg, energy_reports=False))
    except FbmhdError as exc:
        _err(f"halt: {exc}")
        code = EXIT_HALT
    with open(out / cfgfile.get("csv", "converge.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps_a", "eps_b", "distance", "order"])
        for r in rows:
            w.writerow([_fmt(r["eps_a"]), _fmt(r["eps_b"]), _fmt(r["distance"]), _fmt(r["order"])])
    return code


def cmd_dtn_test(args):
    n = args.n
    chart = DomainChart(build_surface(BoundarySeries.zeros(2), 0.5), n, n)
    ws = workspace(chart, args.tol)
    worst = 0.0
    for k in range(1, args.kmax + 1):
        g = np.cos(k * chart.theta)
        err = float(np.max(np.abs(dtn(ws, g).values - k * g))) / k
        worst = max(worst, err)
        print(f"k={k} err={err!r}")
    ok = worst <= args.threshold
    print("pass" if ok else "fail")
    return EXIT_OK if ok else EXIT_CONSTRAINT


def cmd_make_equilibrium(args):
    kind = args.kind
    n_r, n_theta = args.n_r, args.n_theta
    if kind == "rotor":
        ing = oracle.equilibrium_rotor(args.c, n_r, n_theta, args.collar_delta)
    elif kind == "rigid":
        ing = oracle.taylor_violating_rotation(args.c, n_r, n_theta, args.collar_delta)
    elif kind == "perturbed":
        ing = oracle.perturbed_rotor(args.amplitude, args.mode, n_r, n_theta, args.eta_amplitude,
                                     args.collar_delta, args.c)
    else:
        ing = oracle.irrotational_flow(args.amplitude, n_r, n_theta, args.collar_delta)
    state = assemble(ing.chart, ing.v, ing.B, StateConfig(n_r, n_theta), validate=False)
    try:
        StateFile.from_state(state, args.epsilon).write(args.output)
    except OSError as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    return EXIT_OK


def _threads():
    raw = os.environ.get("FBMHD_THREADS", "0")
    try:
        val = int(raw)
    except ValueError:
        raise FormatError(f"FBMHD_THREADS must be an integer, got {raw!r}") from None
    if val < 0:
        raise FormatError("FBMHD_THREADS must be >= 0")
    return val


def build_parser():
    p = argparse.ArgumentParser(prog="fbmhd", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--svg", action="store_true")
        sp.add_argument("--timing", action="store_true")

    sp = sub.add_parser("validate", help="check constraints and the Taylor sign")
    sp.add_argument("state")
    sp.set_defaults(fn=cmd_validate)
    sp = sub.add_parser("energy", help="print E and the E3 components")
    sp.add_argument("state")
    sp.set_defaults(fn=cmd_energy)
    sp = sub.add_parser("distance", help="distance functional between two states")
    sp.add_argument("state_a")
    sp.add_argument("state_b")
    sp.set_defaults(fn=cmd_distance)
    sp = sub.add_parser("step", help="take one step and write step.fbmhd")
    sp.add_argument("state", nargs="?")
    common(sp)
    sp.set_defaults(fn=cmd_step)
    sp = sub.add_parser("run", help="run to time T and write a CSV log")
    sp.add_argument("state", nargs="?")
    common(sp)
    sp.set_defaults(fn=cmd_run)
    sp = sub.add_parser("converge", help="self-convergence sweep over eps")
    sp.add_argument("state", nargs="?")
    common(sp)
    sp.set_defaults(fn=cmd_converge)
    sp = sub.add_parser("dtn-test", help="DtN spectrum check on the unit disk")
    sp.add_argument("--n", type=int, default=128)
    sp.add_argument("--kmax", type=int, default=8)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--threshold", type=float, default=1e-3)
    sp.set_defaults(fn=cmd_dtn_test)
    sp = sub.add_parser("make-equilibrium", help="write a reference state file")
    sp.add_argument("output")
    sp.add_argument("--kind", choices=("rotor", "rigid", "perturbed", "irrotational"), default="rotor")
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--amplitude", type=float, default=0.05)
    sp.add_argument("--mode", type=int, default=2)
    sp.add_argument("--eta-amplitude", type=float, default=0.0)
    sp.add_argument("--n-r", type=int, default=32)
    sp.add_argument("--n-theta", type=int, default=32)
    sp.add_argument("--collar-delta", type=float, default=0.5)
    sp.add_argument("--epsilon", type=float, default=1e-2)
    sp.set_defaults(fn=cmd_make_equilibrium)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _threads()
    except FormatError as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    try:
        return args.fn(args)
    except (OSError, FormatError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
