"""Command line surface: ``jarnik [flags] <command> [name] key=value ...``.

Every run is determined by its :class:`RunConfig`.  The resolved parameter
block is hashed and the hash is written into every output file, next to a
manifest of checksums that ``verify-outputs`` re-checks.

Exit codes: 0 success, 1 internal error or failed verification, 2 invalid
configuration or failed precondition, 3 consistency guard refusal.
"""
from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import json
import math
import os
import sys
import traceback
from dataclasses import dataclass, field
from fractions import Fraction

from . import formulas
from .counting import (AuditGrid, AuditReport, calibrate_c, covering_count_audit,
                       default_ball, eta_for, global_counting_audit,
                       local_counting_audit, nondivergence_audit, ubiquity_audit,
                       ubiquity_ball_depth)
from .errors import ConsistencyError, PreconditionError
from .fourier import FourierProfile, dim_l1_estimate
from .fractal import CylinderWord, DigitSystem
from .geometry import (cover_factor, decay_check, five_r_cover, random_rect_family,
                       simplex_trials)
from .limsup import (box_dim_estimate, build_finite_stage, nu_restricted_audit,
                     product_ball_depth, product_construction_audit, product_etas)
from .plotting import render_png, series_path, write_dat

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_CONSISTENCY = 0, 1, 2, 3
THREADS_ENV = "JARNIK_THREADS"


class ConfigError(ValueError):
    """Malformed command line or configuration file (exit 2)."""


# ---------------------------------------------------------------------------
# parameter parsers


def _power_or_int(tok: str) -> int:
    tok = tok.strip()
    try:
        if "^" in tok:
            b, e = tok.split("^")
            return int(b) ** int(e)
        return int(tok)
    except ValueError:
        raise ConfigError(f"not an integer: {tok!r}") from None


def p_int(s: str) -> int:
    return _power_or_int(s)


def p_intlist(s: str) -> list:
    """Comma list of integers; ``a..b`` is an integer range and ``2^6..2^9``
    the powers between."""
    out = []
    for tok in s.split(","):
        tok = tok.strip()
        if ".." in tok:
            a, b = tok.split("..")
            if "^" in a and "^" in b:
                ba, ea = a.split("^")
                bb, eb = b.split("^")
                if ba != bb:
                    raise ConfigError(f"power range needs one base: {tok!r}")
                out.extend(int(ba) ** e for e in range(int(ea), int(eb) + 1))
            else:
                out.extend(range(_power_or_int(a), _power_or_int(b) + 1))
        elif tok:
            out.append(_power_or_int(tok))
    if not out:
        raise ConfigError("empty list")
    return out


def p_number(s: str) -> Fraction:
    """Integer, ``num/den`` or decimal, kept exact."""
    try:
        return Fraction(s.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {s!r}") from None


def p_float(s: str) -> float:
    return float(p_number(s))


def p_floatlist(s: str) -> list:
    return [p_float(t) for t in s.split(",") if t.strip()]


def p_rational(s: str) -> Fraction:
    """Exact rational given as an integer or ``num/den``; decimals are refused."""
    t = s.strip()
    if any(ch in t for ch in ".eE"):
        raise ConfigError(f"decimal input {s!r} refused: give an integer or num/den")
    return p_number(t)


def p_opt(parser):
    def inner(s: str):
        return None if s.strip() == "" else parser(s)
    return inner


def p_word(s: str):
    """``0,3`` for one axis, ``0:1,2:3`` for letters with one digit per axis."""
    s = s.strip()
    if s == "":
        return None
    letters = []
    for tok in s.split(","):
        if ":" in tok:
            letters.append(tuple(_power_or_int(a) for a in tok.split(":")))
        else:
            letters.append(_power_or_int(tok))
    return CylinderWord(tuple(letters))


def p_str(s: str) -> str:
    return s


def _digits(tok: str, base: int) -> tuple:
    if tok.strip() == "full":
        return tuple(range(base))
    return tuple(_power_or_int(a) for a in tok.split(",") if a.strip())


SYS_1D = {"base": (p_int, "5"), "digits": (p_str, "full")}
SYS_2D = {"base": (p_int, "5"), "digits": (p_str, "0,1,2,3"), "digits_y": (p_str, "full")}
SYS_ANY = {"base": (p_int, "5"), "digits": (p_str, "full"), "digits_y": (p_str, "")}

COMMANDS: dict = {
    "formulas": {},
    "audit-counting": {**SYS_1D, "Q": (p_intlist, "2^6,2^7,2^8"), "tau": (p_floatlist, "1.02"),
                       "theta": (p_rational, "0"), "alpha": (p_opt(p_float), ""),
                       "beta": (p_float, "1/5"), "max_balls": (p_int, "4"),
                       "q_min": (p_int, "1")},
    "audit-global": {**SYS_1D, "Q": (p_intlist, "2^6..2^10"), "tau": (p_floatlist, "1,1.05,1.2"),
                     "theta": (p_rational, "0")},
    "audit-cover": {**SYS_1D, "Q": (p_intlist, "2^6..2^10"), "tau": (p_floatlist, "1,1.05,1.2"),
                    "theta": (p_rational, "0")},
    "audit-nondiv": {**SYS_2D, "Q": (p_intlist, "2^8..2^10"), "tau": (p_float, "0.6"),
                     "word": (p_word, "")},
    "audit-ubiquity": {**SYS_2D, "Q": (p_intlist, "2^8..2^10"), "tau": (p_float, "0.6"),
                       "word": (p_word, ""), "c": (p_opt(p_rational), "")},
    "fourier-dim": {**SYS_ANY, "digits": (p_str, "0,1,2,3"), "M": (p_intlist, "5^5..5^9")},
    "simplex-check": {"d": (p_int, "2"), "Q": (p_int, "20"), "trials": (p_int, "1000")},
    "decay-check": {**SYS_ANY, "samples": (p_int, "500")},
    "cover-check": {"tau": (p_float, "0.6"), "u": (p_opt(p_floatlist), ""),
                    "families": (p_int, "200"), "size": (p_int, "40"),
                    "clusters": (p_int, "4")},
    "box-dim": {**SYS_ANY, "digits": (p_str, "0,1,2,3"), "tau": (p_float, "1.2"),
                "theta": (p_rational, "0"), "Q0": (p_int, "2^6"), "Q1": (p_int, "2^13"),
                "depths": (p_opt(p_intlist), "6..10")},
    "nu-audit": {**SYS_1D, "digits": (p_str, "0,1,2,3"), "Q": (p_intlist, "2^10,2^12,2^14"),
                 "tau": (p_float, "1.2"), "c": (p_rational, "1/4"), "s": (p_opt(p_float), ""),
                 "samples": (p_int, "10000"), "beta": (p_float, "0.3"), "word": (p_word, "0"),
                 "theta": (p_rational, "0")},
    "product-audit": {**SYS_2D, "Q": (p_intlist, "2^8..2^12"), "tau": (p_float, "0.6"),
                      "c": (p_opt(p_rational), ""), "samples": (p_int, "1000"),
                      "word": (p_word, "")},
    "verify-outputs": {"dir": (p_str, "")},
}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)  # raw strings, before defaults
    name: str = ""  # formula name for ``formulas``
    seed: int = 0
    out_dir: str = "out"
    max_depth: int | None = None
    tol: float = 1e-12
    figures: bool = False

    def resolved(self) -> dict:
        """Parameter strings with defaults filled in."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; known: "
                              + ", ".join(COMMANDS))
        spec = COMMANDS[self.command]
        if self.command == "formulas":
            return dict(sorted(self.params.items()))
        unknown = sorted(set(self.params) - set(spec))
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.command}: {', '.join(unknown)}")
        out = {k: default for k, (_, default) in spec.items()}
        out.update(self.params)
        return dict(sorted(out.items()))

    def parsed(self) -> dict:
        resolved = self.resolved()
        spec = COMMANDS[self.command]
        return {k: spec[k][0](v) for k, v in resolved.items()}

    def canonical(self) -> dict:
        return {"command": self.command, "name": self.name, "params": self.resolved(),
                "seed": self.seed, "max_depth": self.max_depth, "tol": repr(self.tol)}

    def config_hash(self) -> str:
        return canonical_hash(self.canonical())


def canonical_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _param_string(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (list, tuple)):
        return ",".join(_param_string(x) for x in v)
    return str(v)


def load_config_file(path: str) -> dict:
    """JSON object: global keys plus parameters, flat or under ``params``."""
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a JSON object")
    return obj


def build_config(argv=None) -> RunConfig:
    ap = argparse.ArgumentParser(prog="jarnik", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out-dir")
    ap.add_argument("--max-depth", type=int)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--config")
    ap.add_argument("--figures", action="store_true")
    ap.add_argument("command", nargs="?")
    ap.add_argument("args", nargs="*")
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise ConfigError("bad command line") from None
    file_obj = load_config_file(ns.config) if ns.config else {}
    glob_keys = {"command", "name", "seed", "out_dir", "max_depth", "tol", "figures", "params"}
    params = {k: _param_string(v) for k, v in (file_obj.get("params") or {}).items()}
    params.update({k: _param_string(v) for k, v in file_obj.items() if k not in glob_keys})
    rest = list(ns.args)
    command = ns.command
    if command and "=" in command:
        # only overrides on the line; the command comes from the file
        rest.insert(0, command)
        command = None
    command = command or file_obj.get("command")
    if not command:
        raise ConfigError("no command given")
    name = str(file_obj.get("name", ""))
    if command == "formulas" and rest and "=" not in rest[0]:
        name = rest.pop(0)
    for tok in rest:
        if "=" not in tok:
            raise ConfigError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        params[k.strip()] = v.strip()
    cfg = RunConfig(
        command=command, params=params, name=name,
        seed=ns.seed if ns.seed is not None else int(file_obj.get("seed", 0)),
        out_dir=ns.out_dir or str(file_obj.get("out_dir", "out")),
        max_depth=ns.max_depth if ns.max_depth is not None else file_obj.get("max_depth"),
        tol=ns.tol if ns.tol is not None else float(file_obj.get("tol", 1e-12)),
        figures=ns.figures or bool(file_obj.get("figures", False)))
    if cfg.tol <= 0:
        raise ConfigError("tol must be positive")
    if cfg.command == "formulas" and not cfg.name:
        raise ConfigError("formulas needs a formula name")
    return cfg


# ---------------------------------------------------------------------------
# output writing


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _jsonable(x.item())
    return x


def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Outputs:
    """Collects the files of one run; writing happens in call order."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.hash = cfg.config_hash()
        self.stem = cfg.command if cfg.command != "formulas" else f"formulas-{cfg.name}"
        self.files: list = []
        self.plots: dict = {}
        os.makedirs(cfg.out_dir, exist_ok=True)

    def _path(self, suffix: str) -> str:
        return os.path.join(self.cfg.out_dir, self.stem + suffix)

    def csv(self, header: list, rows: list, suffix: str = ".csv") -> str:
        path = self._path(suffix)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(header) + ["config_hash"])
            for row in rows:
                w.writerow([_cell(v) for v in row] + [self.hash])
        self.files.append(path)
        return path

    def json(self, result: dict) -> str:
        path = self._path(".json")
        obj = {"config": self.cfg.canonical(), "config_hash": self.hash,
               "result": _jsonable(result)}
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
            fh.write("\n")
        self.files.append(path)
        return path

    def plotdata(self, plots: dict):
        for name, (series, header) in sorted(plots.items()):
            path = series_path(self.cfg.out_dir, self.stem, name)
            write_dat(path, series, header, self.hash)
            self.files.append(path)
        self.plots.update(plots)

    def finish(self) -> str:
        if self.cfg.figures and self.plots:
            path = self._path(".png")
            render_png(path, self.plots, self.stem)
            self.files.append(path)
        manifest = {"config": self.cfg.canonical(), "config_hash": self.hash,
                    "files": {os.path.basename(p): sha256_file(p) for p in self.files}}
        path = self._path(".manifest.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path


def emit_plotdata(report) -> dict:
    """Series ``name -> (list of (x, y), header)`` for a report.

    FourierProfile gives ``(log M, log S)``; AuditReport gives
    ``(log Q, log ratio)`` per ball and tau; a mapping of series passes
    through.  An empty report gives one header-only series.
    """
    if isinstance(report, FourierProfile):
        pts = [(math.log(M), math.log(S)) for M, S in report.entries if S > 0]
        return {"profile": (pts, "log M  log S(M)")}
    if isinstance(report, AuditReport):
        out: dict = {}
        for c in report.cells:
            r = float(c.ratio)
            if r <= 0:
                continue
            key = f"{c.ball_id}_tau{c.tau}"
            out.setdefault(key, ([], f"log Q  log ratio  ball {c.ball_id} tau {c.tau}"))
            out[key][0].append((math.log(c.Q), math.log(r)))
        if not out:
            return {"empty": ([], "log Q  log ratio (no cells)")}
        return out
    if isinstance(report, dict):
        return report if report else {"empty": ([], "no data")}
    raise TypeError(f"no plot data for {type(report).__name__}")


# ---------------------------------------------------------------------------
# command handlers


def _system(P: dict) -> DigitSystem:
    base = P["base"]
    try:
        axes = [_digits(P["digits"], base)]
        if P.get("digits_y", "").strip():
            axes.append(_digits(P["digits_y"], base))
        return DigitSystem(base, tuple(axes))
    except ValueError as exc:
        raise ConfigError(f"invalid digit system: {exc}") from None


def _formula_value(k: str, v: str):
    if k == "kind":
        return v
    if k == "d":
        return p_int(v)
    num = p_number(v)
    if "." in v or "e" in v.lower():
        return float(num)
    return num


def cmd_formulas(cfg, P, out):
    inputs = {k: _formula_value(k, v) for k, v in cfg.resolved().items()}
    res = formulas.evaluate(cfg.name, inputs)
    out.json(res)
    if "error" in res:
        raise PreconditionError(res["error"], res["preconditions"])
    return res


def cmd_audit_counting(cfg, P, out):
    sys_ = _system(P)
    grid = AuditGrid(tuple(P["Q"]), tuple(P["tau"]), P["theta"], P["alpha"], P["beta"],
                     P["max_balls"], cfg.seed, P["q_min"])
    rep = local_counting_audit(sys_, grid, cfg.max_depth)
    rows = [(c.Q, c.tau, str(c.eta), c.ball_id, float(c.ratio), float(c.err),
             "|".join(c.flags)) for c in rep.cells]
    out.csv(["Q", "tau", "eta", "ball", "ratio", "err", "flags"], rows)
    res = {"summary": rep.summary, "by_Q": rep.by_Q(), "spread_trend": rep.spread_trend(),
           "metadata": rep.metadata}
    out.json(res)
    out.plotdata(emit_plotdata(rep))
    return {"rows": len(rows), "summary": rep.summary}


def _ratio_series(rows, key_idx, x_idx, y_idx, label):
    plots: dict = {}
    for row in rows:
        y = row[y_idx]
        if y > 0:
            name = f"{label}{row[key_idx]}"
            plots.setdefault(name, ([], f"log Q  log ratio  {label} {row[key_idx]}"))
            plots[name][0].append((math.log(row[x_idx]), math.log(y)))
    return plots


def cmd_audit_global(cfg, P, out):
    sys_ = _system(P)
    rows = []
    for Q in P["Q"]:
        for tau in P["tau"]:
            eta = eta_for(Q, tau)
            r = global_counting_audit(sys_, Q, eta, P["theta"], cfg.max_depth)
            rows.append((Q, tau, str(eta), r.ratio, r.err))
    out.csv(["Q", "tau", "eta", "ratio", "err"], rows)
    ratios = [r[3] for r in rows]
    res = {"rows": len(rows), "min": min(ratios), "max": max(ratios)}
    out.json({**res, "table": rows})
    out.plotdata(_ratio_series(rows, 1, 0, 3, "tau"))
    return res


def cmd_audit_cover(cfg, P, out):
    sys_ = _system(P)
    rows = []
    for Q in P["Q"]:
        for tau in P["tau"]:
            eta = eta_for(Q, tau)
            c = covering_count_audit(sys_, Q, eta, P["theta"], cfg.max_depth)
            rows.append((Q, tau, str(eta), c.N, c.N_lo, c.depth, c.ratio, c.global_ratio,
                         c.inflation_bound))
    out.csv(["Q", "tau", "eta", "N", "N_lo", "depth", "ratio", "global_ratio",
             "inflation_bound"], rows)
    ratios = [r[6] for r in rows]
    res = {"rows": len(rows), "min": min(ratios), "max": max(ratios)}
    out.json({**res, "table": rows})
    out.plotdata(_ratio_series(rows, 1, 0, 6, "tau"))
    return res


def _word_text(word: CylinderWord) -> str:
    return ",".join(":".join(map(str, a)) if isinstance(a, tuple) else str(a)
                    for a in word.word)


def _ball_for(sys_, P, Q, seed, depth_fn):
    return P["word"] if P["word"] is not None else default_ball(sys_, depth_fn(Q), seed)


def cmd_audit_nondiv(cfg, P, out):
    sys_ = _system(P)
    rows = []
    for Q in P["Q"]:
        w = _ball_for(sys_, P, Q, cfg.seed, lambda q: ubiquity_ball_depth(sys_.base, q))
        r = nondivergence_audit(sys_, w, Q, product_etas(Q, P["tau"]), cfg.max_depth)
        rows.append((Q, _word_text(w), r.ratio, r.err))
    out.csv(["Q", "word", "ratio", "err"], rows)
    ratios = [r[2] for r in rows]
    res = {"rows": len(rows), "min": min(ratios), "max": max(ratios),
           "spread": max(ratios) / min(ratios) if min(ratios) > 0 else None}
    out.json({**res, "table": rows})
    out.plotdata({"ratio": ([(math.log(r[0]), r[2]) for r in rows], "log Q  ratio")})
    return res


def cmd_audit_ubiquity(cfg, P, out):
    sys_ = _system(P)
    rows, tables = [], {}
    for Q in P["Q"]:
        w = _ball_for(sys_, P, Q, cfg.seed, lambda q: ubiquity_ball_depth(sys_.base, q))
        etas = product_etas(Q, P["tau"])
        c = P["c"]
        if c is None:
            c, table = calibrate_c(sys_, w, Q, etas, cfg.max_depth)
            tables[Q] = [(str(a), str(b)) for a, b in table]
            if c is None:
                raise PreconditionError(f"no calibration candidate qualifies at Q={Q}")
        r = ubiquity_audit(sys_, w, Q, etas, c, cfg.max_depth)
        rows.append((Q, _word_text(w), str(c), r.ratio, r.err))
    out.csv(["Q", "word", "c", "ratio", "err"], rows)
    ratios = [r[3] for r in rows]
    res = {"rows": len(rows), "min": min(ratios), "max": max(ratios)}
    out.json({**res, "table": rows, "calibration": tables})
    out.plotdata({"ratio": ([(math.log(r[0]), r[3]) for r in rows], "log Q  ratio")})
    return res


def cmd_fourier_dim(cfg, P, out):
    sys_ = _system(P)
    prof = dim_l1_estimate(sys_, P["M"], cfg.tol)
    out.csv(["M", "S"], prof.entries)
    res = {"estimate": prof.estimate, "spread": prof.spread, "slopes": prof.slopes,
           "degenerate": prof.degenerate, "truncation_tol": prof.truncation_tol,
           "notes": prof.notes}
    out.json({**res, "entries": prof.entries})
    out.plotdata(emit_plotdata(prof))
    return res


def cmd_simplex_check(cfg, P, out):
    d, Q = P["d"], P["Q"]
    if d not in (1, 2):
        raise PreconditionError("simplex trials run for d in {1, 2}")
    st = simplex_trials(d, Q, P["trials"], cfg.seed)
    out.csv(["trial", "n_points", "coplanar"], st.rows)
    hist: dict = {}
    for _, n, _ in st.rows:
        hist[n] = hist.get(n, 0) + 1
    res = {"d": d, "Q": Q, "trials": st.trials, "violations": st.violations,
           "multi_point": st.multi_point, "max_points": st.max_points,
           "witnesses": [[[str(a), str(b)] for a, b in box] for box, _ in st.witnesses]}
    out.json({**res, "histogram": sorted(hist.items())})
    out.plotdata({"points": (sorted(hist.items()), "points in box  boxes")})
    return res


def cmd_decay_check(cfg, P, out):
    sys_ = _system(P)
    rep = decay_check(sys_, P["samples"], cfg.seed)
    rows = [(s.r, s.eps, s.kind, s.ratio, s.err) for s in rep.samples]
    out.csv(["r", "eps", "kind", "ratio", "err"], rows)
    res = {"C_emp": rep.C_emp, "exponent": rep.exponent, "slope": rep.slope,
           "samples": len(rows)}
    out.json({**res, "bins": rep.bins})
    pts = sorted((math.log10(s.eps / s.r), s.ratio) for s in rep.samples)
    out.plotdata({"ratio": (pts, "log10(eps/r)  scaled ratio")})
    return res


def cmd_cover_check(cfg, P, out):
    import numpy as np

    tau = P["tau"]
    u = tuple(P["u"]) if P["u"] else (1 + tau, 2 - tau)
    rng = np.random.default_rng([cfg.seed, 5])
    rows = []
    for f in range(P["families"]):
        rects = random_rect_family(P["size"], u, rng, centers=P["clusters"] if f % 2 else 0)
        res = five_r_cover(rects, u)
        rows.append((f, len(rects), len(res.selected), res.disjoint, res.covered))
    out.csv(["family", "n", "selected", "disjoint", "covered"], rows)
    res = {"families": len(rows), "factor": cover_factor(u), "u": list(u),
           "all_disjoint": all(r[3] for r in rows), "all_covered": all(r[4] for r in rows)}
    out.json(res)
    out.plotdata({"selected": ([(r[0], r[2]) for r in rows], "family  selected")})
    return res


def cmd_box_dim(cfg, P, out):
    sys_ = _system(P)
    stage = build_finite_stage(sys_, P["tau"], P["theta"], P["Q0"], P["Q1"],
                               materialize=sys_.dim > 1)
    bd = box_dim_estimate(sys_, stage, P["depths"])
    rows = [(n, *bd.counts[n]) for n in bd.depths]
    out.csv(["n", "N_lo", "N_hi"], rows)
    delta = sys_.hausdorff_dim()
    d = sys_.dim
    res = {"slope": bd.slope, "residual": bd.residual, "depths": list(bd.depths),
           "target": delta + (d + 1) / (1 + P["tau"]) - d,
           "baseline": delta / (1 + P["tau"]), "notes": bd.notes}
    out.json(res)
    out.plotdata({"counts": ([(n, math.log(hi, sys_.base)) for n, _, hi in rows],
                             "n  log_b N_n")})
    return res


def cmd_nu_audit(cfg, P, out):
    sys_ = _system(P)
    tau = P["tau"]
    delta = sys_.hausdorff_dim()
    s = P["s"] if P["s"] is not None else delta + 2 / (1 + tau) - 1 - 0.02
    rows, per_q = [], {}
    plots: dict = {}
    for Q in P["Q"]:
        a = nu_restricted_audit(sys_, P["word"], Q, tau, P["c"], s, P["samples"], cfg.seed,
                                P["beta"], P["theta"], cfg.max_depth)
        per_q[Q] = {"mu_B": a.mu_B, "mu_F": a.mu_F, "mu_F_err": a.mu_F_err,
                    "F_ratio": a.F_ratio, "nu_total": a.nu_total}
        for name, st in a.cases.items():
            rows.append((Q, name, st.r_lo, st.r_hi, st.n, st.sup_ratio, st.median_ratio))
            plots.setdefault(f"case{name}", ([], f"log2 Q  sup ratio  case {name}"))
            plots[f"case{name}"][0].append((math.log2(Q), st.sup_ratio))
    out.csv(["Q", "case", "r_lo", "r_hi", "n", "sup_ratio", "median_ratio"], rows)
    growth = {}
    for name, (pts, _) in plots.items():
        ys = [y for _, y in pts]
        growth[name[4:]] = [b / a for a, b in zip(ys, ys[1:]) if a > 0]
    F = [v["F_ratio"] for v in per_q.values()]
    res = {"s": s, "per_Q": per_q, "growth": growth,
           "F_window": max(F) / min(F) if min(F) > 0 else None}
    out.json({**res, "cases": rows})
    out.plotdata(plots)
    return {"s": s, "F_window": res["F_window"], "growth": growth}


def cmd_product_audit(cfg, P, out):
    sys_ = _system(P)
    tau = P["tau"]
    rows, cases = [], []
    for Q in P["Q"]:
        w = _ball_for(sys_, P, Q, cfg.seed, lambda q: product_ball_depth(sys_.base, q, tau))
        a = product_construction_audit(sys_, w, Q, tau, P["c"], P["samples"], cfg.seed,
                                       depth=cfg.max_depth)
        rows.append((Q, w.depth, str(a.c), a.n_rational, a.n_selected, a.count_ratio,
                     a.factor, a.disjoint, a.covered, a.s))
        for name, st in a.cases.items():
            cases.append((Q, name, st.r_lo, st.r_hi, st.n, st.sup_ratio, st.median_ratio))
    out.csv(["Q", "depth", "c", "n_rational", "n_selected", "count_ratio", "factor",
             "disjoint", "covered", "s"], rows)
    ratios = [r[5] for r in rows]
    res = {"count_window": max(ratios) / min(ratios) if min(ratios) > 0 else None,
           "all_disjoint": all(r[7] for r in rows), "all_covered": all(r[8] for r in rows)}
    out.json({**res, "table": rows, "cases": cases})
    out.plotdata({"count_ratio": ([(math.log(r[0]), r[5]) for r in rows],
                                  "log Q  count ratio")})
    return res


def verify_dir(path: str) -> dict:
    """Re-check every manifest in ``path``: checksums and embedded config hashes."""
    report = {}
    manifests = sorted(glob.glob(os.path.join(path, "*.manifest.json")))
    for mpath in manifests:
        problems = []
        with open(mpath, encoding="utf-8") as fh:
            man = json.load(fh)
        h = man.get("config_hash")
        if canonical_hash(man.get("config")) != h:
            problems.append("config hash does not match the recorded config")
        for fname, digest in sorted(man.get("files", {}).items()):
            fpath = os.path.join(path, fname)
            if not os.path.exists(fpath):
                problems.append(f"{fname}: missing")
                continue
            if sha256_file(fpath) != digest:
                problems.append(f"{fname}: checksum mismatch")
            if not _embeds_hash(fpath, h):
                problems.append(f"{fname}: config hash not embedded")
        report[os.path.basename(mpath)] = problems
    return report


def _embeds_hash(fpath: str, h: str) -> bool:
    if fpath.endswith(".png"):
        return True
    with open(fpath, encoding="utf-8") as fh:
        text = fh.read()
    if fpath.endswith(".csv"):
        rows = list(csv.reader(text.splitlines()))
        return bool(rows) and rows[0][-1] == "config_hash" and all(r[-1] == h for r in rows[1:])
    if fpath.endswith(".json"):
        return json.loads(text).get("config_hash") == h
    return text.startswith(f"# config_hash: {h}\n")


def cmd_verify_outputs(cfg, P, out):
    raise AssertionError("handled in run()")


HANDLERS = {
    "formulas": cmd_formulas,
    "audit-counting": cmd_audit_counting,
    "audit-global": cmd_audit_global,
    "audit-cover": cmd_audit_cover,
    "audit-nondiv": cmd_audit_nondiv,
    "audit-ubiquity": cmd_audit_ubiquity,
    "fourier-dim": cmd_fourier_dim,
    "simplex-check": cmd_simplex_check,
    "decay-check": cmd_decay_check,
    "cover-check": cmd_cover_check,
    "box-dim": cmd_box_dim,
    "nu-audit": cmd_nu_audit,
    "product-audit": cmd_product_audit,
    "verify-outputs": cmd_verify_outputs,
}


def _apply_threads():
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute one configured command; returns the exit code."""
    stdout = stdout or sys.stdout
    _apply_threads()
    P = cfg.parsed() if cfg.command != "formulas" else {}
    if cfg.command == "verify-outputs":
        report = verify_dir(P["dir"] or cfg.out_dir)
        ok = bool(report) and not any(report.values())
        print(json.dumps({"ok": ok, "manifests": report}, indent=1, sort_keys=True),
              file=stdout)
        return EXIT_OK if ok else EXIT_INTERNAL
    out = Outputs(cfg)
    try:
        summary = HANDLERS[cfg.command](cfg, P, out)
    finally:
        if out.files:
            out.finish()
    print(json.dumps(_jsonable(summary), indent=1, sort_keys=True), file=stdout)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = build_config(argv)
        return run(cfg)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConsistencyError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception:  # noqa: BLE001 - any other failure is internal
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
