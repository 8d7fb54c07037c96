"""``vertexlab`` command line driver.

    vertexlab run FILE [flags]          run the jobs in FILE ("-" for stdin)
    vertexlab preset NAME [JOB ...]     run jobs (or the default jobs) on a preset
    vertexlab fmt FILE                  print FILE in canonical form

Exit status is 0 when every job passes, 1 when a verification fails or a job
raises, 2 for usage, syntax and semantic errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from gmpy2 import mpq

from .closure import state_field_roundtrip, verify_va_axioms
from .comonad import (
    DEFAULT_PROFILE,
    CQObject,
    Profile,
    comultiplication_structure_check,
    gru_check,
    locality_nonincrease,
    verify_comonad_laws,
)
from .distributions import CheckReport, ModeWindow, locality_order
from .dsl import (
    PRESET_JOBS,
    PRESETS,
    CloseJob,
    DSLError,
    DSLSemanticError,
    LocalityJob,
    Model,
    NthProductJob,
    Program,
    VerifyJob,
    build,
    format_job,
    format_program,
    parse,
)
from .graded_lie import format_scalar

SCHEMA_VERSION = 1
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class Settings:
    window: ModeWindow = DEFAULT_PROFILE.window
    precision: int = DEFAULT_PROFILE.precision
    depth: int = DEFAULT_PROFILE.depth
    cutoff: int = DEFAULT_PROFILE.cutoff
    seed: int = 0
    timing: bool = False

    def profile(self) -> Profile:
        return Profile(self.window, self.precision, self.depth, self.cutoff)


class Session:
    """Runs jobs in order against one algebra; ``close`` clauses change the
    depth and cutoff used by later jobs."""

    def __init__(self, model: Model, settings: Settings):
        self.model = model
        self.settings = settings
        self._objects: Dict[Profile, CQObject] = {}

    def object(self) -> CQObject:
        prof = self.settings.profile()
        X = self._objects.get(prof)
        if X is None:
            m = self.model
            X = CQObject(m.envelope, list(m.fields.values()), m.labels, prof, (m.presentation.name,))
            self._objects[prof] = X
        return X

    def field(self, name: str, job):
        try:
            return self.model.fields[name]
        except KeyError:
            raise DSLSemanticError(f"unknown field {name!r}", job.pos) from None

    def run(self, job) -> dict:
        out = {"job": format_job(job)}
        t0 = time.perf_counter()
        try:
            out.update(getattr(self, "_" + type(job).__name__)(job))
        except DSLSemanticError:
            raise
        except Exception as e:  # engine diagnostics are reported, not raised
            out.update({"status": "error", "error": f"{type(e).__name__}: {e}"})
        if self.settings.timing:
            out["seconds"] = round(time.perf_counter() - t0, 3)
        return out

    @staticmethod
    def _checks(reports: Sequence[CheckReport], **extra) -> dict:
        ok = all(r.passed for r in reports)
        return {"status": "pass" if ok else "fail", **extra, "checks": [r.to_json() for r in reports]}

    def _LocalityJob(self, job: LocalityJob) -> dict:
        a, b = self.field(job.a, job), self.field(job.b, job)
        win = ModeWindow(job.lo, job.hi)
        cert = locality_order(a, b, DEFAULT_PROFILE.nmax, win, job.precision)
        if cert is None:
            return {"status": "fail", "order": None, "nmax": DEFAULT_PROFILE.nmax}
        return {"status": "pass", "order": cert.order, "certificate": cert.to_json()}

    def _CloseJob(self, job: CloseJob) -> dict:
        self.settings.depth, self.settings.cutoff = job.depth, job.cutoff
        X = self.object()
        space = X.space
        fails = space.locality_failures
        return {"status": "pass" if not fails else "fail", "profile": X.profile.to_json(),
                "dimension": len(space.basis),
                "basis": [{"label": e.label, "weight": e.weight} for e in space.basis],
                "locality_failures": fails}

    def _VerifyJob(self, job: VerifyJob) -> dict:
        X = self.object()
        prof = X.profile
        if job.what == "va":
            V = X.structure
            return self._checks(verify_va_axioms(V, prof.window, prof.precision) + [state_field_roundtrip(V)],
                                profile=prof.to_json())
        if job.what == "comonad":
            laws = verify_comonad_laws(X)
            extra = [comultiplication_structure_check(X), locality_nonincrease(X)]
            return {**self._checks(laws, profile=prof.to_json()),
                    "supplementary": [r.to_json() for r in extra],
                    **({"status": "fail"} if not all(r.passed for r in extra) else {})}
        P = job.summands if job.summands is not None else 4
        return self._checks([gru_check(X, P)], profile=prof.to_json())

    def _NthProductJob(self, job: NthProductJob) -> dict:
        X = self.object()
        a, b = self.field(job.a, job), self.field(job.b, job)
        p = X.profile.precision
        x = X.ops.product(a, b, job.n).coeff(job.at, p)
        return {"status": "pass", "precision": p, "value": X.algebra.format(x),
                "terms": [[X.algebra.format_monomial(m), format_scalar(c)] for m, c in x.items()]}


def _json_default(o):
    if isinstance(o, mpq):
        return format_scalar(o)
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default, ensure_ascii=False)


def run_program(prog: Program, settings: Settings, preset: Optional[str] = None) -> dict:
    """Execute ``prog``; returns the report document."""
    decl = prog.algebra
    if decl is None:
        if preset is None:
            if prog.jobs:
                raise DSLSemanticError("jobs need an algebra block or --preset")
            return {"schema": SCHEMA_VERSION, "algebra": None, "status": "pass", "jobs": []}
        decl = parse(PRESETS[preset]).algebra
    elif preset is not None:
        raise DSLSemanticError("--preset given but the program declares an algebra", decl.pos)
    model = build(decl)
    session = Session(model, settings)
    jobs = [session.run(j) for j in prog.jobs]
    ok = all(j["status"] == "pass" for j in jobs)
    return {"schema": SCHEMA_VERSION, "algebra": model.presentation.name,
            "settings": {"window": settings.window.to_json(), "precision": settings.precision,
                         "seed": settings.seed},
            "status": "pass" if ok else "fail", "jobs": jobs}


def render_text(report: dict) -> str:
    lines = [f"algebra {report['algebra']}: {report['status']}"]
    for j in report["jobs"]:
        head = f"[{j['status']}] {j['job']}"
        if "value" in j:
            head += f"  =>  {j['value']}"
        if "order" in j:
            head += f"  =>  order {j['order']}"
        if "dimension" in j:
            head += f"  =>  {j['dimension']} fields"
        if "seconds" in j:
            head += f"  ({j['seconds']} s)"
        lines.append(head)
        if "error" in j:
            lines.append(f"    {j['error']}")
        for c in j.get("checks", []) + j.get("supplementary", []):
            lines.append(f"    [{c['status']}] {c['check']} (checked {c['checked']})")
            for f in c.get("failures", [])[:3]:
                lines.append(f"        {json.dumps(f, default=_json_default)}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument handling


def _window(text: str) -> ModeWindow:
    try:
        lo, hi = (int(s) for s in text.split(","))
        return ModeWindow(lo, hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI with LO <= HI, got {text!r}") from None


def _flags(parser: argparse.ArgumentParser, preset_flag: bool = True) -> None:
    parser.add_argument("--window", type=_window, help="mode window LO,HI (default -6,6)")
    parser.add_argument("--precision", type=int, help="ideal index p (default 6)")
    parser.add_argument("--depth", type=int, help="closure depth (default 2)")
    parser.add_argument("--cutoff", type=int, help="closure weight cutoff (default 4)")
    parser.add_argument("--json", action="store_true", help="emit the JSON report")
    parser.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
    parser.add_argument("--timing", action="store_true", help="include wall-clock timings")
    if preset_flag:
        parser.add_argument("--preset", choices=sorted(PRESETS))


def _settings(ns) -> Settings:
    s = Settings(seed=ns.seed, timing=ns.timing)
    for k in ("window", "precision", "depth", "cutoff"):
        v = getattr(ns, k)
        if v is not None:
            setattr(s, k, v)
    return s


def _join_window(argv: List[str]) -> List[str]:
    # "--window -6,6" would otherwise read "-6,6" as an option
    out, it = [], iter(argv)
    for a in it:
        if a == "--window":
            out.append("--window=" + next(it, ""))
        else:
            out.append(a)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _emit(report: dict, as_json: bool) -> int:
    print(dumps(report) if as_json else render_text(report))
    return EXIT_PASS if report["status"] == "pass" else EXIT_FAIL


def _error(e: Exception, as_json: bool, source: str = "") -> int:
    if as_json:
        info = e.to_json() if isinstance(e, DSLError) else {"error": type(e).__name__, "message": str(e)}
        print(dumps({"schema": SCHEMA_VERSION, "status": "error", **info}))
    else:
        print(f"{source}{': ' if source else ''}{e}", file=sys.stderr)
    return EXIT_USAGE


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = _join_window(list(sys.argv[1:] if argv is None else argv))
    usage = "vertexlab {run,preset,fmt} ..."
    if not argv or argv[0] in ("-h", "--help"):
        print(__doc__.strip())
        return EXIT_PASS if argv else EXIT_USAGE
    cmd, rest = argv[0], argv[1:]
    if cmd == "run":
        ap = _Parser(prog="vertexlab run")
        ap.add_argument("file", nargs="?", help="program file, '-' for stdin")
        ap.add_argument("-e", dest="source", help="program text instead of a file")
        _flags(ap)
        ns = ap.parse_intermixed_args(rest)
        if (ns.file is None) == (ns.source is None):
            ap.error("give exactly one of FILE or -e SOURCE")
        try:
            text = ns.source if ns.source is not None else _read(ns.file)
            report = run_program(parse(text), _settings(ns), ns.preset)
        except (DSLError, OSError) as e:
            return _error(e, ns.json, ns.file or "")
        return _emit(report, ns.json)
    if cmd == "preset":
        ap = _Parser(prog="vertexlab preset")
        ap.add_argument("name", choices=sorted(PRESETS))
        ap.add_argument("jobs", nargs="*", help="job clauses (default: the preset's standard jobs)")
        ap.add_argument("--source", action="store_true", help="print the preset program and exit")
        _flags(ap, preset_flag=False)
        ns = ap.parse_intermixed_args(rest)
        if ns.source:
            print(PRESETS[ns.name] + "\n" + PRESET_JOBS[ns.name], end="")
            return EXIT_PASS
        text = " ".join(ns.jobs).strip()
        if text and not text.endswith(";"):
            text += ";"
        try:
            prog = parse(text or PRESET_JOBS[ns.name])
            report = run_program(prog, _settings(ns), ns.name)
        except DSLError as e:
            return _error(e, ns.json)
        return _emit(report, ns.json)
    if cmd == "fmt":
        ap = _Parser(prog="vertexlab fmt")
        ap.add_argument("file")
        ap.add_argument("--json", action="store_true", help="print the syntax tree as JSON")
        ns = ap.parse_args(rest)
        try:
            prog = parse(_read(ns.file))
        except (DSLError, OSError) as e:
            return _error(e, ns.json, ns.file)
        print(dumps(prog.to_json()) if ns.json else format_program(prog), end="" if not ns.json else "\n")
        return EXIT_PASS
    print(f"usage: {usage}", file=sys.stderr)
    print(f"vertexlab: error: unknown command {cmd!r}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
