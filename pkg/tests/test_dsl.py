import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vertexlab.cli import main
from vertexlab.dsl import (
    PRESETS,
    AlgebraDecl,
    BracketDecl,
    CentralDecl,
    DSLError,
    DSLSemanticError,
    DSLSyntaxError,
    FieldDecl,
    GeneratorDecl,
    Program,
    TermDecl,
    build,
    fmt,
    format_program,
    parse,
)
from vertexlab.graded_lie import Poly, heisenberg, virasoro

GOLDEN = Path(__file__).parent / "golden"


def test_heisenberg_ast_matches_golden():
    prog = parse((GOLDEN / "heisenberg.vl").read_text())
    assert prog.to_json() == json.loads((GOLDEN / "heisenberg.ast.json").read_text())
    kinds = [d.to_json()["kind"] for d in prog.algebra.items]
    assert kinds == ["generator", "central", "bracket", "field"]
    assert len(prog.jobs) == 4


@pytest.mark.parametrize("name,pres", [("heisenberg", heisenberg), ("virasoro", virasoro)])
def test_presets_build_the_library_presentations(name, pres):
    model = build(parse(PRESETS[name]).algebra)
    assert model.presentation == pres()


def test_empty_program():
    prog = parse("  # nothing here\n")
    assert prog == Program(None, [])


def test_format_is_idempotent():
    for src in PRESETS.values():
        once = fmt(src)
        assert fmt(once) == once
        assert parse(once) == parse(src)


def test_truncated_bracket():
    with pytest.raises(DSLSyntaxError) as e:
        parse("algebra h { generator a[n] degree n; bracket [a[m], a[n]] =")
    assert e.value.found == "end of input"
    assert e.value.expected == ["'('", "'-'", "identifier", "integer"]


def test_positions_span_lines():
    src = "algebra h {\n  generator a[n] degree n;\n  central K degree 0\n}\n"
    with pytest.raises(DSLSyntaxError) as e:
        parse(src)
    assert e.value.pos == (4, 1)
    assert e.value.to_json()["line"] == 4


@pytest.mark.parametrize("src,needle", [
    ("algebra h { generator a[n] degree n; field b = modes c[n] weight 1; }", "unknown family"),
    ("algebra h { generator a[n] degree n; field a = modes a[n] weight 2; }", "degree mismatch"),
    ("algebra h { generator a[n] degree n; central a degree 0; }", "declared twice"),
    ("algebra h { generator a[n] degree n; central K degree 0; bracket [a[m], a[n]] = delta(m + n)*K; }", "antisymmetry"),
    ("algebra h { generator a[n] degree n; bracket [a[m], a[n]] = a[m + n + 1]; }", "grading"),
])
def test_semantic_errors(src, needle):
    with pytest.raises(DSLSemanticError) as e:
        build(parse(src).algebra)
    assert needle in e.value.message


names = st.sampled_from(["a", "b", "L", "J0", "x_1"])
small = st.integers(-3, 3)


@st.composite
def algebras(draw):
    gens = draw(st.lists(names, min_size=1, max_size=3, unique=True))
    items = [GeneratorDecl(g, "n", 1, draw(small), draw(st.none() | st.tuples(st.sampled_from([">=", "<="]), small)))
             for g in gens]
    if draw(st.booleans()):
        items.append(CentralDecl("Z", draw(small)))
    for g in gens:
        if draw(st.booleans()):
            coeff = Poly({(draw(st.integers(0, 3)), draw(st.integers(0, 2))): draw(st.integers(1, 5))})
            target = draw(st.sampled_from(gens))
            items.append(BracketDecl(g, "m", g, "n", [TermDecl(coeff, target, (1, 1, draw(small)), None)]))
        if draw(st.booleans()):
            items.append(FieldDecl(g + "f", g, "n", draw(small), draw(small)))
    return AlgebraDecl(draw(st.sampled_from(["h", "vir2"])), items)


@settings(max_examples=60, deadline=None)
@given(algebras())
def test_format_parse_roundtrip(decl):
    prog = Program(decl, [])
    assert parse(format_program(prog)) == prog


alphabet = st.sampled_from(list("algebra {}[](),;=+-*/^ \n#ab0123") + ["generator", "bracket", "delta", "field",
                                                                         "modes", "weight", "degree", "central"])


@settings(max_examples=200, deadline=None)
@given(st.lists(alphabet, max_size=40).map("".join))
def test_parser_is_total(text):
    try:
        parse(text)
    except DSLError as e:
        assert isinstance(e.to_json()["message"], str)


# -- command line


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as e:
        code = e.code
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_nthprod_values(capsys):
    code, out, _ = run(capsys, "preset", "heisenberg", "compute nthprod(alpha, alpha, 1) at -1")
    assert code == 0 and "=>  K" in out
    code, out, _ = run(capsys, "preset", "virasoro", "compute nthprod(L, L, 3) at -1", "--json")
    assert code == 0 and json.loads(out)["jobs"][0]["value"] == "C/2"


def test_cli_golden_report(capsys):
    code, out, _ = run(capsys, "preset", "virasoro", "compute nthprod(L, L, 3) at -1; compute nthprod(L, L, 1) at 0",
                       "--json", "--window", "-4,4", "--precision", "4")
    assert code == 0
    assert out == (GOLDEN / "virasoro_nthprod.json").read_text()


def test_cli_json_is_deterministic(capsys):
    args = ("preset", "heisenberg", "check locality(alpha, alpha) window -4,4 precision 4", "--json")
    assert run(capsys, *args) == run(capsys, *args)


def test_cli_usage_errors(capsys):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "preset", "nope")[0] == 2
    code, out, _ = run(capsys, "run", "-e", "algebra h { generator a[n] degree", "--json")
    assert code == 2 and json.loads(out)["error"] == "DSLSyntaxError"


def test_cli_failing_locality_exits_one(capsys):
    src = ("algebra t { generator a[n] degree n; central K degree 0; "
           "bracket [a[m], a[n]] = m^9*delta(m + n)*K; field a = modes a[n] weight 1; }\n"
           "check locality(a, a) window -6,6 precision 6;")
    code, out, _ = run(capsys, "run", "-e", src, "--json")
    assert code == 1 and json.loads(out)["status"] == "fail"


def test_cli_run_file_with_preset(capsys, tmp_path):
    f = tmp_path / "jobs.vl"
    f.write_text("compute nthprod(alpha, alpha, 0) at 0;\n")
    code, out, _ = run(capsys, "run", str(f), "--preset", "heisenberg", "--json")
    assert code == 0 and json.loads(out)["jobs"][0]["value"] == "0"


def test_cli_fmt(capsys, tmp_path):
    f = tmp_path / "h.vl"
    f.write_text("algebra heisenberg{generator alpha[n] degree n;central K degree 0;"
                 "bracket[alpha[m],alpha[n]]=m*delta(m+n)*K;field alpha=modes alpha[n] weight 1;}")
    code, out, _ = run(capsys, "fmt", str(f))
    assert code == 0 and out == PRESETS["heisenberg"]
