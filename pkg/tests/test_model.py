import pytest

from conftest import CORPUS, DATA
from hjsingular.expr import ParseError, jet, momentum, parse
from hjsingular.model import (
    SpecError,
    load_hjl,
    make_spec,
    parse_hjl,
    phase_layout,
    to_hjl,
    validate_spec,
)

S2_TEXT = """
# singular example
system {
  lagrangian: (1/2)*(q1'' - q2')^2;   # keys in any order
  order: 2;
  coordinates: q1, q2;
}
"""


def test_parse_hjl_any_key_order_and_comments():
    spec = parse_hjl(S2_TEXT)
    assert spec.n == 2 and spec.k == 2 and spec.names == ("q1", "q2")
    assert spec.lagrangian == parse("(1/2)*(q1'' - q2')^2", spec.table)


def test_hjl_round_trip():
    spec = parse_hjl(S2_TEXT)
    again = parse_hjl(to_hjl(spec))
    assert again == spec


@pytest.mark.parametrize(
    "text, message",
    [
        ("coordinates: q; order: 1; lagrangian: q'^2;", "system"),
        ("system { coordinates: q; order: 1; }", "missing"),
        ("system { coordinates: q; order: x; lagrangian: q; }", "integer"),
        ("system { coordinates: q; order: 1; lagrangian: q; colour: red; }", "unknown key"),
        ("system { coordinates: q; order: 1; order: 1; lagrangian: q; }", "duplicate"),
        ("system { coordinates: t; order: 1; lagrangian: t'; }", "invalid coordinate"),
    ],
)
def test_malformed_files(text, message):
    with pytest.raises(SpecError, match=message):
        parse_hjl(text)


def test_level_overflow_is_a_parse_error():
    with pytest.raises(ParseError, match="derivative level exceeds order"):
        make_spec("q'''^2", ["q"], 2)


def test_validate_examples():
    assert validate_spec(make_spec("q''^2/2", ["q"], 2)).ok
    assert "degree > 2 in top derivative" in validate_spec(make_spec("q''^3", ["q"], 2)).violations
    assert "transcendental of top derivative" in validate_spec(make_spec("sin(q'')", ["q"], 2)).violations
    assert "top derivative in denominator" in validate_spec(make_spec("1/q''", ["q"], 2)).violations


def test_mixed_top_products_count_toward_degree():
    assert validate_spec(make_spec("q1''*q2''", ["q1", "q2"], 2)).ok
    assert not validate_spec(make_spec("q1''^2*q2''", ["q1", "q2"], 2)).ok


def test_time_dependence_allowed():
    assert validate_spec(make_spec("q'^2/2 - t*q", ["q"], 1)).ok


def test_corpus_is_valid_and_mutants_rejected():
    files = sorted(CORPUS.glob("*.hjl"))
    assert len(files) >= 8
    for f in files:
        assert validate_spec(load_hjl(f)).ok, f.name
    assert not validate_spec(load_hjl(DATA / "cubic.hjl")).ok
    for f in files:
        spec = load_hjl(f)
        text = to_hjl(spec)
        bumped = text.replace(f"order: {spec.k};", f"order: {spec.k - 1};") if spec.k > 1 else None
        if bumped:
            with pytest.raises(ParseError):
                parse_hjl(bumped)
        cubed = text.replace("lagrangian: ", "lagrangian: " + spec.names[0] + "'" * spec.k + "^3 + ")
        assert not validate_spec(parse_hjl(cubed)).ok


def test_phase_layout_examples():
    lay = phase_layout(make_spec("q''^2/2", ["q"], 2))
    assert lay.pairs == ((jet(1, 0), momentum(0, 1)), (jet(1, 1), momentum(1, 1)))
    assert lay.dimension == 4
    assert phase_layout(make_spec("q1'*q2", ["q1", "q2"], 1)).dimension == 4
    lay = phase_layout(make_spec("(q1''-q2')^2/2", ["q1", "q2"], 2))
    assert lay.dimension == 8
    assert lay.coordinates == [jet(1, 0), jet(2, 0), jet(1, 1), jet(2, 1)]
    assert lay.conjugate(momentum(1, 2)) == jet(2, 1)


@pytest.mark.parametrize("n, k", [(1, 1), (2, 3), (3, 2)])
def test_phase_dimension(n, k):
    names = [f"x{i}" for i in range(1, n + 1)]
    spec = make_spec(" + ".join(f"x{i}" + "'" * k + "^2" for i in range(1, n + 1)), names, k)
    assert phase_layout(spec).dimension == 2 * n * k
