"""Taxonomy grammar: parsing, round-trips, descriptions, fuzzing."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terratex.taxonomy import (
    TaxonomyCode,
    TaxonomyParseError,
    describe,
    format_code,
    grammar_path,
    load_registry,
    parse,
    same_class,
)


# -- grammar-driven generator for property tests -----------------------

def _a_codes():
    fills = st.sampled_from(["", "u", "f"])
    return st.builds(
        lambda g, t, l, n, f, fill: f"A-G{g}-T{t}-L{l}-N{n}-F{f}{fill if f > 1 else ''}",
        st.integers(1, 2), st.integers(1, 2), st.integers(1, 3),
        st.integers(1, 3), st.integers(1, 3), fills,
    )


def _b_codes():
    return st.builds(lambda g, t: f"B1-G{g}-T{t}", st.integers(1, 2), st.integers(1, 2))


valid_codes = st.one_of(
    _a_codes(),
    _b_codes(),
    st.builds(lambda k: f"C{k}", st.integers(1, 3)),
    st.builds(lambda k: f"D{k}", st.integers(1, 4)),
)


# -- parse / format ----------------------------------------------------

def test_parse_full_bedrock_code():
    code = parse("A-G2-T1-L2-N1-F2f")
    assert code == TaxonomyCode(
        top="A", grain=2, tone=1, lamination=2, nodules=1, fracture=2, fill="f"
    )


def test_parse_sand():
    assert parse("C1") == TaxonomyCode(top="C", c_kind=1)


def test_parse_fill_after_f1_rejected():
    with pytest.raises(TaxonomyParseError, match="fill suffix"):
        parse("A-G2-T1-L2-N1-F1f")


@pytest.mark.parametrize(
    "text,needle",
    [
        ("A-G9-T1-L1-N1-F1", "G9"),
        ("A-G2-T1-L5-N1-F1", "L5"),
        ("A-G2-T1-N1-L1-F1", "N1"),
        ("B2-G2-T1", "B2"),
        ("C9", "C9"),
        ("D5", "D5"),
        ("E1", "E"),
        ("A-G2-T1-L2-N1-F2fx", "x"),
        ("A-G2", "-"),
    ],
)
def test_parse_errors_name_offending_segment(text, needle):
    with pytest.raises(TaxonomyParseError) as err:
        parse(text)
    assert needle in str(err.value)
    assert "offset" in str(err.value)


def test_parse_is_case_sensitive():
    with pytest.raises(TaxonomyParseError):
        parse("a-g2-t1-l2-n1-f2f")


def test_format_examples():
    assert format_code(parse("A-G1-T2-L3-N1-F1")) == "A-G1-T2-L3-N1-F1"
    assert format_code(parse("D4")) == "D4"
    assert format_code(parse("A-G2-T1-L1-N1-F2")) == "A-G2-T1-L1-N1-F2"


@settings(max_examples=300, deadline=None)
@given(valid_codes)
def test_round_trip_on_generated_codes(text):
    code = parse(text)
    assert format_code(code) == text
    assert parse(format_code(code)) == code


def test_all_registry_codes_parse_and_round_trip():
    registry = load_registry()
    assert len(registry) == 25
    for cls in registry.values():
        assert parse(format_code(cls.code)) == cls.code


# -- describe ----------------------------------------------------------

def test_describe_bedrock_phrases():
    text = describe(parse("A-G2-T1-L2-N1-F2f"))
    for needle in ("weakly laminated", "red mudstone", "calcium sulfate-filled"):
        assert needle in text


def test_describe_pebbles():
    assert "Mostly Rounded Pebbles" in describe(parse("C3"))


def test_describe_floatrock():
    text = describe(parse("B1-G2-T2"))
    assert "Dark-toned" in text and "floatrock" in text


def test_describe_deterministic():
    assert describe(parse("D2")) == describe(parse("D2"))


# -- class identity ----------------------------------------------------

def test_same_class_distinguishes_shared_codes():
    registry = load_registry()
    assert format_code(registry[2].code) == format_code(registry[3].code) == "A-G2-T1-L3-N1-F1"
    assert not same_class(registry[2], registry[3])
    assert same_class(registry[9], registry[9])
    assert not same_class(registry[19], registry[20])


def test_same_class_is_equivalence_relation():
    registry = load_registry()
    classes = list(registry.values())
    for a in classes[:6]:
        assert same_class(a, a)
        for b in classes[:6]:
            assert same_class(a, b) == same_class(b, a)
            for c in classes[:6]:
                if same_class(a, b) and same_class(b, c):
                    assert same_class(a, c)


# -- fuzzing -----------------------------------------------------------

def test_mutation_fuzz_never_crashes_and_never_aliases():
    import random

    rng = random.Random(1234)
    registry = load_registry()
    base_codes = [format_code(c.code) for c in registry.values()]
    alphabet = "ABCDEFGLNTuf0123456789-xyz \t"
    for _ in range(10_000):
        base = rng.choice(base_codes)
        pos = rng.randrange(len(base))
        repl = rng.choice(alphabet)
        while repl == base[pos]:
            repl = rng.choice(alphabet)
        mutated = base[:pos] + repl + base[pos + 1 :]
        try:
            got = parse(mutated)
        except TaxonomyParseError:
            continue
        assert got != parse(base), f"{mutated!r} aliased {base!r}"


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="ABCDGTLNF12349uf-", max_size=24))
def test_random_text_only_raises_parse_errors(text):
    try:
        parse(text)
    except TaxonomyParseError:
        pass


# -- grammar description file ------------------------------------------

def test_grammar_file_agrees_with_parser():
    """A validator driven by the shipped grammar JSON accepts exactly the
    strings the hand-written parser accepts (on a broad sample)."""
    grammar = json.loads(grammar_path().read_text())

    def grammar_accepts(text: str) -> bool:
        sep = grammar["separator"]
        for top, rule in grammar["tops"].items():
            if not text.startswith(top):
                continue
            rest = text[len(top):]
            if rule["form"] is not None:
                if not rest or rest[0] not in rule["form"]:
                    return False
                rest = rest[1:]
            for seg in rule["segments"]:
                if not rest.startswith(sep):
                    return False
                rest = rest[len(sep):]
                if len(rest) < 2 or rest[0] != seg["letter"] or rest[1] not in seg["values"]:
                    return False
                last_value = rest[1]
                rest = rest[2:]
            suffix = rule["suffix"]
            if suffix and rest and rest[0] in suffix["values"]:
                if last_value not in suffix["allowed_segment_values"]:
                    return False
                rest = rest[1:]
            return rest == ""
        return False

    import random

    rng = random.Random(7)
    samples = [format_code(c.code) for c in load_registry().values()]
    alphabet = "ABCDGTLNF1234uf-"
    for _ in range(4000):
        if rng.random() < 0.4:
            base = rng.choice(samples)
            pos = rng.randrange(len(base))
            text = base[:pos] + rng.choice(alphabet) + base[pos + 1 :]
        else:
            text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(1, 20)))
        try:
            parse(text)
            ours = True
        except TaxonomyParseError:
            ours = False
        assert ours == grammar_accepts(text), f"disagreement on {text!r}"
