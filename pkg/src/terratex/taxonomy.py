"""Hierarchical terrain-class codes: parsing, formatting, description.

A code starts with a top-level category letter and, depending on the
category, carries a fixed order of attribute segments:

    A-G(1|2)-T(1|2)-L(1|2|3)-N(1|2|3)-F(1|2|3)(u|f)?   consolidated bedrock
    B1-G(1|2)-T(1|2)                                   floatrock
    C(1|2|3)                                           unconsolidated material
    D(1|2|3|4)                                         non-rocky / other

The fill suffix (u unfilled, f filled) is only legal after F2 or F3 and is
optional. Parsing is case-sensitive. Distinct expert classes may share one
code, so class identity lives in the class id, never in the code text.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

__all__ = [
    "TaxonomyCode",
    "TerrainClass",
    "TaxonomyParseError",
    "parse",
    "format_code",
    "describe",
    "same_class",
    "load_registry",
    "registry_path",
    "grammar_path",
]


class TaxonomyParseError(ValueError):
    """Raised for malformed codes; carries the offending segment and offset."""

    def __init__(self, message: str, segment: str, offset: int):
        super().__init__(f'{message}: segment "{segment}" at byte offset {offset}')
        self.segment = segment
        self.offset = offset


@dataclass(frozen=True)
class TaxonomyCode:
    top: str
    b_form: int | None = None
    grain: int | None = None
    tone: int | None = None
    lamination: int | None = None
    nodules: int | None = None
    fracture: int | None = None
    fill: str | None = None
    c_kind: int | None = None
    d_kind: int | None = None


@dataclass(frozen=True)
class TerrainClass:
    class_id: int
    code: TaxonomyCode
    description: str


_A_SEGMENTS = (
    ("G", "grain", (1, 2)),
    ("T", "tone", (1, 2)),
    ("L", "lamination", (1, 2, 3)),
    ("N", "nodules", (1, 2, 3)),
    ("F", "fracture", (1, 2, 3)),
)
_B_SEGMENTS = (("G", "grain", (1, 2)), ("T", "tone", (1, 2)))


class _Cursor:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def rest(self, n: int = 3) -> str:
        return self.text[self.pos : self.pos + n] or "<end>"

    def expect_sep(self, next_name: str) -> None:
        if self.peek() != "-":
            raise TaxonomyParseError(
                f'expected "-" before the {next_name} segment', self.rest(1), self.pos
            )
        self.pos += 1

    def read_segment(self, letter: str, name: str, allowed: tuple[int, ...]) -> int:
        start = self.pos
        if self.peek() != letter:
            raise TaxonomyParseError(f"expected the {name} segment ({letter}...)", self.rest(2), start)
        self.pos += 1
        digit = self.peek()
        if not digit.isdigit() or int(digit) not in allowed:
            choices = "|".join(str(v) for v in allowed)
            raise TaxonomyParseError(
                f"{name} value must be one of {letter}({choices})", letter + (digit or "<end>"), start
            )
        self.pos += 1
        return int(digit)


def parse(code_text: str) -> TaxonomyCode:
    """Parse a terrain-class code; errors name the offending segment."""
    cur = _Cursor(code_text)
    top = cur.peek()
    if top == "A":
        cur.pos += 1
        values: dict[str, int] = {}
        for letter, name, allowed in _A_SEGMENTS:
            cur.expect_sep(name)
            values[name] = cur.read_segment(letter, name, allowed)
        fill = None
        if cur.peek() in ("u", "f"):
            fill_offset = cur.pos - 2
            fill = cur.peek()
            if values["fracture"] == 1:
                raise TaxonomyParseError(
                    "fill suffix is not allowed after F1", f"F1{fill}", fill_offset
                )
            cur.pos += 1
        code = TaxonomyCode(top="A", fill=fill, **values)
    elif top == "B":
        cur.pos += 1
        if cur.peek() != "1":
            raise TaxonomyParseError("floatrock form must be B1", "B" + (cur.peek() or "<end>"), 0)
        cur.pos += 1
        values = {}
        for letter, name, allowed in _B_SEGMENTS:
            cur.expect_sep(name)
            values[name] = cur.read_segment(letter, name, allowed)
        code = TaxonomyCode(top="B", b_form=1, **values)
    elif top == "C":
        cur.pos += 1
        digit = cur.peek()
        if digit not in ("1", "2", "3"):
            raise TaxonomyParseError("unconsolidated kind must be C(1|2|3)", "C" + (digit or "<end>"), 0)
        cur.pos += 1
        code = TaxonomyCode(top="C", c_kind=int(digit))
    elif top == "D":
        cur.pos += 1
        digit = cur.peek()
        if digit not in ("1", "2", "3", "4"):
            raise TaxonomyParseError("non-rocky kind must be D(1|2|3|4)", "D" + (digit or "<end>"), 0)
        cur.pos += 1
        code = TaxonomyCode(top="D", d_kind=int(digit))
    else:
        raise TaxonomyParseError("top-level category must be A, B, C, or D", cur.rest(1), 0)
    if cur.pos != len(code_text):
        raise TaxonomyParseError("unexpected trailing text", cur.rest(), cur.pos)
    return code


def format_code(code: TaxonomyCode) -> str:
    """Canonical string form; inverse of parse on every valid code."""
    if code.top == "A":
        fill = code.fill or ""
        return (
            f"A-G{code.grain}-T{code.tone}-L{code.lamination}"
            f"-N{code.nodules}-F{code.fracture}{fill}"
        )
    if code.top == "B":
        return f"B{code.b_form}-G{code.grain}-T{code.tone}"
    if code.top == "C":
        return f"C{code.c_kind}"
    if code.top == "D":
        return f"D{code.d_kind}"
    raise ValueError(f"invalid top-level category {code.top!r}")


_ROCK_BY_GRAIN = {1: "sandstone (grains visible)", 2: "mudstone"}
_TONE_A = {1: "red", 2: "gray"}
_LAMINATION = {1: "apparently unlaminated", 2: "weakly laminated", 3: "strongly laminated"}
_NODULES = {1: "non-nodular", 2: "commonly raised-nodular", 3: "pervasively nodular"}
_FRACTURE = {1: "unfractured", 2: "lightly fractured", 3: "pervasively fractured"}
_FILL = {"f": "calcium sulfate-filled veins", "u": "unfilled"}
_TONE_B = {1: "Red/Light-toned", 2: "Dark-toned"}
_GRAIN_B = {1: "grains visible", 2: "no visible grain"}
_C_KIND = {
    1: "Sand",
    2: "Mostly Sand (>50%), Some Rounded Pebbles (<50%)",
    3: "Some Sand (<50%), Mostly Rounded Pebbles (>50%)",
}
_D_KIND = {1: "Rover Sand Tracks", 2: "Rover Parts", 3: "Out of Focus", 4: "Heavily Shadowed Areas"}


def describe(code: TaxonomyCode) -> str:
    """Deterministic human-readable expansion from per-attribute phrase tables."""
    if code.top == "A":
        parts = [
            f"{_LAMINATION[code.lamination]} {_TONE_A[code.tone]} {_ROCK_BY_GRAIN[code.grain]} bedrock",
            _NODULES[code.nodules],
            _FRACTURE[code.fracture],
        ]
        if code.fill:
            parts.append(_FILL[code.fill])
        return ", ".join(parts)
    if code.top == "B":
        return f"{_TONE_B[code.tone]}, massive floatrock ({_GRAIN_B[code.grain]})"
    if code.top == "C":
        return f"Unconsolidated material: {_C_KIND[code.c_kind]}"
    if code.top == "D":
        return f"Non-rocky: {_D_KIND[code.d_kind]}"
    raise ValueError(f"invalid top-level category {code.top!r}")


def same_class(a: TerrainClass, b: TerrainClass) -> bool:
    """Class identity is the class id; distinct classes may share a code."""
    return a.class_id == b.class_id


def registry_path() -> Path:
    return Path(resources.files("terratex").joinpath("data/classes.tsv"))


def grammar_path() -> Path:
    return Path(resources.files("terratex").joinpath("data/taxonomy_grammar.json"))


def load_registry(path=None) -> dict[int, TerrainClass]:
    """Load class_id -> TerrainClass from a tab-separated registry file."""
    path = Path(path) if path is not None else registry_path()
    registry: dict[int, TerrainClass] = {}
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"{path}:{ln}: expected class_id, code, description")
        class_id = int(fields[0])
        if class_id in registry:
            raise ValueError(f"{path}:{ln}: duplicate class_id {class_id}")
        registry[class_id] = TerrainClass(
            class_id=class_id, code=parse(fields[1]), description=fields[2]
        )
    return registry
