"""
A frozen subset of PEP 8 checks, used as the `black_count` code metric.

Counts are deterministic but not comparable with an external formatter's
counts. Rule set version is bumped whenever a rule changes.
"""
import io
import tokenize
from abc import ABC, abstractmethod
from typing import List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field

RULESET_VERSION = "1"
MAX_LINE_LENGTH = 79
OPENING, CLOSING = "([{", ")]}"
ASSIGNMENT_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "//=", "%=", "**=", "&=", "|=", "^=", ">>=", "<<=", "@=", ":="})
SKIPPED = (tokenize.NL, tokenize.COMMENT, tokenize.INDENT, tokenize.DEDENT, tokenize.ENCODING, tokenize.ENDMARKER)


class Violation(BaseModel):
    model_config = ConfigDict(frozen=True)

    rule: str
    line: int = Field(ge=1)
    column: int = Field(ge=0)
    message: str = Field(min_length=1)

    def __str__(self) -> str:
        return f"{self.line}:{self.column + 1}: [{self.rule}] {self.message}"


class SourceView:
    """Physical lines plus the token stream (None when the source does not tokenize)."""

    def __init__(self, source: str):
        self.source = source
        self.lines = source.splitlines()
        self.tokens: Optional[List[tokenize.TokenInfo]]
        try:
            self.tokens = list(tokenize.generate_tokens(io.StringIO(source).readline))
        except (tokenize.TokenError, IndentationError, SyntaxError):
            self.tokens = None

    def logical_starts(self) -> List[tokenize.TokenInfo]:
        """First significant token of every logical line."""
        starts, at_start = [], True
        for token in self.tokens or []:
            if token.type in SKIPPED:
                continue
            if at_start:
                starts.append(token)
                at_start = False
            if token.type == tokenize.NEWLINE:
                at_start = True
        return starts


class BaseRule(ABC):
    identifier: str
    description: str

    @abstractmethod
    def check(self, view: SourceView) -> List[Violation]:
        pass

    def violation(self, line: int, column: int, message: str) -> Violation:
        return Violation(rule=self.identifier, line=line, column=column, message=message)


class LineLengthRule(BaseRule):
    identifier = "line-length"
    description = f"Lines longer than {MAX_LINE_LENGTH} characters."

    def check(self, view: SourceView) -> List[Violation]:
        return [
            self.violation(number, MAX_LINE_LENGTH, f"line is {len(line)} characters long")
            for number, line in enumerate(view.lines, 1)
            if len(line) > MAX_LINE_LENGTH
        ]


class TabsRule(BaseRule):
    identifier = "tabs"
    description = "Tab characters in indentation."

    def check(self, view: SourceView) -> List[Violation]:
        violations = []
        for number, line in enumerate(view.lines, 1):
            indent = line[:len(line) - len(line.lstrip())]
            if "\t" in indent:
                violations.append(self.violation(number, indent.index("\t"), "indentation contains a tab"))
        return violations


class TrailingWhitespaceRule(BaseRule):
    identifier = "trailing-whitespace"
    description = "Whitespace at the end of a line."

    def check(self, view: SourceView) -> List[Violation]:
        return [
            self.violation(number, len(line.rstrip()), "trailing whitespace")
            for number, line in enumerate(view.lines, 1)
            if line != line.rstrip()
        ]


class BlankLinesRule(BaseRule):
    identifier = "blank-lines"
    description = "Two blank lines before and after top-level function and class definitions."

    def _blank_before(self, view: SourceView, row: int) -> int:
        count, i = 0, row - 2
        while i >= 0 and view.lines[i].lstrip().startswith("#"):
            i -= 1
        while i >= 0 and not view.lines[i].strip():
            count += 1
            i -= 1
        return count

    def check(self, view: SourceView) -> List[Violation]:
        violations = []
        previous: Optional[str] = None
        inside_definition = False
        for index, token in enumerate(view.logical_starts()):
            row, col = token.start
            if col != 0:
                continue
            kind = "def" if token.string in ("def", "class", "async", "@") else "code"
            first = index == 0
            if kind == "def" and previous != "@":
                if not first and self._blank_before(view, row) < 2:
                    violations.append(self.violation(row, 0, "expected 2 blank lines before definition"))
                inside_definition = True
            elif kind == "code" and inside_definition:
                if self._blank_before(view, row) < 2:
                    violations.append(self.violation(row, 0, "expected 2 blank lines after definition"))
                inside_definition = False
            previous = token.string
        return violations


class SpacingRule(BaseRule):
    identifier = "spacing"
    description = "Spaces around top-level assignment operators; after, never before, commas."

    def check(self, view: SourceView) -> List[Violation]:
        tokens = [t for t in view.tokens or [] if t.type not in (tokenize.NL, tokenize.COMMENT)]
        violations = []
        depth = 0
        for i, token in enumerate(tokens):
            if token.type != tokenize.OP:
                continue
            if token.string in OPENING:
                depth += 1
            elif token.string in CLOSING:
                depth = max(0, depth - 1)
            elif token.string in ASSIGNMENT_OPS and depth == 0 and 0 < i < len(tokens) - 1:
                before, after = tokens[i - 1], tokens[i + 1]
                if before.end == token.start or (after.start == token.end and after.type != tokenize.NEWLINE):
                    violations.append(self.violation(*token.start, f"missing whitespace around '{token.string}'"))
            elif token.string == ",":
                before = tokens[i - 1] if i > 0 else None
                after = tokens[i + 1] if i + 1 < len(tokens) else None
                if before is not None and before.end != token.start and before.end[0] == token.start[0]:
                    violations.append(self.violation(*token.start, "whitespace before ','"))
                elif (after is not None and after.start == token.end
                      and after.type != tokenize.NEWLINE and after.string not in CLOSING):
                    violations.append(self.violation(*token.start, "missing whitespace after ','"))
        return violations


DEFAULT_RULES: Sequence[BaseRule] = (
    LineLengthRule(), TabsRule(), TrailingWhitespaceRule(), BlankLinesRule(), SpacingRule(),
)


def check_style(program: str, rules: Sequence[BaseRule] = DEFAULT_RULES) -> List[Violation]:
    view = SourceView(program)
    violations = [v for rule in rules for v in rule.check(view)]
    return sorted(violations, key=lambda v: (v.line, v.column, v.rule))


def style_violations(program: str, rules: Sequence[BaseRule] = DEFAULT_RULES) -> int:
    return len(check_style(program, rules))
