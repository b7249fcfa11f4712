import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

from causalprompt.utils.Errors import DataError, LengthMismatch

GROUPS = ("instruction", "role", "scenario")


@dataclass(frozen=True)
class Intention:
    id: str
    """Stable identifier; also the name of the meta-prompt variable in the causal graph."""
    group: str
    surface_text: str
    """The clause inserted into the meta-prompt, e.g. "make it short"."""

    def __post_init__(self):
        if self.group not in GROUPS:
            raise DataError(f"intention '{self.id}' has unknown group '{self.group}'")
        if not self.surface_text.strip():
            raise DataError(f"intention '{self.id}' has an empty surface text")


@dataclass(frozen=True)
class IntentionVector:
    """Selection status of every intention in a registry, one bit each."""
    bits: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise DataError(f"intention vector must be binary, got {self.bits}")

    @classmethod
    def from_string(cls, text: str) -> "IntentionVector":
        text = text.strip()
        if any(ch not in "01" for ch in text):
            raise DataError(f"intention vector '{text}' is not a bit string")
        return cls(tuple(int(ch) for ch in text))

    @classmethod
    def zeros(cls, length: int) -> "IntentionVector":
        return cls((0,) * length)

    @classmethod
    def one_hot(cls, length: int, index: int) -> "IntentionVector":
        return cls(tuple(1 if i == index else 0 for i in range(length)))

    def to_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    def selected(self, registry: Sequence[Intention]) -> List[Intention]:
        check_length(self, registry)
        return [intention for bit, intention in zip(self.bits, registry) if bit]

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return self.to_string()


def check_length(vector: IntentionVector, registry: Sequence[Intention]) -> None:
    if len(vector) != len(registry):
        raise LengthMismatch(expected=len(registry), got=len(vector))


# Short, Long, Formal and Fluent plus the role/scenario examples are the named ones;
# the rest fill the 6/3/3 layout and can be replaced through a registry file.
DEFAULT_REGISTRY: Tuple[Intention, ...] = (
    Intention("short", "instruction", "make it short"),
    Intention("fluent", "instruction", "make it fluent"),
    Intention("long", "instruction", "make it long"),
    Intention("formal", "instruction", "make it formal"),
    Intention("clear", "instruction", "make it clear"),
    Intention("precise", "instruction", "make it precise"),
    Intention("student", "role", "as a student"),
    Intention("teacher", "role", "as a teacher"),
    Intention("expert", "role", "as an expert programmer"),
    Intention("competition", "scenario", "in a programming competition"),
    Intention("interview", "scenario", "in a job interview"),
    Intention("classroom", "scenario", "in a classroom exercise"),
)


def validate_registry(registry: Iterable[Intention]) -> Tuple[Intention, ...]:
    registry = tuple(registry)
    ids = [intention.id for intention in registry]
    duplicates = {i for i in ids if ids.count(i) > 1}
    if duplicates:
        raise DataError(f"duplicate intention ids: {sorted(duplicates)}")
    if not registry:
        raise DataError("intention registry is empty")
    return registry


def load_registry(path: Union[str, Path]) -> Tuple[Intention, ...]:
    """Read a registry from a JSON list of {id, group, surface_text} objects."""
    with open(path, "r", encoding="utf-8") as handle:
        entries = json.load(handle)
    return validate_registry(Intention(**entry) for entry in entries)


def decode(vector: IntentionVector, registry: Sequence[Intention]) -> List[str]:
    """Surface texts of the selected intentions, in registry order."""
    return [intention.surface_text for intention in vector.selected(registry)]
