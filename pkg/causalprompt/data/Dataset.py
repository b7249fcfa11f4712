import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_serializer, field_validator

from causalprompt.blocks.prompts.Intentions import IntentionVector
from causalprompt.utils.Errors import DataError, SchemaError
from causalprompt.utils.Files import atomic_write_text
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)


class TestCase(BaseModel):
    __test__ = False  # keeps pytest from collecting it
    model_config = ConfigDict(extra="forbid", frozen=True)

    stdin: str
    expected_stdout: str


class PromptRecord(BaseModel):
    """
    One programming question with its rephrasing provenance, generated
    solutions and test cases. An original question has origin_id == id.
    """
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    id: str = Field(min_length=1)
    question_text: str
    origin_id: str = Field(min_length=1)
    intention_vector: IntentionVector
    solutions: List[str] = Field(default_factory=list)
    test_cases: List[TestCase] = Field(default_factory=list)
    difficulty: Optional[str] = None

    @field_validator("intention_vector", mode="before")
    @classmethod
    def _parse_vector(cls, value):
        if isinstance(value, IntentionVector):
            return value
        if isinstance(value, str):
            try:
                return IntentionVector.from_string(value)
            except DataError as error:
                raise ValueError(str(error)) from error
        if isinstance(value, (list, tuple)):
            return IntentionVector(tuple(value))
        raise ValueError("intention_vector must be a bit string")

    @field_serializer("intention_vector")
    def _dump_vector(self, value: IntentionVector) -> str:
        return value.to_string()

    @property
    def is_original(self) -> bool:
        return self.origin_id == self.id


class DatasetParserBase(ABC):

    @abstractmethod
    def __init__(self):
        pass

    @abstractmethod
    def parse(self, path: Path) -> List[Tuple[int, dict]]:
        """Return (line number, raw object) pairs."""
        pass


class JsonlParser(DatasetParserBase):

    def __init__(self):
        pass

    def parse(self, path: Path) -> List[Tuple[int, dict]]:
        rows = []
        with open(path, "r", encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as error:
                    raise SchemaError(line_number, "<json>", str(error)) from error
                if not isinstance(obj, dict):
                    raise SchemaError(line_number, "<record>", "each line must hold one JSON object")
                rows.append((line_number, obj))
        return rows


class CsvParser(DatasetParserBase):
    """Records as CSV rows; list-valued fields hold JSON text."""

    json_fields = ("solutions", "test_cases")

    def __init__(self):
        pass

    def parse(self, path: Path) -> List[Tuple[int, dict]]:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
        rows = []
        for index, row in enumerate(df.to_dict(orient="records")):
            line_number = index + 2  # header is line 1
            obj = {key: value for key, value in row.items()}
            for field in self.json_fields:
                if field in obj:
                    try:
                        obj[field] = json.loads(obj[field]) if obj[field] else []
                    except json.JSONDecodeError as error:
                        raise SchemaError(line_number, field, str(error)) from error
            if obj.get("difficulty", None) == "":
                obj["difficulty"] = None
            rows.append((line_number, obj))
        return rows


PARSERS = {"jsonl": JsonlParser, "csv": CsvParser}


def _record_from(line_number: int, obj: dict) -> PromptRecord:
    try:
        return PromptRecord.model_validate(obj)
    except ValidationError as error:
        first = error.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "<record>"
        raise SchemaError(line_number, field, first["msg"]) from error


def load_dataset(path: Union[str, Path], format: str = "jsonl") -> List[PromptRecord]:
    """
    Load every record of a dataset file. The whole file is rejected on the first
    malformed record, with its line number and field.
    """
    path = Path(path)
    if format not in PARSERS:
        raise DataError(f"unsupported dataset format '{format}'")
    if not path.exists():
        raise IOError(f"dataset file not found: {path}")

    rows = PARSERS[format]().parse(path)
    records: List[PromptRecord] = []
    seen: Dict[str, int] = {}
    for line_number, obj in rows:
        record = _record_from(line_number, obj)
        if record.id in seen:
            raise SchemaError(line_number, "id", f"duplicate id, first seen on line {seen[record.id]}")
        seen[record.id] = line_number
        records.append(record)

    lines = {record.id: line for record, (line, _) in zip(records, rows)}
    for record in records:
        if record.origin_id not in seen:
            raise SchemaError(lines[record.id], "origin_id", f"unknown origin '{record.origin_id}'")

    logger.info(f"Loaded {len(records)} records from {path}")
    return records


def dumps_record(record: PromptRecord) -> str:
    return json.dumps(record.model_dump(mode="json"), ensure_ascii=False)


def save_dataset(records: Iterable[PromptRecord], path: Union[str, Path]) -> Path:
    """Write records as UTF-8 JSONL, one object per line, atomically."""
    text = "".join(dumps_record(record) + "\n" for record in records)
    return atomic_write_text(path, text)


def index_by_id(records: Iterable[PromptRecord]) -> Dict[str, PromptRecord]:
    return {record.id: record for record in records}


def gold_solution(record: PromptRecord, by_id: Dict[str, PromptRecord]) -> str:
    """First reference solution of the record's original question ("" when none)."""
    origin = by_id.get(record.origin_id)
    if origin is None or not origin.solutions:
        return ""
    return origin.solutions[0]
