from typing import Optional


class CausalPromptError(Exception):
    """Root of every error raised by causalprompt."""


class DataError(CausalPromptError):
    """Bad or missing input data. The CLI maps these to exit code 2."""


class StageError(CausalPromptError):
    """A pipeline stage failed while running. The CLI maps these to exit code 3."""


# dataset

class SchemaError(DataError):
    def __init__(self, line: int, field: str, message: str = ""):
        self.line = line
        self.field = field
        text = f"line {line}: invalid or missing field '{field}'"
        if message:
            text += f" ({message})"
        super().__init__(text)


class AlignmentError(DataError):
    def __init__(self, id: str):
        self.id = id
        super().__init__(f"record '{id}' is missing from one of the aligned inputs")


class EmptyMatrixError(DataError):
    def __init__(self, message: str = "observation matrix has no rows"):
        super().__init__(message)


# codemetrics

class SandboxError(StageError):
    def __init__(self, interpreter: str, message: str = ""):
        self.interpreter = interpreter
        super().__init__(f"interpreter '{interpreter}' cannot be launched {message}".strip())


class TooFewSolutions(DataError):
    def __init__(self, count: int):
        self.count = count
        super().__init__(f"mutual similarity needs at least 2 solutions, got {count}")


# rephrase

class LengthMismatch(DataError):
    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"vector length {got} does not match expected length {expected}")


class TransportError(StageError):
    def __init__(self, attempts: int, cause: Optional[BaseException] = None):
        self.attempts = attempts
        self.cause = cause
        super().__init__(f"LLM request failed after {attempts} attempts: {cause}")


class EmptyResponse(StageError):
    def __init__(self, request_id: str = ""):
        self.request_id = request_id
        super().__init__(f"LLM returned an empty response for request '{request_id}'")


# discovery

class NonConvergence(StageError):
    def __init__(self, iterations: int, final_h: float):
        self.iterations = iterations
        self.final_h = final_h
        super().__init__(f"acyclicity not reached after {iterations} iterations (h={final_h:.3e})")


class CycleAfterPrune(StageError):
    def __init__(self, cycle):
        self.cycle = cycle
        super().__init__("pruned graph contains the cycle " + "->".join(map(str, cycle)))


class UnknownNode(DataError):
    def __init__(self, node: str):
        self.node = node
        super().__init__(f"unknown node '{node}'")


class OverlappingSets(DataError):
    def __init__(self, overlap):
        self.overlap = set(overlap)
        super().__init__(f"node sets must be disjoint, shared: {sorted(self.overlap)}")


# inference / analysis

class InsufficientData(DataError):
    def __init__(self, n: int, min_n: int):
        self.n = n
        self.min_n = min_n
        super().__init__(f"{n} rows available, at least {min_n} required")


class NotIdentifiable(DataError):
    def __init__(self, treatment: str, outcome: str):
        self.treatment = treatment
        self.outcome = outcome
        super().__init__(f"'{treatment}' is a descendant of '{outcome}'; effect is not identifiable")


class EmptyStratum(DataError):
    def __init__(self, variable: str, value: float):
        self.variable = variable
        self.value = value
        super().__init__(f"no rows with {variable} == {value}")


# optimizer

class UnknownMetric(DataError):
    def __init__(self, metric: str):
        self.metric = metric
        super().__init__(f"'{metric}' is not a code-metric variable")


# cli

class StageInputMissing(StageError):
    def __init__(self, stage: str, path: str = ""):
        self.stage = stage
        self.path = path
        super().__init__(f"stage '{stage}' is missing its input {path}".strip())
