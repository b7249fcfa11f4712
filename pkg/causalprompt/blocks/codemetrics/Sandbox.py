import os
import shutil
import signal
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from causalprompt.utils.Errors import DataError, SandboxError
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

PASS, WRONG_OUTPUT, RUNTIME_ERROR, TIMEOUT = "pass", "wrong_output", "runtime_error", "timeout"
STATUSES = (PASS, WRONG_OUTPUT, RUNTIME_ERROR, TIMEOUT)

POSIX = os.name == "posix"

# Runs inside the child interpreter: set the limits, then hand over to the program.
# argv: memory_mb cpu_s program_path
BOOTSTRAP = (
    "import resource, runpy, sys\n"
    "limit = int(sys.argv[1]) * 1024 * 1024\n"
    "resource.setrlimit(resource.RLIMIT_AS, (limit, limit))\n"
    "cpu = int(sys.argv[2])\n"
    "resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu + 1))\n"
    "sys.argv = sys.argv[3:]\n"
    "runpy.run_path(sys.argv[0], run_name='__main__')\n"
)


@dataclass(frozen=True)
class CellOutcome:
    status: str
    wall_time: float
    stderr_tail: str = ""


@dataclass(frozen=True)
class ExecutionOutcome:
    """Per (solution, test) statuses; cells[i][j] is solution i on test j."""
    cells: Tuple[Tuple[CellOutcome, ...], ...]

    def counts(self) -> dict:
        counts = {status: 0 for status in STATUSES}
        for row in self.cells:
            for cell in row:
                counts[cell.status] += 1
        return counts

    @property
    def total(self) -> int:
        return sum(len(row) for row in self.cells)

    def rate(self, status: str) -> float:
        return self.counts()[status] / self.total if self.total else 0.0

    @property
    def pass_rate(self) -> float:
        return self.rate(PASS)


def normalize_output(text: str) -> str:
    """Strip trailing whitespace on every line and trailing newlines."""
    return "\n".join(line.rstrip() for line in text.splitlines()).rstrip("\n")


def resolve_interpreter(interpreter: str) -> List[str]:
    parts = interpreter.split()
    if not parts:
        raise SandboxError(interpreter, "(empty command)")
    resolved = shutil.which(parts[0])
    if resolved is None:
        raise SandboxError(interpreter, "(not found on PATH)")
    return [resolved] + parts[1:]


def _kill_group(process: subprocess.Popen):
    """Kill the child and everything it started in its session."""
    if POSIX:
        try:
            os.killpg(process.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass
    else:
        process.kill()


class Sandbox:
    """
    Runs untrusted programs in child processes with a wall-clock timeout and an
    address-space limit. Process isolation only; not safe for adversarial code.
    """

    def __init__(self, timeout_s: float = 4.0, memory_mb: int = 256, interpreter: str = "python3",
                 workers: int = 4, grace_s: float = 1.0):
        self.timeout_s = timeout_s
        self.memory_mb = memory_mb
        self.interpreter = interpreter
        self.workers = workers
        self.grace_s = grace_s

    @classmethod
    def from_config(cls, config) -> "Sandbox":
        return cls(config.timeout_s, config.memory_mb, config.interpreter, config.workers, config.grace_s)

    def _argv(self, command: List[str], program_path: str) -> List[str]:
        if not POSIX:
            return command + [program_path]
        return command + ["-c", BOOTSTRAP, str(self.memory_mb), str(int(self.timeout_s) + 1), program_path]

    def _run_cell(self, command: List[str], program_path: str, stdin: str, expected: str) -> CellOutcome:
        start = time.monotonic()
        try:
            process = subprocess.Popen(
                self._argv(command, program_path),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                cwd=os.path.dirname(program_path),
                start_new_session=POSIX,
            )
        except OSError as error:
            raise SandboxError(self.interpreter, f"({error})") from error
        try:
            stdout, stderr = process.communicate(stdin.encode("utf-8"), timeout=self.timeout_s)
        except subprocess.TimeoutExpired:
            _kill_group(process)
            try:
                process.communicate(timeout=self.grace_s)
            except subprocess.TimeoutExpired:
                process.kill()
                process.wait()
            logger.debug(f"{program_path} timed out after {self.timeout_s}s")
            return CellOutcome(TIMEOUT, min(time.monotonic() - start, self.timeout_s + self.grace_s))
        wall_time = time.monotonic() - start
        # programs that exited may leave background children behind
        _kill_group(process)
        stderr_tail = stderr.decode("utf-8", errors="replace")[-500:]
        if process.returncode != 0:
            return CellOutcome(RUNTIME_ERROR, wall_time, stderr_tail)
        output = stdout.decode("utf-8", errors="replace")
        status = PASS if normalize_output(output) == normalize_output(expected) else WRONG_OUTPUT
        return CellOutcome(status, wall_time, stderr_tail)

    def run_tests(self, programs: Sequence[str], tests: Sequence) -> ExecutionOutcome:
        """
        Run every program on every test. tests are objects with `stdin` and
        `expected_stdout`. Cells run on a bounded thread pool, each in its own
        child process; the result order does not depend on scheduling.
        """
        if not tests:
            raise DataError("run_tests needs at least one test case")
        command = resolve_interpreter(self.interpreter)
        with tempfile.TemporaryDirectory(prefix="causalprompt-") as workdir:
            paths = []
            for i, program in enumerate(programs):
                solution_dir = os.path.join(workdir, f"s{i}")
                os.makedirs(solution_dir)
                path = os.path.join(solution_dir, "main.py")
                with open(path, "w", encoding="utf-8") as handle:
                    handle.write(program)
                paths.append(path)

            jobs = [(i, j) for i in range(len(programs)) for j in range(len(tests))]
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                futures = {
                    (i, j): pool.submit(self._run_cell, command, paths[i], tests[j].stdin, tests[j].expected_stdout)
                    for i, j in jobs
                }
                results = {key: future.result() for key, future in futures.items()}

        cells = tuple(tuple(results[(i, j)] for j in range(len(tests))) for i in range(len(programs)))
        return ExecutionOutcome(cells)


def run_tests(program: str, tests: Sequence, timeout_s: float = 4.0, memory_mb: int = 256,
              interpreter: str = "python3", grace_s: float = 1.0, workers: int = 4) -> ExecutionOutcome:
    """Single-program convenience wrapper; the outcome has one row."""
    sandbox = Sandbox(timeout_s, memory_mb, interpreter, workers, grace_s)
    return sandbox.run_tests([program], tests)

