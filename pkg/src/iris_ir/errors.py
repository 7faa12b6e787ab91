"""Exception hierarchy shared by every iris_ir module."""

from __future__ import annotations


class IrisError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(IrisError):
    pass


class ToolMissing(ConfigError):
    """A required external tool could not be resolved to an executable."""


# -- toolchain --------------------------------------------------------------

class ToolFailure(IrisError):
    def __init__(self, tool: str, exit_code: int, stderr: str):
        self.tool = tool
        self.exit_code = exit_code
        self.stderr = stderr
        super().__init__(f"{tool} exited with {exit_code}: {stderr.strip()[:2000]}")


class DumpMissing(IrisError):
    pass


class ToolTimeout(IrisError, TimeoutError):
    def __init__(self, tool: str, timeout_s: float):
        self.tool = tool
        self.timeout_s = timeout_s
        super().__init__(f"{tool} exceeded {timeout_s}s")


class IrRejected(ToolFailure):
    """llc (or its stand-in) refused the candidate module."""


class LinkFailure(ToolFailure):
    pass


# -- parsing ----------------------------------------------------------------

class UnbalancedBraces(IrisError):
    def __init__(self, offset: int, detail: str = ""):
        self.offset = offset
        super().__init__(f"unbalanced braces at offset {offset}" + (f": {detail}" if detail else ""))


class EmptyDump(IrisError):
    pass


class EmptyModule(IrisError):
    pass


class DuplicateSymbol(IrisError):
    def __init__(self, name: str, side: str):
        self.name = name
        self.side = side
        super().__init__(f"symbol {name!r} appears twice in {side} functions")


# -- metrics / selection ----------------------------------------------------

class UnknownSchema(IrisError):
    pass


class DimensionMismatch(IrisError):
    pass


class NonzeroExit(IrisError):
    """The measured program exited nonzero; ``metrics`` still holds the measurement."""

    def __init__(self, exit_code: int, metrics):
        self.exit_code = exit_code
        self.metrics = metrics
        super().__init__(f"program exited with {exit_code}")


# -- dataset ----------------------------------------------------------------

class BuildRejected(IrisError):
    def __init__(self, side: str, diagnostics: str = ""):
        self.side = side
        self.diagnostics = diagnostics
        super().__init__(f"rejected by {side}: {diagnostics.strip()[:500]}")


class SchemaMismatch(IrisError):
    pass


class MalformedLine(IrisError):
    def __init__(self, line_number: int, detail: str = ""):
        self.line_number = line_number
        super().__init__(f"malformed record on line {line_number}: {detail}")


# -- translation ------------------------------------------------------------

class BackendUnavailable(IrisError):
    pass


class SampleUnknown(IrisError):
    pass


class PipelineError(IrisError):
    def __init__(self, stage: str, diagnostics: str):
        self.stage = stage
        self.diagnostics = diagnostics
        super().__init__(f"[{stage}] {diagnostics.strip()[:2000]}")


# -- scoring / analysis -----------------------------------------------------

class DomainError(IrisError, ValueError):
    pass


class EmptyInput(IrisError, ValueError):
    pass
