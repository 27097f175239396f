"""Exception hierarchy shared across the framework."""


class OpsDiagError(Exception):
    """Base class for all framework errors."""


# --- session ---

class UnknownAgent(OpsDiagError):
    pass


class EmptyTask(OpsDiagError):
    pass


class SessionClosed(OpsDiagError):
    pass


class OrphanToolResult(OpsDiagError):
    pass


class IllegalTransition(OpsDiagError):
    pass


class UnknownScope(OpsDiagError):
    pass


# --- llm gateway ---

class NoScriptMatch(OpsDiagError):
    def __init__(self, message: str, last_user_message: str = ""):
        super().__init__(message)
        self.last_user_message = last_user_message


class ScriptParseError(OpsDiagError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class ProviderUnavailable(OpsDiagError):
    pass


class ProviderTimeout(OpsDiagError):
    pass


# --- mcp ---

class FrameParseError(OpsDiagError):
    pass


class ProtocolError(OpsDiagError):
    def __init__(self, message: str, code: int = -32600):
        super().__init__(message)
        self.code = code


class TransportError(OpsDiagError):
    pass


class DuplicateTool(OpsDiagError):
    pass


class UnknownApp(OpsDiagError):
    pass


class UnknownMetric(OpsDiagError):
    pass


class EmptyWindow(OpsDiagError):
    pass


# --- context engine ---

class BudgetInfeasible(OpsDiagError):
    pass


class DistillGrammarError(OpsDiagError):
    pass


# --- reasoning engine ---

class MalformedAction(OpsDiagError):
    pass


class DisallowedTool(OpsDiagError):
    pass


class DisallowedVariant(OpsDiagError):
    pass


class StepLimitExceeded(OpsDiagError):
    pass


class PhaseStepLimit(OpsDiagError):
    pass


# --- knowledge engine ---

class EmptyAfterCleaning(OpsDiagError):
    pass


class UnreadableSource(OpsDiagError):
    pass


class ExtractionGrammarError(OpsDiagError):
    pass


class EmptyIndex(OpsDiagError):
    pass


class UnknownEntity(OpsDiagError):
    pass


# --- orchestrator ---

class PlanGrammarError(OpsDiagError):
    pass


class PlanTooLarge(OpsDiagError):
    pass


class SubtaskFailed(OpsDiagError):
    def __init__(self, subtask_id: str, message: str = ""):
        super().__init__(message or f"subtask {subtask_id} failed")
        self.subtask_id = subtask_id


class UnresolvedPath(OpsDiagError):
    pass


class StepFailed(OpsDiagError):
    def __init__(self, step_id: str, message: str = ""):
        super().__init__(message or f"workflow step {step_id} failed")
        self.step_id = step_id


class SanitizationLeak(OpsDiagError):
    pass


# --- incident sim ---

class ScenarioValidationError(OpsDiagError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class InsufficientPoints(OpsDiagError):
    pass


# --- gateway service ---

class UnknownSession(OpsDiagError):
    pass


class InvalidReference(OpsDiagError):
    pass
