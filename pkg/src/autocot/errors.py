"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI: ConfigError -> 2, BackendError -> 3,
DataError -> 4, anything else -> 1.
"""


class AutoCotError(Exception):
    exit_code = 1


class ConfigError(AutoCotError):
    """Invalid run configuration (bad flags, unknown dataset, bad spec strings)."""

    exit_code = 2


class BackendError(AutoCotError):
    """Completion/embedding backend failure."""

    exit_code = 3


class DataError(AutoCotError):
    """Bad input data or degenerate numeric input."""

    exit_code = 4


# -- corpus ------------------------------------------------------------------

class MalformedRecord(DataError):
    def __init__(self, line_number: int, reason: str = ""):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"malformed record at line {line_number}: {reason}")


class EmptyDataset(DataError):
    pass


class UnnormalizableAnswer(DataError):
    pass


# -- embed / cluster ---------------------------------------------------------

class ZeroVector(DataError):
    pass


class TooFewPoints(DataError):
    pass


class DegenerateData(DataError):
    pass


# -- llm ---------------------------------------------------------------------

class BackendUnavailable(BackendError):
    pass


class PromptTooLong(BackendError):
    pass


class ScriptMiss(BackendError):
    """Scripted backend has no entry for the requested prompt."""

    def __init__(self, prompt: str):
        self.prompt = prompt
        super().__init__(
            f"no scripted completion for prompt (sha256 prefix "
            f"{_prompt_digest(prompt)}): {prompt[:80]!r}..."
        )


class CacheCorrupt(AutoCotError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"corrupt cache entry: {path}")


# -- cot / demo --------------------------------------------------------------

class MissingAnswer(DataError):
    pass


class MissingAnnotatedChain(DataError):
    pass


class ClusterTooSmall(DataError):
    pass


# -- eval --------------------------------------------------------------------

class EmptyRecords(DataError):
    pass


class NoBaselineErrors(DataError):
    pass


class PoolTooSmall(DataError):
    pass


class TooFewDemos(DataError):
    pass


# -- fixtures ----------------------------------------------------------------

class SpecInvalid(ConfigError):
    pass


def _prompt_digest(prompt: str) -> str:
    import hashlib

    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
