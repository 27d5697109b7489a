"""Exception hierarchy shared by all skillshift modules."""


class SkillShiftError(Exception):
    """Base class. ``exit_code`` is what the CLI returns for this error."""

    exit_code = 4


class ConfigError(SkillShiftError, ValueError):
    exit_code = 2


class MissingArtifact(SkillShiftError):
    exit_code = 3


class DataError(SkillShiftError):
    exit_code = 4


class CorruptInput(DataError):
    pass


class NotFound(DataError, KeyError):
    def __str__(self):  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class DomainError(DataError, ValueError):
    pass


class MissingSkill(DataError, KeyError):
    def __init__(self, skills):
        self.skills = sorted(skills)
        super().__init__(f"skills missing from vocabulary: {', '.join(self.skills)}")

    def __str__(self):
        return Exception.__str__(self)


class ReweightUndefined(DataError):
    """Raised when the occurrence ratio is undefined; ``raw`` holds the unweighted change."""

    def __init__(self, raw, message="zero skill occurrences at t1"):
        self.raw = raw
        super().__init__(message)


class PartitionIncomplete(DataError, KeyError):
    def __init__(self, skills):
        self.skills = sorted(skills)
        super().__init__(f"skills without community: {', '.join(self.skills[:10])}")

    def __str__(self):
        return Exception.__str__(self)


class DegenerateProfile(DataError):
    pass


class SingularDesign(DataError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(map(str, self.columns))}")
