"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
1 for domain/validation failures, 2 for I/O and parse failures.
"""

from __future__ import annotations


class EmodiarError(Exception):
    exit_code = 1

    def __init__(self, message: str, *, utterance_id: str | None = None,
                 location: str | None = None, index: int | None = None):
        self.message = message
        self.utterance_id = utterance_id
        self.location = location
        self.index = index
        parts = []
        if utterance_id is not None:
            parts.append(f"[{utterance_id}]")
        if location is not None:
            parts.append(f"({location})")
        parts.append(message)
        super().__init__(" ".join(parts))

    def relocated(self, location: str) -> "EmodiarError":
        """Same error with a more precise location (e.g. file and byte offset)."""
        return type(self)(self.message, utterance_id=self.utterance_id,
                          location=location, index=self.index)


class DomainError(EmodiarError):
    exit_code = 1


class InputError(EmodiarError):
    exit_code = 2


# timeline validation
class OverlapInReference(DomainError):
    pass


class OutOfRange(DomainError):
    pass


class EmptyTimelineDuration(DomainError):
    pass


class DegenerateSegment(DomainError):
    pass


class InvalidConfidence(DomainError):
    pass


class DurationMismatch(DomainError):
    pass


# scoring / corpus
class EmptyCorpus(DomainError):
    pass


class UnmatchedUtterances(DomainError):
    pass


class InvalidReferencePattern(DomainError):
    pass


class MissingPosteriors(DomainError):
    pass


class TooFewRaters(DomainError):
    pass


class SingleRaterPerItem(TooFewRaters):
    pass


class InsufficientClips(DomainError):
    pass


class ClipDurationMismatch(DomainError):
    pass


# parsing / files
class SchemaError(InputError):
    pass


class ParseError(InputError):
    pass


class UnknownLabel(ParseError):
    pass


class PosteriorSumError(InputError):
    pass


class MissingDuration(InputError):
    pass


class MissingFile(InputError):
    pass


class BadSampleRate(InputError):
    pass


class BadWavFormat(InputError):
    pass


class SampleRateMismatch(BadWavFormat):
    pass


class ChannelCountMismatch(BadWavFormat):
    pass


class EmptyAudio(InputError):
    pass
