"""Exception hierarchy shared across the package."""

from __future__ import annotations


class KidVoiceError(Exception):
    """Base class for every error raised by kidvoice."""


# audio
class AudioError(KidVoiceError):
    pass


class UnsupportedFormat(AudioError):
    pass


class CorruptFile(AudioError):
    pass


class EmptyAudio(AudioError):
    pass


class DegenerateSignal(AudioError):
    pass


class TooShort(AudioError):
    pass


# context features
class EmptyCorpus(KidVoiceError):
    pass


class UnknownTimezone(KidVoiceError):
    pass


class LeakageError(KidVoiceError):
    """Raised when a train-only statistic is built from test-partition data."""


class ManifestError(KidVoiceError):
    pass


# learners / fusion
class SingleClassData(KidVoiceError):
    pass


class DimensionMismatch(KidVoiceError):
    pass


class NonFiniteLoss(KidVoiceError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class ModelFormatError(KidVoiceError):
    pass


# orchestration
class MissingModality(KidVoiceError):
    pass


class PipelineError(KidVoiceError):
    """Wraps a failure with the pipeline stage and, when known, the record id."""

    def __init__(self, stage: str, message: str, record_id: str | None = None):
        where = f"[{stage}]" if record_id is None else f"[{stage}] record {record_id!r}:"
        super().__init__(f"{where} {message}")
        self.stage = stage
        self.record_id = record_id
