"""Exception hierarchy. Everything raised on purpose derives from ``G0Error``."""


class G0Error(Exception):
    pass


# kinematics

class UrdfError(G0Error):
    pass


class MalformedXml(UrdfError):
    pass


class CyclicKinematicTree(UrdfError):
    pass


class DanglingParentLink(UrdfError):
    pass


class DanglingChildLink(UrdfError):
    pass


class MissingAxis(UrdfError):
    pass


class UnknownLink(G0Error):
    pass


class ConfigLengthMismatch(G0Error):
    pass


# ingest

class IngestError(G0Error):
    pass


class MissingFile(IngestError):
    def __init__(self, name: str):
        super().__init__(f"missing file: {name}")
        self.name = name


class SchemaViolation(IngestError):
    def __init__(self, file: str, line: int, field: str, detail: str = ""):
        msg = f"{file}:{line}: bad field {field!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.file = file
        self.line = line
        self.field = field


class NonMonotonicTimestamp(IngestError):
    def __init__(self, stream: str, index: int):
        super().__init__(f"timestamps not strictly increasing in stream {stream!r} at line {index}")
        self.stream = stream
        self.index = index


class ApertureOutOfRange(IngestError):
    def __init__(self, stream: str, index: int, value: float):
        super().__init__(f"aperture {value} outside [0, 1] in stream {stream!r} at line {index}")
        self.stream = stream
        self.index = index
        self.value = value


# sync

class EmptyStream(G0Error):
    def __init__(self, arm_id: str):
        super().__init__(f"pose stream {arm_id!r} has fewer than 2 samples")
        self.arm_id = arm_id


class NoTemporalOverlap(G0Error):
    pass


# quality

class ImageTooSmall(G0Error):
    pass


class SequenceTooShort(G0Error):
    pass


class OverlappingSpans(G0Error):
    pass


# retarget

class NoCalibrationWindow(G0Error):
    pass


class DegenerateWindow(G0Error):
    pass


class UnknownGripperKind(G0Error):
    pass


class TickGridMismatch(G0Error):
    pass


# assembly

class InsufficientPool(G0Error):
    def __init__(self, source: str, requested: int, available: int):
        super().__init__(f"pool {source!r}: requested {requested}, only {available} eligible")
        self.source = source
        self.requested = requested
        self.available = available


class InvalidEpisode(G0Error):
    pass


class UnsampledGap(G0Error):
    pass


class ReplayDeviation(G0Error):
    pass


class MissingEpisode(G0Error):
    def __init__(self, episode_id: str):
        super().__init__(f"episode not found in store: {episode_id}")
        self.episode_id = episode_id


class ChecksumWriteFailure(G0Error):
    pass
