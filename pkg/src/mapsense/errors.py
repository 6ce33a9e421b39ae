"""Exception types shared across the pipeline."""


class MapSenseError(Exception):
    """Base class for all mapsense errors."""


class TraceRejected(MapSenseError):
    """A raw trace violated one of the admission invariants."""


class NonMonotonicTime(TraceRejected):
    """Timestamps are not strictly increasing."""


class OutOfRangeField(TraceRejected):
    """A sample field lies outside its physical range."""


class TooShort(TraceRejected):
    """Trace has fewer than two samples."""


class DegenerateOrientation(MapSenseError):
    """Gravity and magnetic field are (nearly) parallel; no rotation can be built."""


class EmptySeries(MapSenseError):
    """Smoothing was asked for on an empty or single-point series."""


class EmptyNetwork(MapSenseError):
    """Road network has no edges to snap against."""


class AbstainMissingChannel(MapSenseError):
    """A classifier requires a sensor channel that is absent from the trace."""


class InsufficientTraces(MapSenseError):
    """No approach at the intersection has enough traces for regulator inference."""


class InvalidScenario(MapSenseError):
    """Simulator scenario fails its structural checks."""


class ProvenanceMismatch(MapSenseError):
    """Evaluation inputs do not come from the same scenario."""


class BadInput(MapSenseError):
    """Malformed input file; carries file/line context for the CLI."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:" if line is None else f"{path}:{line}: "
        super().__init__(f"{where}{message}")
