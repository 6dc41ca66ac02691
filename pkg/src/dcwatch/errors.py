"""Exception hierarchy.

Every failure the library raises on bad input derives from
:class:`DcwatchError`, so callers (and the fuzz tests) can catch one type.
"""


class DcwatchError(Exception):
    """Base class for all library errors."""


# raster_io
class RasterError(DcwatchError):
    pass


class UnsupportedFeature(RasterError):
    """The file uses a TIFF feature outside the supported subset."""

    def __init__(self, message, tag=None):
        super().__init__(message if tag is None else f"{message} (tag {tag})")
        self.tag = tag


class MalformedFile(RasterError):
    pass


class MissingGeoreference(RasterError):
    pass


# site_registry
class ValidationError(DcwatchError, ValueError):
    """One or more input records failed validation.

    ``issues`` holds ``(record, field, message)`` triples, in document order.
    ``record`` and ``field`` mirror the first issue.
    """

    def __init__(self, issues):
        if isinstance(issues, str):
            issues = [(None, None, issues)]
        self.issues = list(issues)
        record, field, _ = self.issues[0]
        self.record = record
        self.field = field
        super().__init__("; ".join(self.format_issue(i) for i in self.issues))

    @staticmethod
    def format_issue(issue):
        record, field, message = issue
        where = []
        if record is not None:
            where.append(f"record {record}")
        if field is not None:
            where.append(f"field {field!r}")
        return f"{', '.join(where)}: {message}" if where else message


class AoiError(DcwatchError):
    """The AOI cannot be placed on the grid (e.g. projected CRS without map coordinates)."""


# timeseries
class InsufficientData(DcwatchError):
    pass


class RankDeficient(DcwatchError):
    def __init__(self, message, condition):
        super().__init__(f"{message} (condition estimate {condition:.3g})")
        self.condition = condition


class DegenerateAbscissa(DcwatchError):
    pass


class MissingYear(DcwatchError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NonpositiveBaseline(DcwatchError):
    pass


# indices
class GridMismatch(DcwatchError):
    pass


class EmptyMask(DcwatchError):
    pass


# energy
class NoMatches(DcwatchError):
    pass


# report
class NoAnalyses(DcwatchError):
    pass


class EmptySeries(DcwatchError):
    pass
