class CodecError(Exception):
    """Base class for every error raised by nfcodec."""


class DataError(CodecError, ValueError):
    """Input data is unusable (bad PLY, wrong bit depth, empty cloud...)."""


class PlyParseError(DataError):
    def __init__(self, msg, line=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            msg = f"{msg} ({', '.join(where)})"
        super().__init__(msg)
        self.line = line
        self.offset = offset


class PlySchemaError(DataError):
    pass


class OctreeFormatError(DataError):
    pass


class DecodeError(CodecError):
    """Bitstream is malformed, truncated or internally inconsistent."""
