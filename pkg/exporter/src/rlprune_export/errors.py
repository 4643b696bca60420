"""Exporter error types with process exit codes."""


class ExportError(Exception):
    exit_code = 1


class ParseError(ExportError):
    """Source file is not a readable ONNX model."""
    exit_code = 3


class UnsupportedOpError(ExportError):
    """Graph contains operators outside the allowlist."""
    exit_code = 2


class StructureError(ExportError):
    """Graph shape/layout cannot be mapped to the target engine."""
    exit_code = 3


class ParityError(ExportError):
    """Exported model deviates from the source beyond tolerance."""
    exit_code = 4
