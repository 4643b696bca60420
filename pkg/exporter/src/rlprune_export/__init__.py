"""ONNX-subset to rlpmodel exporter with parity verification."""

from .convert import (ALLOWED_OPS, ImportSpec, ParityReport, convert,
                      export_checkpoint, verify_parity)
from .errors import (ExportError, ParityError, ParseError, StructureError,
                     UnsupportedOpError)

__version__ = "0.1.0"

__all__ = [
    "ALLOWED_OPS", "ExportError", "ImportSpec", "ParityError", "ParityReport",
    "ParseError", "StructureError", "UnsupportedOpError", "convert",
    "export_checkpoint", "verify_parity", "__version__",
]
