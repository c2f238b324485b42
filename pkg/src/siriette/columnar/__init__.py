from .batch import DEFAULT_BATCH_ROWS, Batch, Table, concat_batches
from .column import NARROW_LIMIT, Column, SelectionVector, gather, narrow_indices
from .csvio import read_csv, write_csv
from .serde import deserialize_batch, serialize_batch

__all__ = [
    "DEFAULT_BATCH_ROWS",
    "NARROW_LIMIT",
    "Batch",
    "Column",
    "SelectionVector",
    "Table",
    "concat_batches",
    "deserialize_batch",
    "gather",
    "narrow_indices",
    "read_csv",
    "serialize_batch",
    "write_csv",
]
