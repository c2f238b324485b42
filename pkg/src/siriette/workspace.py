"""On-disk table store used by the command line.

A data directory holds ``catalog.json`` plus one ``<name>.tbl`` file per
table: a sequence of serialized batches, each preceded by its u64 length.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

from .columnar import Table, deserialize_batch, serialize_batch
from .dtypes import Schema
from .errors import MissingTable, TableExists

CATALOG = "catalog.json"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")


class Workspace:
    def __init__(self, root):
        self.root = Path(root)

    def _catalog(self) -> dict:
        path = self.root / CATALOG
        if not path.exists():
            return {"version": FORMAT_VERSION, "tables": {}}
        return json.loads(path.read_text())

    def _write_catalog(self, doc: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.root / (CATALOG + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        tmp.replace(self.root / CATALOG)

    def names(self) -> list:
        return sorted(self._catalog()["tables"])

    def __contains__(self, name: str) -> bool:
        return name in self._catalog()["tables"]

    def info(self, name: str) -> dict:
        try:
            return self._catalog()["tables"][name]
        except KeyError:
            raise MissingTable(f"table {name!r} is not loaded in {self.root}") from None

    def save(self, table: Table, replace: bool = False) -> dict:
        doc = self._catalog()
        if table.name in doc["tables"] and not replace:
            raise TableExists(f"table {table.name!r} is already loaded")
        self.root.mkdir(parents=True, exist_ok=True)
        file = f"{table.name}.tbl"
        with open(self.root / file, "wb") as f:
            for b in table.batches:
                data = serialize_batch(b)
                f.write(_LEN.pack(len(data)))
                f.write(data)
        entry = {"schema": table.schema.to_json(), "rows": table.num_rows, "file": file}
        doc["tables"][table.name] = entry
        self._write_catalog(doc)
        return entry

    def load(self, name: str) -> Table:
        entry = self.info(name)
        data = (self.root / entry["file"]).read_bytes()
        batches, pos = [], 0
        while pos < len(data):
            (n,) = _LEN.unpack_from(data, pos)
            pos += _LEN.size
            batches.append(deserialize_batch(data[pos:pos + n]))
            pos += n
        return Table(name, Schema.from_json(entry["schema"]), batches)
