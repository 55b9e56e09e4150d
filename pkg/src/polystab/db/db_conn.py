"""~/db/
DuckDB connection for the results store

- RESULTS_FILE: file name of the results database inside an --out directory
- DB: one connection to a results database; read-only connections never create the file
- init_db: runs schema.sql on a DB
"""
from __future__ import annotations

from pathlib import Path

import duckdb

from polystab.errors import UsageError

RESULTS_FILE = "results.duckdb"
MEMORY = ":memory:"


class DB:
    def __init__(self, path, read_only: bool = False):
        self.path = Path(path)
        self.read_only = read_only
        self.conn = self.connect()

    @classmethod
    def in_dir(cls, out_dir, read_only: bool = False) -> DB:
        return cls(Path(out_dir) / RESULTS_FILE, read_only)

    def connect(self):
        if str(self.path) == MEMORY:
            return duckdb.connect(MEMORY)
        if self.read_only:
            if not self.path.is_file():
                raise UsageError(f"no results database at {self.path}")
            return duckdb.connect(str(self.path), read_only=True)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        return duckdb.connect(str(self.path))

    def close(self):
        self.conn.close()

    def __enter__(self) -> DB:
        return self

    def __exit__(self, *exc):
        self.close()


def init_db(db: DB):
    schema_path = Path(__file__).with_name("schema.sql")
    sql = schema_path.read_text(encoding="utf-8")
    db.conn.execute(sql)
