"""
SQLite persistence for solve reports.

One row in runs per CLI invocation, one row in solve_reports per solver run
on one instance.
"""
import logging
import sqlite3
import time
from typing import Any, Dict, List, Optional

from solve_report import SolveReport

logger = logging.getLogger(__name__)

DEFAULT_DB_PATH = "memflow.db"

REPORT_COLUMNS = (
    "run_id", "instance_index", "seed", "solver", "energy", "flow_total", "constant",
    "augmentations", "reconstructions", "reconstruction_fallbacks", "stored_values_peak",
    "transient_values_peak", "wall_time_ms", "num_vertices", "num_edges", "num_labels",
)


def create_tables(conn: sqlite3.Connection):
    """Create database tables if they don't exist"""
    c = conn.cursor()

    c.execute('''CREATE TABLE IF NOT EXISTS runs (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        started_at REAL,
        completed_at REAL,
        command TEXT,
        instance_count INTEGER,
        error_count INTEGER
    )''')

    c.execute('''CREATE TABLE IF NOT EXISTS solve_reports (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        run_id INTEGER,
        instance_index INTEGER,
        seed INTEGER,
        solver TEXT,
        energy INTEGER,
        flow_total INTEGER,
        constant INTEGER,
        augmentations INTEGER,
        reconstructions INTEGER,
        reconstruction_fallbacks INTEGER,
        stored_values_peak INTEGER,
        transient_values_peak INTEGER,
        wall_time_ms REAL,
        num_vertices INTEGER,
        num_edges INTEGER,
        num_labels INTEGER,
        FOREIGN KEY (run_id) REFERENCES runs (id)
    )''')

    conn.commit()


class ResultsStore:
    """
    Context manager around one results database.

    with ResultsStore("memflow.db", "compare") as db:
        db.add_report(report, instance_index=0, seed=3, model=model)
    """

    def __init__(self, db_path: str = DEFAULT_DB_PATH, command: str = ""):
        self.db_path = db_path
        self.command = command
        self.conn: Optional[sqlite3.Connection] = None
        self.run_id: Optional[int] = None
        self.instance_count = 0
        self.error_count = 0

    def __enter__(self) -> "ResultsStore":
        self.conn = sqlite3.connect(self.db_path)
        create_tables(self.conn)
        c = self.conn.cursor()
        c.execute('''INSERT INTO runs (started_at, command, instance_count, error_count)
                     VALUES (?, ?, 0, 0)''', (time.time(), self.command))
        self.run_id = c.lastrowid
        self.conn.commit()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            self.error_count += 1
        c = self.conn.cursor()
        c.execute('''UPDATE runs SET completed_at = ?, instance_count = ?, error_count = ?
                     WHERE id = ?''',
                  (time.time(), self.instance_count, self.error_count, self.run_id))
        self.conn.commit()
        self.conn.close()
        self.conn = None
        return False

    def add_report(self, report: SolveReport, instance_index: int = 0, seed: Optional[int] = None,
                   model=None):
        values = (
            self.run_id, instance_index, seed, report.solver, report.energy, report.flow_total,
            report.constant, report.augmentations, report.reconstructions,
            report.reconstruction_fallbacks, report.stored_values_peak, report.transient_values_peak,
            report.wall_time_ms,
            model.num_vertices if model is not None else None,
            model.num_edges if model is not None else None,
            model.num_labels if model is not None else None,
        )
        placeholders = ", ".join("?" for _ in REPORT_COLUMNS)
        self.conn.execute(
            f"INSERT INTO solve_reports ({', '.join(REPORT_COLUMNS)}) VALUES ({placeholders})", values)
        self.conn.commit()
        self.instance_count = max(self.instance_count, instance_index + 1)

    def record_error(self):
        self.error_count += 1


def load_reports(db_path: str = DEFAULT_DB_PATH) -> List[Dict[str, Any]]:
    """Every stored report as a dict, oldest first"""
    conn = sqlite3.connect(db_path)
    conn.row_factory = sqlite3.Row
    try:
        create_tables(conn)
        rows = conn.execute(f"SELECT id, {', '.join(REPORT_COLUMNS)} FROM solve_reports ORDER BY id").fetchall()
    finally:
        conn.close()
    return [dict(row) for row in rows]


def load_runs(db_path: str = DEFAULT_DB_PATH) -> List[Dict[str, Any]]:
    conn = sqlite3.connect(db_path)
    conn.row_factory = sqlite3.Row
    try:
        create_tables(conn)
        rows = conn.execute("SELECT * FROM runs ORDER BY id").fetchall()
    finally:
        conn.close()
    return [dict(row) for row in rows]
