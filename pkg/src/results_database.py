#!/usr/bin/env python3
"""
SQLite Results Database
Completed phase-diagram cells (for resuming generation), experiment runs and
per-frame metrics including wall-clock timings
"""
import json
import sqlite3
import threading
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple


class ResultsDatabase:
    """Manages SQLite storage for phase-diagram cells and strategy runs"""

    def __init__(self, db_path: str = "results/arcs_results.db", quiet: bool = False):
        self.db_path = str(db_path)
        self.quiet = quiet
        self.db_lock = threading.Lock()
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self._init_database()

    def _init_database(self):
        """Initialize database with required tables"""
        with self.db_lock:
            conn = sqlite3.connect(self.db_path)
            try:
                cursor = conn.cursor()

                # One row per finished Monte Carlo cell
                cursor.execute("""
                    CREATE TABLE IF NOT EXISTS phase_cells (
                        diagram_key TEXT NOT NULL,
                        row_index INTEGER NOT NULL,
                        col_index INTEGER NOT NULL,
                        success_rate REAL NOT NULL,
                        completed_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                        PRIMARY KEY (diagram_key, row_index, col_index)
                    )
                """)

                cursor.execute("""
                    CREATE TABLE IF NOT EXISTS runs (
                        id INTEGER PRIMARY KEY AUTOINCREMENT,
                        strategy TEXT NOT NULL,
                        config_json TEXT,
                        status TEXT DEFAULT 'running',
                        started_at TIMESTAMP,
                        finished_at TIMESTAMP,
                        frame_count INTEGER DEFAULT 0
                    )
                """)

                cursor.execute("""
                    CREATE TABLE IF NOT EXISTS frame_metrics (
                        id INTEGER PRIMARY KEY AUTOINCREMENT,
                        run_id INTEGER NOT NULL,
                        t INTEGER NOT NULL,
                        s_true INTEGER,
                        s_hat INTEGER NOT NULL,
                        m_total INTEGER NOT NULL,
                        l2_error REAL,
                        wall_time REAL,
                        error_message TEXT,
                        FOREIGN KEY (run_id) REFERENCES runs(id)
                    )
                """)
                cursor.execute("CREATE INDEX IF NOT EXISTS idx_frame_metrics_run_id ON frame_metrics(run_id)")

                conn.commit()
                if not self.quiet:
                    print("✅ Results database initialized")
            except Exception as e:
                print(f"❌ Error initializing results database: {e}")
                conn.rollback()
                raise
            finally:
                conn.close()

    def get_phase_cells(self, diagram_key: str) -> Dict[Tuple[int, int], float]:
        """Completed cells of a diagram, keyed by (row_index, col_index)"""
        with self.db_lock:
            conn = sqlite3.connect(self.db_path)
            try:
                cursor = conn.cursor()
                cursor.execute("""
                    SELECT row_index, col_index, success_rate FROM phase_cells
                    WHERE diagram_key = ?
                """, (diagram_key,))
                return {(i, j): rate for i, j, rate in cursor.fetchall()}
            except Exception as e:
                print(f"❌ Error reading phase-diagram cells: {e}")
                return {}
            finally:
                conn.close()

    def save_phase_cell(self, diagram_key: str, row_index: int, col_index: int, success_rate: float) -> bool:
        with self.db_lock:
            conn = sqlite3.connect(self.db_path)
            try:
                cursor = conn.cursor()
                cursor.execute("""
                    INSERT OR REPLACE INTO phase_cells (diagram_key, row_index, col_index, success_rate)
                    VALUES (?, ?, ?, ?)
                """, (diagram_key, int(row_index), int(col_index), float(success_rate)))
                conn.commit()
                return True
            except Exception as e:
                print(f"❌ Error saving phase-diagram cell ({row_index}, {col_index}): {e}")
                conn.rollback()
                return False
            finally:
                conn.close()

    def start_run(self, strategy: str, config: Optional[dict] = None) -> Optional[int]:
        """Register a run and return its id"""
        with self.db_lock:
            conn = sqlite3.connect(self.db_path)
            try:
                cursor = conn.cursor()
                cursor.execute("""
                    INSERT INTO runs (strategy, config_json, status, started_at)
                    VALUES (?, ?, 'running', ?)
                """, (strategy, json.dumps(config, default=str, sort_keys=True) if config else None,
                      datetime.now().isoformat()))
                conn.commit()
                return cursor.lastrowid
            except Exception as e:
                print(f"❌ Error registering run: {e}")
                conn.rollback()
                return None
            finally:
                conn.close()

    def record_frame(self, run_id: int, t: int, s_true: Optional[int], s_hat: int, m_total: int,
                     l2_error: Optional[float], wall_time: float, error_message: Optional[str] = None) -> bool:
        with self.db_lock:
            conn = sqlite3.connect(self.db_path)
            try:
                cursor = conn.cursor()
                cursor.execute("""
                    INSERT INTO frame_metrics
                    (run_id, t, s_true, s_hat, m_total, l2_error, wall_time, error_message)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?)
                """, (run_id, t, s_true, s_hat, m_total, l2_error, wall_time, error_message))
                cursor.execute("UPDATE runs SET frame_count = frame_count + 1 WHERE id = ?", (run_id,))
                conn.commit()
                return True
            except Exception as e:
                print(f"❌ Error recording frame {t} of run {run_id}: {e}")
                conn.rollback()
                return False
            finally:
                conn.close()

    def finish_run(self, run_id: int, status: str = 'completed') -> bool:
        with self.db_lock:
            conn = sqlite3.connect(self.db_path)
            try:
                cursor = conn.cursor()
                cursor.execute("UPDATE runs SET status = ?, finished_at = ? WHERE id = ?",
                               (status, datetime.now().isoformat(), run_id))
                conn.commit()
                return cursor.rowcount > 0
            except Exception as e:
                print(f"❌ Error finishing run {run_id}: {e}")
                conn.rollback()
                return False
            finally:
                conn.close()

    def get_run_summary(self, run_id: int) -> Dict:
        """Run row plus per-frame averages"""
        with self.db_lock:
            conn = sqlite3.connect(self.db_path)
            try:
                cursor = conn.cursor()
                cursor.execute("SELECT strategy, status, frame_count FROM runs WHERE id = ?", (run_id,))
                row = cursor.fetchone()
                if row is None:
                    return {}
                summary = {'strategy': row[0], 'status': row[1], 'frame_count': row[2]}
                cursor.execute("""
                    SELECT AVG(m_total), AVG(l2_error), SUM(wall_time),
                           SUM(CASE WHEN error_message IS NOT NULL THEN 1 ELSE 0 END)
                    FROM frame_metrics WHERE run_id = ?
                """, (run_id,))
                mean_m, mean_error, total_time, errors = cursor.fetchone()
                summary.update({'mean_m_total': mean_m, 'mean_l2_error': mean_error,
                                'total_wall_time': total_time or 0.0, 'frame_errors': errors or 0})
                return summary
            except Exception as e:
                print(f"❌ Error reading run {run_id}: {e}")
                return {}
            finally:
                conn.close()

    def list_runs(self) -> List[Tuple[int, str, str, int]]:
        """(id, strategy, status, frame_count) for every run"""
        with self.db_lock:
            conn = sqlite3.connect(self.db_path)
            try:
                cursor = conn.cursor()
                cursor.execute("SELECT id, strategy, status, frame_count FROM runs ORDER BY id")
                return cursor.fetchall()
            except Exception as e:
                print(f"❌ Error listing runs: {e}")
                return []
            finally:
                conn.close()

    def close(self):
        """Connections are opened per call; nothing to release"""
        pass
