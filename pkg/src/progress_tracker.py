#!/usr/bin/env python3
"""
Progress Tracker
Live progress display for phase-diagram generation and strategy runs using Rich
"""
import threading
from datetime import datetime, timedelta

from rich.columns import Columns
from rich.console import Console, Group
from rich.panel import Panel
from rich.progress import BarColumn, Progress, TaskProgressColumn, TextColumn
from rich.table import Table


class ProgressTracker:
    """Thread-safe statistics plus a rich panel for long-running work"""

    def __init__(self, console=None, title: str = "Processing"):
        self.console = console or Console()
        self.start_time = datetime.now()
        self.title = title

        self.stats = {
            'items_total': 0,
            'items_done': 0,
            'items_cached': 0,
            'items_failed': 0,
            'current_rows': 0,
            'current_s_hat': 0,
            'current_s_true': '',
            'last_l2_error': 0.0,
            'last_item': '',
            'last_error': '',
            'items_per_second': 0.0,
        }

        self.progress = Progress(
            TextColumn(f"[bold blue]{title}"),
            BarColumn(bar_width=40),
            TaskProgressColumn(),
            TextColumn("({task.completed} of {task.total})"),
            console=self.console,
            expand=False
        )
        self.task = None

        self.stats_lock = threading.Lock()

    def update_stat(self, key, value=None, increment=1):
        """Thread-safe update of statistics"""
        with self.stats_lock:
            if value is not None:
                self.stats[key] = value
            else:
                self.stats[key] += increment

            elapsed = (datetime.now() - self.start_time).total_seconds()
            if elapsed > 0:
                self.stats['items_per_second'] = self.stats['items_done'] / elapsed

            if key in ('items_done', 'items_failed', 'items_total') and self.task is not None:
                self.update_progress_bar()

    def initialize_progress_bar(self, total: int):
        with self.stats_lock:
            self.stats['items_total'] = total
            if self.task is None:
                self.task = self.progress.add_task(self.title, total=max(total, 1), completed=0)

    def update_progress_bar(self):
        if self.task is not None:
            self.progress.update(self.task, total=max(self.stats['items_total'], 1),
                                 completed=self.stats['items_done'])

    def get_failure_rate(self) -> float:
        done = self.stats['items_done']
        if done == 0:
            return 0.0
        return self.stats['items_failed'] / done * 100

    def create_stats_table(self):
        table = Table(show_header=True, header_style="bold blue", show_lines=True)
        table.add_column("Metric", style="cyan", width=20)
        table.add_column("Value", style="green", width=15)
        table.add_column("Details", style="yellow", width=40)

        elapsed = datetime.now() - self.start_time
        elapsed_str = str(elapsed).split('.')[0]
        remaining = self.stats['items_total'] - self.stats['items_done']
        if self.stats['items_per_second'] > 0 and remaining > 0:
            eta_str = str(timedelta(seconds=int(remaining / self.stats['items_per_second'])))
        else:
            eta_str = "Calculating..."

        table.add_row("📦 Items", str(self.stats['items_total']), "Cells or frames to process")
        table.add_row("✅ Done", str(self.stats['items_done']), f"Reused from database: {self.stats['items_cached']}")
        table.add_row("❌ Failed", str(self.stats['items_failed']), f"Failure rate: {self.get_failure_rate():.1f}%")
        table.add_row("📏 M_t", str(self.stats['current_rows']), "Measurements for the current frame")
        table.add_row("🎯 ŝ / s", f"{self.stats['current_s_hat']} / {self.stats['current_s_true']}",
                      "Estimated / true sparsity")
        table.add_row("📉 ℓ2 error", f"{self.stats['last_l2_error']:.4g}", "Last foreground reconstruction")
        table.add_row("🏃 Speed", f"{self.stats['items_per_second']:.2f}/s", "Items per second")
        table.add_row("⏱️  Elapsed", elapsed_str, f"ETA: {eta_str}")

        last_item = self.stats['last_item']
        if len(last_item) > 50:
            last_item = last_item[:47] + "..."
        table.add_row("🔗 Last", last_item, "Most recently finished")
        if self.stats['last_error']:
            table.add_row("⚠️  Last error", self.stats['last_error'][:40], "Recorded, run continues")
        return table

    def create_progress_panel(self):
        table = self.create_stats_table()
        if self.stats['items_done'] < self.stats['items_total']:
            status = "🔄 IN PROGRESS"
        elif self.stats['items_failed']:
            status = "⚠️  COMPLETED WITH ERRORS"
        else:
            status = "✅ COMPLETED"

        if self.task is not None:
            self.update_progress_bar()

        content_group = Group(
            self.progress,
            "",
            Columns([table], expand=True)
        )
        return Panel(
            content_group,
            title=f"[bold green]{status}[/bold green]",
            border_style="green",
            padding=(1, 2)
        )
