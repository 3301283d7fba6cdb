"""
File: dgkd/controllers/results_controller.py
Description: Result emission (CSV tables, JSON mirror, resolved config, manifest) and
             recomputation of the tables from stored plan reports.
"""

import logging
from datetime import datetime, timezone
from pathlib import Path

from dgkd.controllers.config_controller import ConfigController
from dgkd.controllers.metrics_controller import MetricsController
from dgkd.models.report import STATUS_COMPLETED
from dgkd.utils.errors import DGKDError, NoReportsError

logger = logging.getLogger("dgkd.results")

STAGES_FILE = "stages.csv"
SUMMARY_FILE = "summary.csv"
REPORTS_FILE = "reports.json"
CONFIG_FILE = "config.resolved.json"
MANIFEST_FILE = "manifest.json"
REPORT_DIR = "report"


def replica_dir(out_dir, seed, plan_name):
    """Directory of one plan replica: ``<out>/seed-<s>/<plan>``."""
    return Path(out_dir) / f"seed-{seed}" / plan_name


class ResultsController:
    """
    Controller for writing and re-deriving result tables.
    All methods are static and can be called without instantiation.
    """

    @staticmethod
    def tables(reports):
        """
        Build the stage table and the comparison table (per-seed rows, then mean/std rows).

        Returns:
            tuple[list[dict], list[ComparisonRow]]
        """
        stage_rows = MetricsController.stage_rows(reports)
        seed_rows = MetricsController.summarize_plans(reports)
        return stage_rows, seed_rows + MetricsController.aggregate_rows(seed_rows)

    @staticmethod
    def emit_results(reports, out_dir, config=None):
        """
        Write every table needed to re-derive the results without re-training.

        Files:
            stages.csv           one row per stage per seed
            summary.csv          one row per plan per seed, plus mean/std rows over seeds
            reports.json         JSON mirror of both tables, same field names
            config.resolved.json resolved configuration, when given
            manifest.json        every file above with its size, the seeds, and a timestamp

        Args:
            reports (list[PlanReport]): Completed plan reports
            out_dir (str | Path): Destination directory
            config (ExperimentConfig, optional): Configuration to snapshot

        Returns:
            dict: The manifest

        Raises:
            NoReportsError: If ``reports`` is empty
            DGKDError: If a file cannot be written
        """
        if not reports:
            raise NoReportsError("no reports found")
        out_dir = Path(out_dir)
        stage_rows, summary_rows = ResultsController.tables(reports)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            written = [
                MetricsController.write_csv(stage_rows, out_dir / STAGES_FILE),
                MetricsController.write_csv(summary_rows, out_dir / SUMMARY_FILE),
                MetricsController.write_json(
                    {"stages": stage_rows, "summary": [row.to_dict() for row in summary_rows]},
                    out_dir / REPORTS_FILE,
                ),
            ]
            if config is not None:
                written.append(ConfigController.write_resolved_config(config, out_dir / CONFIG_FILE))

            manifest = {
                "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "seeds": sorted({report.seed for report in reports}),
                "plans": sorted({report.name for report in reports}),
                "files": [{"path": path.name, "bytes": path.stat().st_size} for path in written],
            }
            MetricsController.write_json(manifest, out_dir / MANIFEST_FILE)
        except OSError as exc:
            raise DGKDError(f"cannot write results to {out_dir}: {exc}") from exc

        logger.info("results_written | out=%s | reports=%d | files=%d", out_dir, len(reports), len(written) + 1)
        return manifest

    @staticmethod
    def collect_reports(out_dir):
        """
        Load every completed plan_report.json under an output directory.

        Failed (partial) reports are skipped with a warning; the ``report``
        subdirectory is never read.
        """
        out_dir = Path(out_dir)
        reports = []
        if not out_dir.is_dir():
            return reports
        for path in sorted(out_dir.rglob("plan_report.json")):
            if REPORT_DIR in path.relative_to(out_dir).parts[:1]:
                continue
            report = MetricsController.load_plan_report(path)
            if report.status != STATUS_COMPLETED:
                logger.warning("report_skipped | path=%s | status=%s", path, report.status)
                continue
            reports.append(report)
        return reports

    @staticmethod
    def recompute_report(out_dir):
        """
        Rebuild the tables from stored plan reports into ``<out_dir>/report``.

        Raises:
            NoReportsError: If no completed plan report is found
        """
        reports = ResultsController.collect_reports(out_dir)
        if not reports:
            raise NoReportsError(f"no reports found in {out_dir}")
        return ResultsController.emit_results(reports, Path(out_dir) / REPORT_DIR)
