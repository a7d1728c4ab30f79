"""Configuration, campaign orchestration, reports and the command line."""

from .campaign import PruneCampaignState, run_campaign, train_base
from .config import ExperimentConfig, load_config, parse_config
from .report import report_rows, write_report

__all__ = [
    "ExperimentConfig", "PruneCampaignState", "load_config", "parse_config", "report_rows",
    "run_campaign", "train_base", "write_report",
]
