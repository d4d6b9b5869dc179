"""Training, evaluation, reports and experiment runners."""
from ioncast.services.evaluation import MetricReport, evaluate, model_forecast, persistence
from ioncast.services.experiments import ABLATION_PLAN, run_ablation, run_date_range_experiment
from ioncast.services.losses import loss_weights, weighted_mse
from ioncast.services.reports import write_report, write_table
from ioncast.services.training import TRAIN_LOG_COLUMNS, TrainResult, train

__all__ = [
    "ABLATION_PLAN",
    "MetricReport",
    "TRAIN_LOG_COLUMNS",
    "TrainResult",
    "evaluate",
    "loss_weights",
    "model_forecast",
    "persistence",
    "run_ablation",
    "run_date_range_experiment",
    "train",
    "weighted_mse",
    "write_report",
    "write_table",
]
