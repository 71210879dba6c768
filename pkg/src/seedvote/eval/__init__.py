from seedvote.eval.cv import CvCell, CvResult, SampleOutcome, run_cv
from seedvote.eval.metrics import MetricReport, accuracy, js_divergence, macro_f1, metric_report, tv_distance
from seedvote.eval.report import emit_report
from seedvote.eval.synth import SynthConfig, SynthDataset, generate_synthetic, label_mixture

__all__ = [
    "CvCell",
    "CvResult",
    "MetricReport",
    "SampleOutcome",
    "SynthConfig",
    "SynthDataset",
    "accuracy",
    "emit_report",
    "generate_synthetic",
    "js_divergence",
    "label_mixture",
    "macro_f1",
    "metric_report",
    "run_cv",
    "tv_distance",
]
