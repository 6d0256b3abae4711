# Metrics Module
from .evaluation import (
    NOISY_SYSTEM,
    EvalItem,
    EvaluationResult,
    evaluate_pairs,
    items_from_manifest,
    score_item,
    summarize,
    system_output_path,
    write_evaluation,
)
from .pesq_provider import (
    PESQ_RANGE,
    CommandPesqProvider,
    CsvPesqProvider,
    NullPesqProvider,
    PackagePesqProvider,
    PesqProvider,
    StubPesqProvider,
    make_pesq_provider,
)
from .quality import (
    CompositeCoefficients,
    CompositeScores,
    FrameScores,
    MetricsConfig,
    composite_scores,
    llr,
    llr_frames,
    seg_snr,
    seg_snr_frames,
    wss,
    wss_frames,
    wss_from_band_energies,
)
