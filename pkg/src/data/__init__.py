# Data Module
from .manifest import (
    CLEAN_DOMAIN,
    CorpusManifest,
    ManifestHeader,
    UtteranceRecord,
    ValidationReport,
    read_manifest,
    speaker_held_out,
    validate_manifest,
    write_manifest,
)
from .sampler import (
    FeatureStore,
    UnpairedBatch,
    draw_unpaired_indices,
    plan_epoch,
    sample_unpaired_batch,
    steps_per_epoch,
)
from .synthesis import MANIFEST_NAME, SynthConfig, count_table, synthesize_corpus
from .toy_corpus import ToyCorpus, write_toy_corpus
