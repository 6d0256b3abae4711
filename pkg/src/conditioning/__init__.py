# Conditioning Module
from .labels import (
    CLEAN_INDEX,
    DomainLabel,
    ExtendedFeature,
    append_label,
    append_label_batch,
    label_block,
    make_label,
    replace_label,
    replace_label_rows,
    split_label,
    split_label_rows,
    validate_label_batch,
)
