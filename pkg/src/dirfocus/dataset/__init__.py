"""Trials, labels, windows, synthetic data, on-disk datasets and CV splits."""

from .io import DatasetFormatError, load_dataset, read_manifest, save_dataset
from .splits import (
    CvParadigm,
    Fold,
    FoldPlan,
    InfeasibleSplitError,
    LeaveOneAudioTrialOut,
    LeaveOneClassTrialOut,
    LeaveOneMomentTrialOut,
    LeaveOneSubjectOut,
    LeaveOneTrialOut,
    audit_fold_plan,
    make_splits,
)
from .synth import SynthConfig, render_two_mic, speech_like_source, synth_generate
from .trials import (
    DIRECTIONS,
    EEG_CHANNELS,
    EEG_RATE,
    EXCLUDED,
    EegTrial,
    LabelParadigm,
    Sample,
    class_names,
    label_trial,
    segment_trial,
    stack_samples,
)
