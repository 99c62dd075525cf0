"""Real-time spectrum sensing by sweeping FFT chunks through a shallow CNN.

Modules: ``signal_synth`` (synthetic OFDM, interference, channel),
``datasets`` (labelled chunk corpora), ``sweep`` (FFT, partition, batched
classification, fusion), ``nn`` (numpy CNN engine), ``trainer``,
``stream`` (IQ mirror and queues), ``bench`` (latency) and ``cli``.
"""

from .errors import (
    BuildError,
    ConfigError,
    ContractError,
    CorruptFileError,
    DataError,
    FormatError,
    SweepSenseError,
    ValidationError,
    VersionError,
)
from .signal_synth import (
    ChannelSpec,
    InterferenceSpec,
    LabeledRecord,
    OfdmConfig,
    Waveform,
    apply_channel,
    generate_ofdm_burst,
    inject_interference,
    synthesize_capture,
)
from .sweep import (
    ChunkBatch,
    SensingReport,
    SpectrumFrame,
    SweepConfig,
    classify_batch,
    combine,
    fft_stage,
    partition,
    sense_capture,
)

__version__ = "0.1.0"
