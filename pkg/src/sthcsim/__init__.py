"""Spatio-temporal holographic correlator simulator.

Optical 3D convolution for video classification: spectral conv primitives
with a brute-force oracle, the holographic optics chain, a trainable hybrid
network, dataset tooling, and operational timing arithmetic.
"""

from .spectral_engine import (
    FeatureVolume,
    FftConvBank,
    KernelSet,
    KernelShape,
    VideoVolume,
    direct_conv3d,
    fft_conv3d,
    fft_conv3d_bank,
    forward_st_fft,
    inverse_st_fft,
)
from .sthc_optics import (
    EchoTiming,
    GratingField,
    OpticalConvEngine,
    OpticalParams,
    RecordingPulse,
    SignedKernelPair,
    SlmFrameLayout,
    check_bandwidth,
    decompose_kernel,
    diffract_and_readout,
    echo_time,
    make_recording_pulse,
    optical_conv_layer,
    optical_conv_maps,
    plan_slm_layout,
    quantize_slm,
    record_grating,
    validate_layout,
)
from .cnn_pipeline import (
    ClassifierHead,
    EvalReport,
    TrainConfig,
    TrainResult,
    evaluate,
    export_head,
    export_kernels,
    forward_digital,
    forward_hybrid,
    import_head,
    import_kernels,
    param_count,
    train,
)
from .data_io import (
    ClipSpec,
    DatasetManifest,
    ManifestEntry,
    load_clip,
    load_samples,
    parse_manifest,
    split_by_subject,
    synth_dataset,
    write_dataset,
)
from .timing_model import (
    SegmentationPlan,
    ThroughputReport,
    frame_load_time,
    segmentation_plan,
    throughput_report,
    verify_coverage,
)

__version__ = "0.1.0"
