"""Blind multichannel room-impulse-response estimation toolkit.

Estimates multichannel RIRs from reverberant, noisy speech recorded by a
head-worn microphone array: blind dereverberation extracts a pseudo
reference signal through an MVDR beamformer, a multichannel Wiener filter
identifies the transfer functions, and the artifact-prone late part can be
resynthesized as shaped noise. Includes binaural rendering, room-acoustic
metrics, and a synthetic scenario simulator for evaluation.
"""

from .beamform import (
    AtfSet,
    NoisePsd,
    apply_beamformer,
    estimate_noise_psd,
    mvdr_weights,
)
from .binaural import (
    Brir,
    RenderingFilters,
    auralize,
    compute_emagls_filters,
    render_brir,
)
from .dereverb import GwpeConfig, gwpe_dereverberate
from .io_formats import (
    ResultsTable,
    read_atf_manifest,
    read_wav,
    write_atf_manifest,
    write_wav,
)
from .metrics import (
    ErrorStats,
    RoomParams,
    WaeResult,
    error_stats,
    estimate_drr,
    estimate_room_params,
    estimate_rt,
    wae,
)
from .resynth import (
    ResynthConfig,
    ResynthReport,
    fit_band_decays,
    resynthesize,
    shape_noise,
    split_early_late,
)
from .scenario import (
    ArrayGeometry,
    PipelineResult,
    RoomSpec,
    ScenarioConfig,
    default_glasses_geometry,
    gen_diffuse_babble,
    mix_scenario,
    plausible_early_reflections,
    reestimate,
    run_pipeline,
    synth_atfs,
    synth_ground_truth_rir,
    synthetic_speech,
)
from .signal_core import (
    DEFAULT_OCTAVE_CENTERS,
    DEFAULT_SAMPLE_RATE,
    MultichannelSignal,
    OctaveBands,
    SpectralFrames,
    StftConfig,
    edr,
    istft,
    octave_filter_bank,
    schroeder_edc,
    stft,
)
from .sysid import MwfConfig, RirEstimate, mwf_estimate

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
