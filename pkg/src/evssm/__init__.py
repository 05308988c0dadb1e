"""Continuous-time diagonal state-space sequence layers with a retargetable
discretization step, anti-aliasing (bandlimit masking, H2 tail norm), HiPPO
initialization, parallel-scan recurrences, an event-camera front end, and a
toy trainer for frequency-generalization experiments."""

from .discretize import DiscreteDiagSSM, bilinear, discretize_ssm, effective_step, zoh
from .events import (
    BBox,
    BinnedTensor,
    Event,
    EventStream,
    FilterProfile,
    bin_events,
    filter_bboxes,
    parse_events,
    serialize_events,
    synthesize_events,
)
from .hippo import ContinuousDiagSSM, HippoLegS, HippoNormal, diagonalize_normal, init_ssm, legs_matrix, legs_normal
from .numerics import HermitianEigResult, NumericsError, fft_convolve, hermitian_eig, log_grid
from .regfreq import H2Config, h2_tail_norm, transfer_fn
from .scan import ScanElement, combine, scan_parallel, scan_sequential
from .ssm import (
    BandlimitConfig,
    SsmLayerOutput,
    apply_convolutional,
    apply_recurrent,
    bandlimit_mask,
    effective_frequency,
    materialize_kernel,
    retarget,
)
from .trainer import (
    FrequencySweepReport,
    ToyTask,
    TrainConfig,
    eval_frequency_sweep,
    make_toy_dataset,
    rnn_baseline_forward,
    train,
)

__version__ = "0.1.0"
