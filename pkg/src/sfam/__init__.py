"""Scene flow to action maps for RGB-D sequences.

Pipeline stages: RGB-D ingestion and background removal, depth-to-RGB
homography self-calibration, dense primal-dual scene flow, temporal
encoding of flow sequences into action maps (difference/sum accumulation,
rank pooling variants, learned channel transforms), and late score fusion
of per-variant classifier channels.
"""

from .calibrate import (
    Homography,
    PointMatch,
    dlt_homography,
    ransac_homography,
    refine_homography,
    warp_depth,
)
from .classify import (
    ClassifierModel,
    ScoreVector,
    fuse_scores,
    predict_scores,
    train_channel,
)
from .ctk import ChannelKernelStack, CtkTrainState, ctk_backward, ctk_encode, ctk_forward, train_ctk
from .encode import (
    ActionMap,
    SceneFlowMap,
    amplitude_maps,
    build_sfm_sequence,
    lab_maps,
    normalize_to_image,
    sfam_d,
    sfam_s,
)
from .errors import DataError, NumericalError
from .ingest import (
    CameraIntrinsics,
    RgbdFrame,
    RgbdSequence,
    denormalize_depth,
    load_sequence,
    remove_background,
    save_sequence,
)
from .pdflow import (
    MotionField,
    SceneFlowField,
    SolverConfig,
    compute_scene_flow,
    compute_scene_flow_with_trace,
    data_energy,
    project_motion_field,
    regularizer_energy,
)
from .rankpool import (
    PoolingResult,
    RankPoolConfig,
    approximate_rank_pool,
    rank_pool,
    rank_pool_map_sequence,
    time_average_features,
)
from .synth import SyntheticSceneSpec, generate_action_dataset, generate_sequence

__version__ = "0.1.0"
