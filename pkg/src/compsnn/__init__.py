"""compsnn: composite-signal analysis of 2D navigation trajectories.

The pipeline turns raw (t, x, y) traces into three complementary
representations (a per-region graph signal, its graph Fourier transform,
and a 10-channel time series), trains three small networks plus an
aggregator to predict navigator attributes, and exports activation maps
showing where in space and time the signal discriminates.
"""

from .density import (
    DensityGrid,
    SegmentLabels,
    build_density_grid,
    find_local_maxima,
    invert_density,
    segment_centroids,
    segment_grid,
    watershed,
)
from .errors import CompsnnError
from .experiment import (
    EvalReport,
    compare_models,
    evaluate,
    run_benchmark,
    train,
)
from .explain import ActivationMap, export_activation_map, render_svg
from .features import (
    DemographicSchema,
    FeatureConfig,
    FeatureSeries,
    FieldSpec,
    RawTrajectory,
    compute_feature_series,
    encode_demographics,
    finite_difference,
    validate_trajectory,
)
from .graph import (
    Spectrum,
    TrajectoryGraph,
    aggregate_node_signal,
    build_graph,
    eigendecompose,
    gft,
    igft,
    laplacian,
    map_trajectory_to_nodes,
)
from .model import (
    CompSnnConfig,
    apply_spectral_filter,
    forward_cnn,
    forward_compsnn,
    forward_gcnn,
    forward_graph_mlp,
    forward_singlenn,
    init_params,
    load_checkpoint,
    loss,
    save_checkpoint,
    spectral_filter_bank,
)
from .synth import DEFAULT_WORLD, Rect, SyntheticWorld, generate_synthetic_dataset

__version__ = "0.1.0"
