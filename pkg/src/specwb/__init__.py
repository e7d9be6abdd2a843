"""specwb: a spectral workbench for hyperspectral libraries and cubes.

Core pieces: the Speclib container (spectra + wavelength grid + supplementary
info), CSV/ENVI I/O with a chunked pipeline for cubes larger than memory,
noise filters, derivatives and sensor resampling, continuum removal with
absorption-feature properties, a band-math parser plus index catalog,
red-edge parameters, all-pairs normalized-ratio screening with per-pair GLM
statistics, and linear spectral unmixing. The `specwb` command line exposes
every stage; see README.md.
"""

from specwb._kernels import BACKEND as kernel_backend
from specwb.continuum import (
    AbsorptionFeature,
    BandDepthSpeclib,
    ContinuumLine,
    FeatureProperties,
    continuum_transform,
    convex_hull,
    extract_features,
    feature_properties,
    segmented_upper_hull,
)
from specwb.errors import (
    ExpressionError,
    FitError,
    FormatError,
    GridError,
    SelectionError,
    SpecwbError,
)
from specwb.glm import normal_cdf, wald_p_value
from specwb.indices import INDEX_CATALOG, eval_index, expr_to_string, parse_index, vegindex
from specwb.nri import (
    GlmStatsGrid,
    MlDataset,
    NriCube,
    build_ml_dataset,
    correlation_cutoff_filter,
    export_correlogram,
    export_ml_matrix,
    glm_nri,
    nri_all_pairs,
)
from specwb.preprocess import (
    FilterSpec,
    SensorBandSpec,
    derivative,
    fwhm_to_sigma,
    noise_filter,
    spectral_resample,
)
from specwb.rededge import RedEdgeResult, red_edge
from specwb.spectral_io import (
    ArrayCubeReader,
    ArrayCubeWriter,
    ChunkPlan,
    EnviCubeReader,
    EnviCubeWriter,
    EnviHeader,
    plan_chunks,
    process_chunked,
    read_csv_speclib,
    read_envi_cube,
    write_csv_speclib,
    write_envi_cube,
)
from specwb.speclib import (
    MaskRanges,
    SIColumn,
    SITable,
    Speclib,
    WavelengthGrid,
    spad_to_chlorophyll,
)
from specwb.unmix import AbundanceResult, unmix

__version__ = "0.1.0"
