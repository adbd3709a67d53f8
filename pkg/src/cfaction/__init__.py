"""Exact-rational simulation of a rank-one tower action of Z x (R x| Z/2)."""

from .group import (
    CompactSubgroup,
    GroupElement,
    IDENTITY,
    conjugate,
    conjugate_witness,
    invert,
    is_central,
    multiply,
    phi,
    phi_pair,
    project_level,
)
from .boxset import (
    Box,
    BoxSet,
    DiscreteDist,
    combine,
    dist_l1,
    invert_set,
    is_subset_mod_null,
    measure,
    product,
    pushforward,
    spread,
    translate,
)
from .tower import (
    ConstructionError,
    PartitionBudgetError,
    SpacerMap,
    Tower,
    TowerParams,
    XiPartition,
    build_level_sets,
    build_params,
    certify_balanced,
    certify_discr_meas,
    certify_djlem,
    core_set,
    dirac_comb,
    mainlem_windows,
    sample_spacer_map,
    verify_cf_conditions,
    xi_partition,
)
from .cfspace import (
    Cylinder,
    DepthExhausted,
    MeasureContext,
    PointExpansion,
    TailExhausted,
    act,
    embed_point,
    factor_key,
    involution_apply,
    normalize_point,
    point_in_cylinder,
    sample_point,
)
from .lab import (
    AveragingWindow,
    ExperimentReport,
    balanced_product_check,
    build_window,
    joining_average,
    lemwm_crosscheck,
    mainlem_density_check,
    mixing_scan,
    shulman_diagnostic,
    techlem_check,
)

__version__ = "0.1.0"
