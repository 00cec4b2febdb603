"""apertop: topological invariants of tight-binding operators on Delone sets."""

__version__ = "0.1.0"

from .delone import (
    Box,
    DeloneError,
    DeloneSet,
    Patch,
    enumerate_patches,
    generate_amorphous,
    generate_cut_and_project,
    generate_periodic,
    patch_at,
    perturb,
    translate,
    verify_delone,
)
from .operators import (
    CovariantKernel,
    MagneticCocycle,
    OperatorSample,
    check_2cocycle,
    convolve,
    derivation,
    position_operators,
    represent,
    s_cover_frame,
    sigma,
)
from .hamiltonians import (
    SpectralData,
    SymmetryOperator,
    exp_hopping,
    fermi_projection,
    fermi_unitary,
    kitaev_chain,
    nn_hofstadter,
    qwz_model,
    smooth_gap_function,
    spectral_gap,
    ssh_chain,
    with_internal,
)
from .invariants import (
    InvariantReport,
    chern_even,
    fredholm_even,
    fredholm_odd,
    residue_check,
    sobolev_norm,
    trace_per_unit_volume,
    weak_invariant,
    winding_odd,
    z2_index,
)
from .boundary import (
    HalfSpaceModel,
    boundary_invariant,
    boundary_unitary,
    bulk_boundary_check,
    half_space,
    zero_mode_count,
)
from .pattern_tree import (
    ChoicePair,
    PatternTree,
    build_tree,
    choice_pair,
    commutator_norm,
    pb_operator,
    quasi_hom_pairing,
    ultrametric,
)
from .cuntz_pimsner import (
    OrderedLattice,
    degree,
    factorize,
    imprimitivity_defect,
    left_inner,
    order_lattice,
    right_inner,
)
from .kasparov import (
    FiberSpace,
    anticommutator_estimate,
    build_fiber_space,
    log_commutator_scan,
    operator_t,
    operator_x,
    product_spectrum,
)
