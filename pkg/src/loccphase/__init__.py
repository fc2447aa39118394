"""Simulator of local-operations phase-measurement protocols for
few-particle interferometry with abelian gauge coupling."""

from .errors import (
    BosonCapExceeded,
    CountMismatch,
    DegenerateLikelihood,
    EmptyPostselection,
    ForbiddenMeasurement,
    InconsistentGradient,
    InvalidMode,
    LoccPhaseError,
    MissingPath,
    MixedSpeciesTransform,
    NonSquareMatrix,
    OpenChain,
    ParseError,
    QuadratureNonConvergence,
    RegistryMismatch,
    ScenarioError,
    SectorMismatch,
    SingularityOnPath,
    SuperselectionViolation,
    SupportMisestimate,
    Unsolvable,
)
from .estimation import (
    CountTable,
    PhaseEstimate,
    circular_distance,
    extract_phase_from_settings,
    mle_delta_phi,
    sample,
    sample_distribution,
    wrap_phase,
)
from .fock import (
    BOSON,
    FERMION,
    REGISTER_PHOTON,
    REGISTER_PRIMARY,
    REGISTER_REFERENCE,
    ModeDescriptor,
    ModeRegistry,
    OutcomeDistribution,
    QuantumState,
    annihilate,
    apply_ladder,
    apply_linear_mode_transform,
    create,
    inner_product,
    measure_occupation,
    postselect,
)
from .gauge import (
    FluxSchedule,
    GaugePotential,
    OrientedSegment,
    PolynomialScalarField,
    PureGaugePotential,
    ScalarField,
    SolenoidPotential,
    SpacetimeEvent,
    SpacetimePath,
    SumPotential,
    ZeroPotential,
    gauge_transformed,
    line_phase,
    loop_phase,
)
from .loopdecomp import (
    Assignment,
    Bracket,
    LoopDecomposition,
    MatchingPermutation,
    decompose_phase,
    evaluate_decomposition,
    find_matching_permutation,
    phase_difference_formal_sum,
)
from .protocols import (
    EmissionBranch,
    EmissionScenario,
    EmissionSource,
    PhasePair,
    ProtocolResult,
    TomographyResult,
    annihilation_protocol,
    annihilation_registry,
    build_emission_state,
    check_number_projector,
    compute_interference_sign,
    number_superposition_projector,
    general_outcome_distribution,
    general_registry,
    interference_phase_pairs,
    n_party_registry,
    n_party_single_particle,
    tomography_run,
    two_party_phase_protocol,
    two_party_registry,
)
from .superselection import (
    RuleSet,
    SectorLabel,
    Verdict,
    check_observable,
    sector_of,
    state_sector,
)

__version__ = "0.1.0"
