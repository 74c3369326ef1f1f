"""Disclosure audit for group-anonymized datasets.

The toolkit mines per-signature linkage probabilities directly from a
published QI/sensitive table pair by solving a system of simultaneous
nonlinear equations, then evaluates every tuple's probability of linking to
a target sensitive value through weighted possible-world enumeration and
flags violations of the 1/r robustness bound.
"""

__version__ = "0.1.0"

from .anonymize import AnonymizerConfig, anonymize, check_l_diversity
from .audit import AuditConfig, BreachReport, QuerySpec, audit, delta_metric, query_error
from .dataset import (
    AGroup,
    AnonymizedDataset,
    DatasetConfig,
    Schema,
    Signature,
    Table,
    group_signature_members,
    load_anonymized,
    load_table,
    make_signature,
    match,
    save_anonymized,
)
from .errors import DataError, NotLEligibleError, ToolError, WorldExplosionError
from .lattice import AdmittedSignatures, SampleGate, enumerate_admitted, required_sample_size
from .mining import (
    EquationSystem,
    MinedKnowledge,
    SolverConfig,
    build_system,
    mine_all,
    solve,
)
from .worlds import (
    DEFAULT_WORLD_CAP,
    GlobalDistribution,
    WorldSet,
    enumerate_worlds,
    expected_count,
    linkage_vector,
    member_factors,
    tuple_linkage,
    weigh_worlds,
)
