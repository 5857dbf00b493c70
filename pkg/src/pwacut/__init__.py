"""Cut-based piecewise-affine approximation of multi-dimensional functions."""

__version__ = "0.1.0"

from pwacut.geometry import (
    AngleGenome,
    CutArrangement,
    Domain,
    Hypersphere,
    decode_genome,
    enclosing_hypersphere,
    hyperplane_from_points,
    sigma_of_point,
    spherical_to_cartesian,
)
from pwacut.partition import (
    Region,
    adjacency,
    chambers,
    locate_chamber,
    lp_feasible,
    regions,
)
from pwacut.fitting import (
    AffineMode,
    FitResult,
    SampleSet,
    cost,
    fit_continuous,
    fit_unconstrained,
    sample_domain,
)
from pwacut.model import PwaModel, deserialize, evaluate, serialize, validate
from pwacut.search import SearchConfig, SearchOutcome, approximate

__all__ = [
    "AffineMode",
    "AngleGenome",
    "CutArrangement",
    "Domain",
    "FitResult",
    "Hypersphere",
    "PwaModel",
    "Region",
    "SampleSet",
    "SearchConfig",
    "SearchOutcome",
    "adjacency",
    "approximate",
    "chambers",
    "cost",
    "decode_genome",
    "deserialize",
    "enclosing_hypersphere",
    "evaluate",
    "fit_continuous",
    "fit_unconstrained",
    "hyperplane_from_points",
    "locate_chamber",
    "lp_feasible",
    "regions",
    "sample_domain",
    "serialize",
    "sigma_of_point",
    "spherical_to_cartesian",
    "validate",
]
