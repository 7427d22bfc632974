"""Carbon footprint estimation from sparse disclosures, documents and images.

Submodules:
    core       shared vocabulary types: feature vectors, inventories, factors
    ingestion  parsers, writers and fixtures for the supported input formats
    knn        similarity index and weighted Gaussian footprint estimates
    efgen      emission factor generalization for grid mixes and materials
    lcia       inventory-to-impact assessment against a factor database
    vision     board image scoring, detection adapters, physical dimensions
    agent      critic/stakeholders self-play loop with budgets and replay
    harness    metrics, cross validation, sweeps and synthetic worlds
    cli        the carbonforge command line tool
"""

from . import agent, cli, core, efgen, harness, ingestion, knn, lcia, vision
from .core import (
    CFBreakdown,
    DataAbstraction,
    EmissionFactor,
    EstimateDistribution,
    FeatureVector,
    InventoryEntry,
    LifeCycleInventory,
    MISSING,
    ProductRecord,
    completeness,
    validate_inventory,
)

__version__ = "0.1.0"

__all__ = [
    "CFBreakdown",
    "DataAbstraction",
    "EmissionFactor",
    "EstimateDistribution",
    "FeatureVector",
    "InventoryEntry",
    "LifeCycleInventory",
    "MISSING",
    "ProductRecord",
    "completeness",
    "validate_inventory",
    "agent",
    "cli",
    "core",
    "efgen",
    "harness",
    "ingestion",
    "knn",
    "lcia",
    "vision",
    "__version__",
]
