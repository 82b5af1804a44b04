"""ontogen: refine scored knowledge-graph triples into a domain ontology."""

from .model import (
    KnowledgeGraph,
    OntologySchema,
    ScoredTriple,
    Term,
    Triple,
    connected_components,
    ontology_from_triples,
)

__version__ = "0.1.0"

__all__ = [
    "KnowledgeGraph",
    "OntologySchema",
    "ScoredTriple",
    "Term",
    "Triple",
    "connected_components",
    "ontology_from_triples",
    "__version__",
]
