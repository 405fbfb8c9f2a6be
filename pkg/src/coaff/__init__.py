"""Organisation-level co-affiliation networks, gravity models and citation impact."""

from coaff.ingest import (
    AffiliationRegistry,
    AuthorEntry,
    DataError,
    PublicationRecord,
    PublicationSet,
    ValidationReport,
    load_publications,
    load_registry,
    multi_affiliation_share,
    validate,
)
from coaff.linkgen import (
    CoAffLink,
    LinkSet,
    generate_all,
    pairwise_links,
    scheme_units,
    stability_filter,
)
from coaff.network import OrgNetwork, build_network, filter_view

__version__ = "0.1.0"

__all__ = [
    "AffiliationRegistry",
    "AuthorEntry",
    "CoAffLink",
    "DataError",
    "LinkSet",
    "OrgNetwork",
    "PublicationRecord",
    "PublicationSet",
    "ValidationReport",
    "build_network",
    "filter_view",
    "generate_all",
    "load_publications",
    "load_registry",
    "multi_affiliation_share",
    "pairwise_links",
    "scheme_units",
    "stability_filter",
    "validate",
]
