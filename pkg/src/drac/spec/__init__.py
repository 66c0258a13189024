from drac.spec.graph import CyclicDependency, service_graph
from drac.spec.model import (
    ArchitectureSpec,
    AttributeSpec,
    Binding,
    Condition,
    DracSpec,
    Duration,
    RequiredAttribute,
    ServiceSpec,
    norm,
)
from drac.spec.parser import (
    DuplicateName,
    MalformedDuration,
    SpecSyntaxError,
    load_architecture,
    parse_architecture,
    render_architecture,
)
from drac.spec.validate import Finding, ValidationReport, validate_architecture

__all__ = [
    "ArchitectureSpec", "AttributeSpec", "Binding", "Condition", "CyclicDependency", "DracSpec",
    "Duration", "DuplicateName", "Finding", "MalformedDuration", "RequiredAttribute", "ServiceSpec",
    "SpecSyntaxError", "ValidationReport", "load_architecture", "norm", "parse_architecture",
    "render_architecture", "service_graph", "validate_architecture",
]
