"""Scalar queries: parsing, evaluation, interval bounds, images and preimages."""
from .expr import Query, QueryDomainError
from .inversion import (DEFAULT_EPS_IMG, DEFAULT_MAX_DEPTH, DomainSpec, SetApprox,
                        check_unrelated, image_interval, is_nonconstant_on, preimage)
from .parser import QuerySyntaxError, parse_query

__all__ = [
    "Query", "QueryDomainError", "QuerySyntaxError", "parse_query",
    "DomainSpec", "SetApprox", "image_interval", "preimage",
    "check_unrelated", "is_nonconstant_on", "DEFAULT_EPS_IMG", "DEFAULT_MAX_DEPTH",
]
