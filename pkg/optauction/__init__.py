"""
OptAuction - optimal deterministic auctions for correlated priors.

Exact two-bidder solver (min-cut over the marginal profit conflict graph),
continuous density discretisation, n-bidder brute force and best-pair
approximation, duality certificates and hardness instance generation.
"""

__version__ = "1.0.0"

SCHEMA_VERSION = "optauction/1"
