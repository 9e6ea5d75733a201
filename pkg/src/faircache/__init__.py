"""Fair sharing of a materialized-view cache among tenants."""
__version__ = "0.1.0"
