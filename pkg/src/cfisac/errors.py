"""Exception types shared across the simulator."""


class ConfigError(Exception):
    """Invalid configuration value, file, or parameter combination."""


class DegenerateGeometry(Exception):
    """Geometry query is undefined (coincident points, zero distance)."""


class BisectorUndefined(DegenerateGeometry):
    """Bistatic bisector undefined: the two target-to-AP unit vectors are antipodal."""


class RankDeficient(Exception):
    """Matrix has no usable column space for projection or least squares."""
