"""Bundled example data."""
from importlib.resources import files


def sample_path():
    """Path of a four-week half-hourly CSV with a load and a temperature column.

    The load column has a few gaps and two spikes.
    """
    return files(__name__) / "sample.csv"
