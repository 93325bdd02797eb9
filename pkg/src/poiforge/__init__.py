"""Mine point-of-interest polygons from address texts and locations."""
from .model import AddressRecord, ConfigError, InputError, PipelineConfig, PoiPolygon

__all__ = ["AddressRecord", "ConfigError", "InputError", "PipelineConfig", "PoiPolygon"]
__version__ = "0.1.0"
