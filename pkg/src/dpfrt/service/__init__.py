from .store import ServiceConfig, Store
from .app import create_app

__all__ = ["ServiceConfig", "Store", "create_app"]
