from .app import app, create_app
from .state import AppState, resolve_path

__all__ = ["app", "create_app", "AppState", "resolve_path"]
