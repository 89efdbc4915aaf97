from embed_sidecar.service import HashBackend, MiniLMBackend, create_app

__version__ = "0.1.0"

__all__ = ["HashBackend", "MiniLMBackend", "create_app", "__version__"]
