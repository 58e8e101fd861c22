"""HTTP service wrapping the store and the submission pipeline."""

from philately.service.app import app_from_config, create_app

__all__ = ["app_from_config", "create_app"]
