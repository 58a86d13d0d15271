from glm_subsampling.cli.main import main

__all__ = ['main']
