from hypothesis import settings

# Vectorized geometry is fast, but the first call per process pays numpy warm-up.
settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")
