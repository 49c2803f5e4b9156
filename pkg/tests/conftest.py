from hypothesis import HealthCheck, settings

# First calls into the geometry kernels pay numba's JIT compile cost, so
# wall-clock deadlines are meaningless here.
settings.register_profile(
    "rotdet",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("rotdet")
