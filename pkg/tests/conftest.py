import threadpoolctl
from hypothesis import HealthCheck, settings

# tiny matrices thrash on BLAS threading; one thread is much faster here
threadpoolctl.threadpool_limits(limits=1)

settings.register_profile(
    "engine",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("engine")
