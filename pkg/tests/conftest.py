import threadpoolctl

# One BLAS thread for the whole session: deterministic numerics and no
# thread wakeup latency on the many small solves the tests run.
_LIMITER = threadpoolctl.threadpool_limits(limits=1)
