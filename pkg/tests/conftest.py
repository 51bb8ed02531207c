import os

# Pin BLAS to one thread before numpy loads: bit-exact reruns need a fixed
# reduction order.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")
