"""Testing monotonicity of a signal in the Gaussian white noise model.

Local Haar-type coefficients ``theta_{h,t}`` of a nondecreasing function are
nonnegative; the tests here look for significantly negative estimates at one
or many bandwidths.
"""

__version__ = "0.1.0"
