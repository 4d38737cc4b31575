"""Monte Carlo harness, CSV output and the ``haarmono`` command line."""
