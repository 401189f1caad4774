# SPDX-License-Identifier: GPL-3.0
"""
Changelog:

v0.1 - 2026-03-02
 - Robust fixed-point solver for Huber and Student-t weights
 - Sample covariance, quadratic forms and the span check

v0.2 - 2026-05-18
 - Deterministic equivalent e_N(z), spectral gap and interlacing diagnostics
 - Checks of the matrix inversion and rank one perturbation identities
 - G-MUSIC and robust G-MUSIC pseudo-spectra, parabolic angle refinement

v0.3 - 2026-09 (WIP)
 - Monte Carlo harness with per trial random streams and thread pool
 - CSV/JSON reports, JSON experiment configs, robustscatter command line
 - q-space interference iteration with feasible starting points
 - Non-inferiority sign test in the DOA comparison summary
 - Inversion lemma check raises on violation; non-numeric weight parameters are config errors
"""

__version__ = "0.3.0"
