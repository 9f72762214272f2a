"""hdflow: exact Higgs-de Rham flow computations on the line over Z/p^m.

Subpackages build up in layers: ringmath (exact coefficient and polynomial
arithmetic), curves (charts and gluing data for the projective and affine
line), bundles (vector bundles with Higgs fields or connections), cartier
(the char-p inverse Cartier transform and p-curvature), filtration
(semistability and the canonical filtration), flow (iteration, periodicity,
endomorphism packing, relative Frobenius), witt (truncated-Witt lifts of the
transform), serialize/corpus/cli (I/O, instance generation, command line).
"""

__version__ = "0.1.0"
