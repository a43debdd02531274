# Scalar renewal sequence R_n proportional to n^-3.5 (tail exponent 2.5).
generator beta=2.5 terms=1000000
