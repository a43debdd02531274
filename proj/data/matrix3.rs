# 3x3 renewal sequence, R_n = p_n K_n with random row-stochastic K_n and p_n ~ n^-4.
generator beta=3 terms=1000 dim=3 seed=11
