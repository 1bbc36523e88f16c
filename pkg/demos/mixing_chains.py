"""beta-mixing coefficients of Markov chains and the independent-block swap."""
from noisyrisk.mixing import BlockScheme, MixingChain, agreement_functional, beta_coefficients, block_swap_gap

for stay in (0.5, 0.8, 0.95):
    prof = beta_coefficients(MixingChain.two_state(stay), 6)
    print(f"two-state stay={stay}: beta_1..6 =", " ".join(f"{b:.4f}" for b in prof.beta))
print("iid chain:", beta_coefficients(MixingChain.iid([0.3, 0.7]), 3).beta)

# swapping the odd blocks of a sticky path for independent copies costs at most (mu - 1) beta_a
chain = MixingChain.two_state(0.9)
for a in (1, 2, 4, 8, 16):
    r = block_swap_gap(agreement_functional, chain, BlockScheme(a, 8), 20_000, seed=a)
    print(f"a={a:2d} gap={r.gap:.4f} (exact {r.exact_gap:.4f}) bound={r.bound:.4f} passed={r.passed}")
