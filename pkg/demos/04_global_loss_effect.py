"""
What the global loss does to agent agreement
============================================

Train the same ensemble twice from the same seed, once with lam = 0 (pure TD
learning) and once with lam = 0.8. The global term pushes each agent's
confidences away from the others', which shows up as a lower average
absolute correlation on validation states.
"""

from maps import SplitSpec, TrainConfig, make_ensemble, split, synth_market, train

frame = synth_market(20, 1500, [(0.0005, 0.01, 500), (-0.0005, 0.015, 500), (0.0003, 0.01, 500)], seed=0)
train_frame, valid_frame, _ = split(frame, SplitSpec.from_fractions(frame), f=30)

ITERS = 3000  # the acceptance suite uses 20000
for lam in (0.0, 0.8):
    agents = make_ensemble(4, 30, seed=0)
    log = train(agents, train_frame, TrainConfig(maxiter=ITERS, lam=lam, seed=0, probe_every=1000, log_every=1000),
                probe_frame=valid_frame)
    trace = ", ".join(f"{c:.3f}" for _, c in log.probes)
    print(f"lam={lam}: mean |corr| at probes = {trace}")
