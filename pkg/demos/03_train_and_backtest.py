"""
Training a small ensemble and trading it
========================================

Four agents with different depths learn from a shared replay buffer, then the
averaged, L1-normalised portfolio is traded on held-out days next to the
momentum and mean-reversion rules.
"""

from maps import SplitSpec, TrainConfig, make_ensemble, run_backtest, run_baseline, split, synth_market, train

frame = synth_market(10, 700, [(0.0008, 0.01, 350), (-0.0006, 0.012, 350)], seed=3)
train_frame, valid_frame, test_frame = split(frame, SplitSpec.from_fractions(frame), f=30)

agents = make_ensemble(4, 30, seed=3)
print("hidden sizes:", [a.spec.hidden_sizes for a in agents])

# a larger step than the default so something is learned in a few seconds
cfg = TrainConfig(maxiter=2000, lr=1e-4, lam=0.8, seed=3, probe_every=500, log_every=500)
log = train(agents, train_frame, cfg, probe_frame=valid_frame)
for it, corr in log.probes:
    print(f"iteration {it:5d}: mean |corr| of agent confidences = {corr:.3f}")

reports = [run_backtest(agents, test_frame, 30)]
for kind in ("MOM", "MR"):
    reports.append(run_baseline(kind, test_frame, start=29))
print(f"\n{'strategy':8s} {'ann. return %':>14s} {'Sharpe':>8s} {'final wealth':>13s}")
for rep in reports:
    print(f"{rep.name:8s} {rep.annualized_return:14.2f} {rep.sharpe:8.2f} {rep.wealth[-1]:13.2f}")
