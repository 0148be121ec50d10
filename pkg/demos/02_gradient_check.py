"""
Checking the combined loss gradient
===================================

Each agent minimises (1 - lam) * TD loss + lam * sum of squared correlations
with the other agents' target confidences. Backprop runs through batch norm;
here it is compared with central finite differences.
"""

import numpy as np

from maps import make_ensemble, sync_target
from maps.replay import BatchMatrix
from maps.training import agent_loss, target_views

rng = np.random.default_rng(0)
K, beta, f = 3, 8, 5
agents = make_ensemble(K, f, seed=0, base_sizes=(4,))
for a in agents:
    sync_target(a)
    for W in a.online.weights:
        W += rng.normal(0, 0.05, W.shape)  # so online and target differ

batch = BatchMatrix(
    states=rng.normal(0, 0.05, (beta, f)),
    next_states=rng.normal(0, 0.05, (beta, f)),
    actions=rng.integers(-1, 2, (K, beta)),
    rewards=rng.normal(0, 1, (K, beta)),
    company=np.zeros(beta, int),
    t=np.arange(beta),
    r_vec=np.arange(beta),
)
conf, nxt = target_views(agents, batch)
H = 1e-4

for lam in (0.0, 0.5, 0.8, 1.0):
    local, glob, total, grads, _ = agent_loss(agents, 1, batch, conf, nxt, lam, 0.99, update_stats=False)
    worst = 0.0
    for name, p in agents[1].online.trainable().items():
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + H
            up = agent_loss(agents, 1, batch, conf, nxt, lam, 0.99, update_stats=False)[2]
            p[idx] = orig - H
            down = agent_loss(agents, 1, batch, conf, nxt, lam, 0.99, update_stats=False)[2]
            p[idx] = orig
            num = (up - down) / (2 * H)
            worst = max(worst, abs(num - grads[name][idx]) / max(abs(num), abs(grads[name][idx]), 1e-6))
    print(f"lam={lam:.1f}  local={local:8.4f}  global={glob:.4f}  total={total:8.4f}  max rel err={worst:.1e}")
