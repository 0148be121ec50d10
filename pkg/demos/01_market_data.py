"""
Synthetic markets and state windows
===================================

Build a regime-switching price panel, cut it into train/valid/test splits and
look at the normalised windows the agents see.
"""

import numpy as np

from maps import SplitSpec, make_state, split, synth_market
from maps.market_data import daily_return_pct

# three regimes: slow up, volatile down, slow up again
frame = synth_market(8, 900, [(0.0005, 0.01, 300), (-0.0005, 0.015, 300), (0.0003, 0.01, 300)], seed=1)
print(frame.n_companies, "companies x", frame.n_days, "days,", frame.dates[0], "to", frame.dates[-1])

# a state is the last f closes relative to the first close in the window
s = make_state(frame, c=0, t=100, f=30)
print("window starts at", s.values[0], "and ends at", round(s.values[-1], 4))
print("next-day return %:", round(daily_return_pct(frame, 0, 100), 4))

# a state is invariant to the price level
scaled = make_state(type(frame)(frame.tickers, frame.dates, frame.closes * 7.5), 0, 100, 30)
print("max change under rescaling:", np.abs(scaled.values - s.values).max())

train, valid, test = split(frame, SplitSpec.from_fractions(frame, (0.6, 0.2, 0.2)), f=30)
for name, part in [("train", train), ("valid", valid), ("test", test)]:
    print(f"{name:5s} {part.dates[0]} .. {part.dates[-1]}  ({part.n_days} days)")
