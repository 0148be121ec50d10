"""Cooperative multi-agent deep Q-learning for diversified portfolios."""
from .agents import (
    Agent,
    AgentSpec,
    build_ensemble,
    epsilon_greedy,
    greedy_action,
    load_ensemble,
    make_ensemble,
    positional_confidence,
    q_values,
    save_ensemble,
    sync_target,
)
from .backtest import (
    BacktestReport,
    PortfolioVector,
    agent_portfolio,
    aggregate_portfolio,
    confidence_correlation_probe,
    portfolio_return,
    return_correlation_matrix,
    run_backtest,
    sharpe_ratio,
)
from .baselines import mean_reversion_signal, momentum_signal, run_baseline, signals_to_portfolio
from .market_data import (
    MarketFrame,
    SplitSpec,
    StateWindow,
    daily_return_pct,
    load_prices,
    make_state,
    split,
    synth_market,
)
from .replay import BatchMatrix, Episode, MemoryBuffer
from .training import TrainConfig, TrainingLog, generate_episodes, immediate_reward, total_loss, train

__version__ = "0.1.0"
