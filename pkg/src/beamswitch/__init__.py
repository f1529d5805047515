"""beamswitch: mmWave adaptive beam-switching simulator and online-learning benchmark."""

from .agents import (
    DqnAgent,
    DqnAgentConfig,
    DqnPolicy,
    GreedyPolicy,
    UcbPolicy,
    double_dqn_targets,
    dqn_select_actions,
    evaluate,
    greedy_actions,
    train_loop,
    train_ucb,
)
from .bandit import UcbState, bandit_reward
from .config import (
    ExperimentConfig,
    config_hash,
    derive_rng,
    desk_preset,
    paper_preset,
    parse_config,
)
from .env import (
    BlockageParams,
    EnvConfig,
    Environment,
    RewardParams,
    StepResult,
    UserState,
    blockage_step,
    build_observation,
    compute_reward,
    f_snr,
    init_env,
    mobility_step,
)
from .metrics import (
    MetricAccumulator,
    RunSummary,
    accuracy,
    reliability,
    service_interruptions,
    stability_score,
    summarize,
)
from .neural import (
    Adam,
    DuelingQNetwork,
    adam_step,
    copy_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .phy import (
    ChannelModelConfig,
    Codebook,
    LinkBudget,
    effective_channel,
    heuristic_beam_index,
    make_dft_codebook,
    path_loss_umi_db,
    sample_fading,
    snr_db,
    steering_vector,
    throughput_mbps,
)
from .replay import PriorityBuffer, SumTree, Transition
from .runner import benchmark_inference, run_experiment, sweep_blockage

__version__ = "0.1.0"
