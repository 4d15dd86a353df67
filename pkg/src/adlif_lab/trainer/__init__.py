"""Surrogate-gradient BPTT training of recurrent spiking networks."""
from .config import ConfigError, ExperimentConfig, LayerConfig, NetworkConfig, SurrogateConfig, TrainConfig, load_config
from .losses import burn_in_steps, class_scores, loss_and_grad, target_probability
from .network import (
    ForwardTrace,
    Network,
    NumericalDivergence,
    clip_params,
    flush_subnormal,
    init_params,
    load_network,
    save_network,
    slayer_grad,
    smooth_spike,
)
from .optim import Adam, clip_by_global_norm, global_norm
from .train import (
    AutoregressResult,
    Dataset,
    GroundTruthPredictor,
    TrainResult,
    autoregress_eval,
    evaluate,
    train,
    unstable_neuron_count,
)
