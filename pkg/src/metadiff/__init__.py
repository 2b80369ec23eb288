"""metadiff: a diffusion-based meta-optimizer for few-shot classification.

Classifier weights are treated as the denoising variable of a diffusion
model: a gradient-conditioned noise predictor is trained with the standard
diffusion objective, and adapting to a new task means deterministically
denoising Gaussian-initialized weights under support-set conditioning.
Ships with plain/momentum gradient-descent baselines, a synthetic
feature-space task world, and an episodic evaluation harness.
"""

from .baselines import gda_adapt, momentum_gda_adapt
from .classifier import ClassifierWeights, TaskEpisode, logits, predict, support_loss, support_loss_grad
from .evaluation import EvalReport, confidence_interval, convergence_report, evaluate
from .meta import DenoiseTrajectory, TrainStepRecord, sample_trajectory, sample_weights, train, train_step
from .schedule import DiffusionSchedule, build_schedule, decomposed_denoise_step, denoise_step, q_sample
from .unet import NoisePredictorParams, init_params, loss_and_param_grads, predict_noise
from .world import ClassWorld, auxiliary_dataset, make_world, sample_episode, target_weights

__version__ = "0.1.0"
