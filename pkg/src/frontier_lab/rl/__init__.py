from .encoder import (DEFAULT_ENCODER, DEFAULT_PREPROCESS, EncoderSpec,
                      MapEncoder, PreprocessSpec, bilinear_resize, max_pool,
                      preprocess_map)
from .sac import (DiscreteSac, Observation, ReplayBuffer, SacConfig,
                  Transition)
from .checkpoint import load_checkpoint, save_checkpoint
from .train import (FrontierEnv, SacPlanner, observation_from_view,
                    terminal_observation, train)

__all__ = [
    "DEFAULT_ENCODER", "DEFAULT_PREPROCESS", "EncoderSpec", "MapEncoder",
    "PreprocessSpec", "bilinear_resize", "max_pool", "preprocess_map",
    "DiscreteSac", "Observation", "ReplayBuffer", "SacConfig", "Transition",
    "load_checkpoint", "save_checkpoint",
    "FrontierEnv", "SacPlanner", "observation_from_view",
    "terminal_observation", "train",
]
