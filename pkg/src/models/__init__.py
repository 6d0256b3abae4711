# Models Module
from .checkpoint import Checkpoint, CheckpointMetadata, load_checkpoint, save_checkpoint
from .networks import Discriminator, Generator, ModelSet, score_grid_shape
from .specs import DiscriminatorSpec, GeneratorSpec
