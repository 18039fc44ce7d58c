"""Convolutional GAN for synthetic binary and continuous health records."""
from .data import RecordMatrix, derive_seed, load_binary_matrix, synth_corpus, write_binary_matrix
from .errors import (ConfigurationError, CorganError, GraphStateError, NumericError, ParseError,
                     ShapeError)
from .models import (ArchitectureDescriptor, ModelBundle, build, default_descriptor, generate,
                     load_checkpoint, save_checkpoint)
from .tensor import Tensor, no_grad
from .training import TrainingConfig, pretrain_autoencoder, train_gan

__version__ = "0.1.0"
