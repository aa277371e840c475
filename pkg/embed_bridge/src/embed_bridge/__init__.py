"""Serve biomedical name embeddings over HTTP and export them to files."""

from .encoders import Encoder, HashEncoder, TransformerEncoder, load_encoder
from .export import export_file, read_dictionary_names
from .service import create_app

__version__ = "0.1.0"
