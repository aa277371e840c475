"""Name encoders behind one interface.

``load_encoder`` picks the backend from the model id: ids of the form
``test:<dim>`` select a deterministic offline encoder (hash-seeded
Gaussian projections) used by the test suite and anywhere model weights
are unavailable; anything else is loaded as a Hugging Face checkpoint.
All encoders return unit-normalized float32 vectors, and a name embeds to
the same vector regardless of the batch it arrives in.
"""

from __future__ import annotations

import hashlib
import logging

import numpy as np

logger = logging.getLogger(__name__)

# Entity names are short; this matches the established convention for
# biomedical name encoders.
DEFAULT_MAX_LENGTH = 25


class Encoder:
    dim: int
    model_id: str

    def encode(self, names: list[str]) -> np.ndarray:
        """(len(names), dim) float32, rows unit-norm."""
        raise NotImplementedError


def _normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ValueError("encoder produced a zero vector")
    return (matrix / norms).astype(np.float32)


class HashEncoder(Encoder):
    """Deterministic stand-in: one seeded Gaussian draw per name.

    Not a semantic embedding; it exists so the service, the export path,
    and every protocol test run without model weights.
    """

    def __init__(self, dim: int = 64, model_id: str | None = None):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim
        self.model_id = model_id or f"test:{dim}"

    def _one(self, name: str) -> np.ndarray:
        if not name:
            raise ValueError("cannot embed an empty name")
        seed = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim)

    def encode(self, names: list[str]) -> np.ndarray:
        return _normalize(np.stack([self._one(n) for n in names]))


class TransformerEncoder(Encoder):
    """Pretrained name encoder via transformers.

    Pooling is the first-token representation by default (the published
    usage for biomedical name encoders), switchable to mean pooling.
    Inference runs in eval mode with no gradients; names longer than
    ``max_length`` tokens are truncated and counted in the log.
    """

    def __init__(
        self,
        model_id: str,
        pooling: str = "first",
        max_length: int = DEFAULT_MAX_LENGTH,
        device: str = "cpu",
    ):
        if pooling not in ("first", "mean"):
            raise ValueError(f"unknown pooling {pooling!r}")
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - optional extra
            raise RuntimeError(
                "transformers/torch are required for pretrained encoders; "
                "install the 'model' extra"
            ) from exc
        self._torch = torch
        self.model_id = model_id
        self.pooling = pooling
        self.max_length = max_length
        self.device = device
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id).to(device).eval()
        self.dim = int(self.model.config.hidden_size)
        self.truncated = 0

    def encode(self, names: list[str]) -> np.ndarray:
        torch = self._torch
        full_lengths = [len(self.tokenizer.encode(n)) for n in names]
        truncated = sum(1 for length in full_lengths if length > self.max_length)
        if truncated:
            self.truncated += truncated
            logger.warning("%d of %d names truncated to %d tokens", truncated, len(names), self.max_length)
        batch = self.tokenizer(
            names,
            padding=True,
            truncation=True,
            max_length=self.max_length,
            return_tensors="pt",
        ).to(self.device)
        with torch.no_grad():
            hidden = self.model(**batch).last_hidden_state
        if self.pooling == "first":
            pooled = hidden[:, 0, :]
        else:
            mask = batch["attention_mask"].unsqueeze(-1)
            pooled = (hidden * mask).sum(1) / mask.sum(1)
        return _normalize(pooled.cpu().numpy().astype(np.float64))


def load_encoder(model_id: str, pooling: str = "first") -> Encoder:
    if model_id.startswith("test:"):
        return HashEncoder(dim=int(model_id.split(":", 1)[1]), model_id=model_id)
    return TransformerEncoder(model_id, pooling=pooling)
