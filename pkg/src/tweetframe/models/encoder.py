"""Text encoders: pretrained checkpoints via transformers, or a small from-scratch BERT.

``model_name`` is either a Hugging Face id / local checkpoint directory, or
``scratch:<size>``, which builds a randomly initialised BERT with a
word-level vocabulary learned from the fitting texts.  The scratch
encoders exist so the training loop can run offline; they are not a
substitute for the pretrained checkpoint when reproducing results.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable

import torch
from torch import nn

log = logging.getLogger(__name__)

SCRATCH_SIZES = {
    "tiny": dict(hidden_size=64, num_hidden_layers=2, num_attention_heads=2, intermediate_size=128),
    "mini": dict(hidden_size=256, num_hidden_layers=4, num_attention_heads=4, intermediate_size=1024),
}
VARIANT_BY_WIDTH = {768: "base", 1024: "large"}

_URL = re.compile(r"https?://\S+|www\.\S+")


class CheckpointError(RuntimeError):
    """Encoder checkpoint or tokenizer cannot be loaded."""


@dataclass
class Encoder:
    model: nn.Module
    tokenizer: object
    hidden_size: int
    name: str

    @property
    def variant(self) -> str:
        return VARIANT_BY_WIDTH.get(self.hidden_size, "custom")


def prepare_text(text: str, strip_urls: bool = False) -> str:
    if strip_urls:
        text = _URL.sub("", text)
    return " ".join(str(text).split())


def _scratch_tokenizer(texts: Iterable[str], max_vocab: int = 30000):
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors, trainers
    from transformers import PreTrainedTokenizerFast

    tok = Tokenizer(models.WordLevel(unk_token="[UNK]"))
    tok.normalizer = normalizers.Sequence([normalizers.NFKC(), normalizers.Lowercase()])
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.WordLevelTrainer(vocab_size=max_vocab, special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]"])
    tok.train_from_iterator(list(texts), trainer=trainer)
    tok.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        special_tokens=[("[CLS]", tok.token_to_id("[CLS]")), ("[SEP]", tok.token_to_id("[SEP]"))],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="[UNK]", pad_token="[PAD]", cls_token="[CLS]", sep_token="[SEP]"
    )


def build_scratch_encoder(size: str, texts: Iterable[str], max_length: int = 128) -> Encoder:
    from transformers import BertConfig, BertModel

    if size not in SCRATCH_SIZES:
        raise CheckpointError(f"unknown scratch size {size!r}; choose from {sorted(SCRATCH_SIZES)}")
    tokenizer = _scratch_tokenizer(texts)
    dims = SCRATCH_SIZES[size]
    cfg = BertConfig(vocab_size=len(tokenizer), max_position_embeddings=max_length + 2, **dims)
    model = BertModel(cfg, add_pooling_layer=False)
    return Encoder(model, tokenizer, dims["hidden_size"], f"scratch:{size}")


def load_encoder(model_name: str, texts: Iterable[str] = (), max_length: int = 128) -> Encoder:
    """Load the encoder named by ``model_name``; ``texts`` only feed scratch vocabularies."""
    if model_name.startswith("scratch:"):
        return build_scratch_encoder(model_name.split(":", 1)[1], texts, max_length)
    from transformers import AutoModel, AutoTokenizer

    tok_kwargs = {"normalization": True} if "bertweet" in model_name.lower() else {}
    try:
        try:
            tokenizer = AutoTokenizer.from_pretrained(model_name, **tok_kwargs)
        except TypeError:
            tokenizer = AutoTokenizer.from_pretrained(model_name)
        try:
            model = AutoModel.from_pretrained(model_name, add_pooling_layer=False)
        except TypeError:
            model = AutoModel.from_pretrained(model_name)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot load encoder checkpoint {model_name!r}: {exc}") from exc
    hidden = getattr(model.config, "hidden_size", None) or getattr(model.config, "dim")
    return Encoder(model, tokenizer, int(hidden), model_name)


class TweetClassifier(nn.Module):
    """Encoder -> start-token embedding -> dropout -> linear map to 3 scores."""

    def __init__(self, encoder: nn.Module, hidden_size: int, dropout_p: float = 0.1, num_labels: int = 3):
        super().__init__()
        self.encoder = encoder
        self.dropout = nn.Dropout(dropout_p)
        self.head = nn.Linear(hidden_size, num_labels)

    def embed(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        out = self.encoder(input_ids=input_ids, attention_mask=attention_mask)
        return out.last_hidden_state[:, 0]

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        return self.head(self.dropout(self.embed(input_ids, attention_mask)))


def resolve_device(name: str = "auto") -> torch.device:
    import os

    name = os.environ.get("TWEETFRAME_DEVICE", name) if name == "auto" else name
    if name == "auto":
        if torch.cuda.is_available():
            return torch.device("cuda")
        return torch.device("cpu")
    return torch.device(name)
