"""Self-describing binary model checkpoints.

Layout: 4 magic bytes, little-endian uint32 format version, a
length-prefixed UTF-8 JSON header (algorithm tag, dimensions, run
configuration, vocabulary words), then each matrix as row-major 64-bit
little-endian floats in a fixed per-algorithm order, and a trailing
SHA-256 digest over everything before it.  Raw float bytes give bit-exact
round trips.

Error classification on load is structural first: the expected total size
is derived from the header, so a short file reports truncation rather
than the checksum mismatch it also implies; the digest is verified before
the matrices are interpreted.
"""

import hashlib
import json
import struct

import numpy as np

from .config import RunConfig
from .corpus import Vocabulary
from .emissions import EmissionStats
from .engine import FiniteMode, GlobalStats, HdpMode, TrainedModel
from .hdp import HdpPosterior
from .special import BetaParams, GammaParams

MAGIC = b"SCVM"
FORMAT_VERSION = 1

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "ModelFormatError",
    "VersionMismatchError",
    "TruncatedFileError",
    "ChecksumError",
    "save_model",
    "load_model",
]


class ModelFormatError(ValueError):
    """The file is not a readable model checkpoint."""


class VersionMismatchError(ModelFormatError):
    """The checkpoint was written by an incompatible format version."""


class TruncatedFileError(ModelFormatError):
    """The file ends before the header-declared content does."""


class ChecksumError(ModelFormatError):
    """The trailing digest does not match the file contents."""


def _matrix_shapes(algorithm: str, num_states: int, vocab_size: int):
    k, v = num_states, vocab_size
    if algorithm == "svi-hmm":
        return [("trans_posterior", (k + 1, k)), ("emit_posterior", (k, v))]
    shapes = [("trans_counts", (k + 1, k)), ("token_stats", (k, v))]
    if algorithm == "scvi-hdphmm":
        shapes += [
            ("stick_u", (k,)),
            ("stick_v", (k,)),
            ("concentrations", (4,)),
            ("geo_alpha_pi", (k,)),
        ]
    return shapes


def _gather_arrays(model: TrainedModel) -> dict:
    if model.algorithm == "svi-hmm":
        return {
            "trans_posterior": model.rows.trans_posterior,
            "emit_posterior": model.rows.emit_posterior,
        }
    arrays = {
        "trans_counts": model.stats.trans_counts,
        "token_stats": model.stats.emissions.token_stats,
    }
    if model.algorithm == "scvi-hdphmm":
        post = model.mode.hdp
        arrays.update(
            stick_u=np.asarray(post.sticks.u, float),
            stick_v=np.asarray(post.sticks.v, float),
            concentrations=np.array(
                [post.alpha.a, post.alpha.b, post.gamma.a, post.gamma.b]
            ),
            geo_alpha_pi=post.geo_alpha_pi,
        )
    return arrays


def save_model(model: TrainedModel, path):
    header = {
        "algorithm": model.algorithm,
        "num_states": model.num_states,
        "vocab_size": model.vocab_size,
        "config": model.config.to_dict(),
        "vocab_words": list(model.vocab.words) if model.vocab is not None else None,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    arrays = _gather_arrays(model)
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    parts.append(struct.pack("<I", len(header_bytes)))
    parts.append(header_bytes)
    for name, shape in _matrix_shapes(model.algorithm, model.num_states, model.vocab_size):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        if arr.shape != shape:
            raise ValueError(f"matrix {name} has shape {arr.shape}, expected {shape}")
        parts.append(arr.tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(hashlib.sha256(payload).digest())


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) >= 4 and blob[:4] != MAGIC:
        raise ModelFormatError("bad magic bytes: not a model checkpoint")
    if len(blob) < 12:
        raise TruncatedFileError("file ends inside the fixed-size prefix")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"checkpoint format version {version}, reader supports {FORMAT_VERSION}"
        )
    header_len = struct.unpack_from("<I", blob, 8)[0]
    body_start = 12 + header_len
    if len(blob) < body_start:
        raise TruncatedFileError("file ends inside the header")
    try:
        header = json.loads(blob[12:body_start].decode("utf-8"))
        algorithm = header["algorithm"]
        num_states = int(header["num_states"])
        vocab_size = int(header["vocab_size"])
        config = RunConfig.from_dict(header["config"])
        vocab_words = header.get("vocab_words")
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"unreadable header: {exc}") from None
    shapes = _matrix_shapes(algorithm, num_states, vocab_size)
    body_len = sum(8 * int(np.prod(shape)) for _, shape in shapes)
    expected = body_start + body_len + 32
    if len(blob) < expected:
        raise TruncatedFileError(
            f"file is {len(blob)} bytes, header implies {expected}"
        )
    if len(blob) > expected:
        raise ModelFormatError(f"{len(blob) - expected} trailing bytes after checksum")
    digest = hashlib.sha256(blob[:-32]).digest()
    if digest != blob[-32:]:
        raise ChecksumError("stored digest does not match file contents")

    arrays = {}
    offset = body_start
    for name, shape in shapes:
        n = 8 * int(np.prod(shape))
        arrays[name] = (
            np.frombuffer(blob, dtype="<f8", count=int(np.prod(shape)), offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += n

    vocab = Vocabulary(vocab_words) if vocab_words is not None else None
    if algorithm == "svi-hmm":
        from .svi import DirichletRows

        rows = DirichletRows(arrays["trans_posterior"], arrays["emit_posterior"])
        return TrainedModel(algorithm, num_states, vocab_size, config,
                            rows=rows, vocab=vocab)
    tokens = arrays["token_stats"]
    stats = GlobalStats(arrays["trans_counts"], EmissionStats(tokens, tokens.sum(axis=1)))
    if algorithm == "scvi-hdphmm":
        a_al, b_al, a_ga, b_ga = arrays["concentrations"]
        post = HdpPosterior(
            BetaParams(arrays["stick_u"], arrays["stick_v"]),
            GammaParams(float(a_al), float(b_al)),
            GammaParams(float(a_ga), float(b_ga)),
            arrays["geo_alpha_pi"],
        )
        mode = HdpMode(post)
    else:
        mode = FiniteMode(config.trans_prior)
    return TrainedModel(algorithm, num_states, vocab_size, config,
                        stats=stats, mode=mode, vocab=vocab)
