import os
from itertools import islice, product
from typing import Iterable, Iterator, Optional

import numpy as np
import psutil
from loguru import logger
from pydantic import BaseModel, ConfigDict


SCHEMA_VERSION = "1"

# Durand-Kerner
ROOT_STEP_TOL = 1e-13
ROOT_MAX_ITER = 1000
# |Im z| < REAL_SPLIT * (1 + |z|) is real, up to REAL_SPLIT * 10 is ambiguous
REAL_SPLIT = 1e-8
REAL_GUARD = 1e-7

MAX_WITNESS_PRIME = 101
SIGN_TOL = 1e-9

MODES = ["construction", "OT", "LVMB"]


class Tolerances(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    root: float = 1e-9
    check: float = 1e-9
    separation: float = 1e-6
    closure: float = 1e-7
    condition: float = 1e8


DEFAULT_TOLERANCES = Tolerances()


class NkcertError(Exception):
    pass


# exit code 2
class InputError(NkcertError):
    pass


class ConfigError(InputError):
    pass


class RankTooLarge(InputError):
    pass


class WrongRank(InputError):
    pass


class WrongSignature(InputError):
    pass


class UnsupportedDimension(InputError):
    pass


class IncompletePipeline(InputError):
    pass


# exit code 1
class CheckFailure(NkcertError):
    pass


class NonMonic(CheckFailure):
    pass


class NotSquarefree(CheckFailure):
    pass


class BasisNotRing(CheckFailure):
    pass


class BasisMissingOne(CheckFailure):
    pass


class RootFindingFailed(CheckFailure):
    pass


class AmbiguousRealComplexSplit(CheckFailure):
    pass


class OracleMismatch(CheckFailure):
    pass


class NotAUnit(CheckFailure):
    pass


class NonPositiveProfile(CheckFailure):
    pass


class IllConditioned(CheckFailure):
    pass


class InjectivityViolation(CheckFailure):
    pass


class ZeroCoordinate(CheckFailure):
    pass


class ConjugationCheckFailed(CheckFailure):
    pass


class CollapseFailed(CheckFailure):
    pass


class RayNotInFan(CheckFailure):
    pass


class TilingGap(CheckFailure):
    pass


class NotAdmissible(CheckFailure):
    pass


class DegenerateSimplex(CheckFailure):
    pass


class NoComplexPlace(CheckFailure):
    pass


class SubgroupNotFound(CheckFailure):
    pass


class CheckResult(BaseModel):
    """Outcome of a single verifiable statement, as embedded in the certificate."""

    model_config = ConfigDict(extra="forbid")

    passed: bool
    mandatory: bool = True
    tolerance: Optional[float] = None
    witness: Optional[str] = None
    detail: str = ""


def exponent_words(b: int, window: int) -> Iterator[tuple[int, ...]]:
    """All exponent vectors in [-window, window]^b, shortest first.

    Ties are broken lexicographically with -k before +k, so the order is
    deterministic and the identity comes first.
    """
    if b == 0:
        yield ()
        return
    rng = range(-window, window + 1)
    words = sorted(product(rng, repeat=b), key=lambda w: (sum(map(abs, w)), w))
    yield from words


def batch_items(itr: Iterable, chunk_size: int):
    """Chunk a word stream (e.g. `exponent_words`) into lists of `chunk_size`."""
    itr = iter(itr)
    chunk = list(islice(itr, chunk_size))
    while chunk:
        yield chunk
        chunk = list(islice(itr, chunk_size))


def unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(norms == 0, 1.0, norms)


def show_memory(text: str):
    """Log resident memory at a pipeline stage; sampling and orbit windows dominate."""
    process = psutil.Process(os.getpid())
    mb = process.memory_info().rss / 1_000_000
    logger.debug(f"RSS: {mb}MB ({text})")
