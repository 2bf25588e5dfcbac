import numpy as np
import pytest

from pvvae.data_synth import CorpusRanges, Corpus, generate_corpus
from pvvae.model import VaeConfig


@pytest.fixture(scope="session")
def micro_cfg():
    """Smallest legal architecture; used where speed matters more than realism."""
    return VaeConfig(p_t=2, p_s=2, c_latent=2, base_channels=4,
                     channel_mult=(1,), seed=0)


@pytest.fixture(scope="session")
def toy_cfg():
    return VaeConfig()


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """12 small clips (17x16x16) shared by trainer/diagnostics tests."""
    root = tmp_path_factory.mktemp("corpus") / "tiny"
    generate_corpus(root, n=12, base_seed=11,
                    ranges=CorpusRanges(frames=17, resolution=(16, 16),
                                        num_shapes=(1, 2), size_range=(2.5, 4.5),
                                        velocity_range=(-1.5, 1.5)))
    return Corpus(root)


def rand_clip(shape, seed=0, lo=-1.0, hi=1.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, shape).astype(np.float32)
