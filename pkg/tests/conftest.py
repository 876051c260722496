import numpy as np
import pytest

from graphfolk import build_undirected
from graphfolk.synth import SbmSpec, generate_sbm


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile the numba kernels once so timed tests measure math, not JIT."""
    from graphfolk import sgns
    from graphfolk.walks import WalkCorpus

    corpus = WalkCorpus(walks=[np.arange(4, dtype=np.int32)], ids=["a", "b", "c", "d"])
    sgns.train(corpus, sgns.SgnsConfig(dim=4, epochs=1, seed=0))
    # the float64 pair-update variant compiles separately
    model = sgns.init_model(4, 4, ["a", "b", "c", "d"], seed=0, dtype=np.float64)
    sgns.sgns_pair_update(model, 0, 1, [2, 3], lr=0.01)


@pytest.fixture(scope="session")
def two_block_corpus():
    """Small planted 2-block graph plus its walk corpus; shared by slow tests."""
    import graphfolk as gf

    spec = SbmSpec(
        block_sizes=[60, 60],
        p_in=0.15,
        p_out=0.01,
        class_of_block=[1, 2],
        income_of_block=[(20_000.0, 2_000.0), (60_000.0, 2_000.0)],
        seed=21,
    )
    edges, labels = generate_sbm(spec)
    g = build_undirected(edges)
    corpus = gf.generate_corpus(g, gf.WalkConfig(walk_length=40, walks_per_vertex=2, seed=22))
    return g, corpus, labels
