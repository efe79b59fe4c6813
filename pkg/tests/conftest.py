import pytest

from docgraph import ingest, textembed


@pytest.fixture(scope="session")
def small_corpus():
    return ingest.generate_synthetic_corpus(3, 20, seed=11)


@pytest.fixture(scope="session")
def small_embeddings(small_corpus):
    config = textembed.Word2VecConfig(dim=8, epochs=2, min_count=2, seed=3)
    return textembed.train_word2vec(small_corpus, config)
