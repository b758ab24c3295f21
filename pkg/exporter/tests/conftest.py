import pytest


@pytest.fixture(scope="session")
def encoder_assets(tmp_path_factory):
    """A tiny local encoder with fixed seeded weights.

    Stands in for published pretrained weights, which cannot be fetched
    here; what matters to the exporter contract is that the assets load
    from a local directory and produce deterministic sentence encodings.
    """
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    root = tmp_path_factory.mktemp("encoder")
    words = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
        "capital", "of", "france", "england", "city", "largest",
        "third", "planet", "from", "the", "sun", "moon", "natural",
        "satellite", "earth", "a", "and",
    ]
    (root / "vocab.txt").write_text("\n".join(words) + "\n")
    tokenizer = BertTokenizer(str(root / "vocab.txt"))
    tokenizer.save_pretrained(root)
    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(words),
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(root)
    return str(root)


@pytest.fixture()
def items_csv(tmp_path):
    path = tmp_path / "items-content.csv"
    path.write_text(
        "item_id,label,description\n"
        "Q1,Paris,capital of france\n"
        "Q2,Earth,third planet from the sun\n"
        "Q3,Moon,natural satellite of earth\n"
    )
    return str(path)


@pytest.fixture()
def items_csv_with_empty(tmp_path):
    path = tmp_path / "items-empty.csv"
    path.write_text(
        "item_id,label,description\n"
        "Q1,Paris,capital of france\n"
        "Q2,Luna,\n"
        "Q3,Moon,natural satellite of earth\n"
    )
    return str(path)
