from __future__ import annotations

import shutil
from pathlib import Path

import pytest
import yaml

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"


def write_corpus_config(tmp: Path, **overrides) -> Path:
    """A replay config for the shipped corpus whose writable paths live under ``tmp``."""
    data = yaml.safe_load((CORPUS / "config.yml").read_text())
    reviews = tmp / "reviews"
    if not reviews.exists():
        shutil.copytree(CORPUS / "reviews", reviews)
    data.update(
        fixtures=str(CORPUS / "http"),
        checkpoint_dir=str(tmp / "ckpt"),
        cache_dir=str(tmp / "cache"),
        out_dir=str(tmp / "out"),
    )
    data["language"]["review_file"] = str(reviews / "language_review.csv")
    data["enrich"]["review_file"] = str(reviews / "service_review.csv")
    for key, value in overrides.items():
        data[key] = value
    path = tmp / "config.yml"
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


@pytest.fixture
def corpus_config(tmp_path: Path) -> Path:
    return write_corpus_config(tmp_path)
