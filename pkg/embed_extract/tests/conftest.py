import json

import numpy as np
import pytest


@pytest.fixture()
def chaosnli_file(tmp_path):
    """Mini ChaosNLI release: 100 judgments per premise-hypothesis pair."""
    rng = np.random.default_rng(0)
    path = tmp_path / "chaosnli_snli.jsonl"
    with path.open("w") as fh:
        for i in range(12):
            counts = rng.multinomial(100, rng.dirichlet([1.2, 1.0, 0.8]))
            fh.write(
                json.dumps(
                    {
                        "uid": f"pair-{i:03d}",
                        "label_counter": {
                            "e": int(counts[0]),
                            "n": int(counts[1]),
                            "c": int(counts[2]),
                        },
                        "majority_label": "enc"[int(np.argmax(counts))],
                        "label_count": [int(c) for c in counts],
                        "entropy": 0.0,
                        "example": {
                            "uid": f"pair-{i:03d}",
                            "premise": f"A premise sentence number {i}.",
                            "hypothesis": f"A hypothesis sentence number {i}.",
                            "source": "snli",
                        },
                    }
                )
                + "\n"
            )
    return path


@pytest.fixture()
def popquorn_file(tmp_path):
    """Mini POPQUORN politeness release: one CSV row per annotator judgment."""
    rng = np.random.default_rng(1)
    path = tmp_path / "politeness_rating.csv"
    lines = ["id,instance_id,text,politeness,gender,age"]
    row_id = 0
    for i in range(9):
        n_annot = int(rng.integers(4, 9))
        for _ in range(n_annot):
            rating = int(rng.integers(1, 6))
            lines.append(f'{row_id},{i},"An email excerpt number {i}.",{rating},x,30')
            row_id += 1
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture()
def cifar10h_file(tmp_path):
    """Mini CIFAR-10H counts matrix: ~50 judgments over 10 classes per image."""
    rng = np.random.default_rng(2)
    counts = np.stack([rng.multinomial(50, rng.dirichlet(np.full(10, 0.4))) for _ in range(15)])
    path = tmp_path / "cifar10h-counts.npy"
    np.save(path, counts.astype(np.int64))
    return path
