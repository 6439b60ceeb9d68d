"""Regenerate the bundled pipeline fixture (deterministic).

Run from the repository root:

    python3 tests/fixtures/make_fixture.py

The fixture is a label-free dataset with reference summaries, sized so
the offline CLI pipeline can calibrate on 100 documents and still have
a test split large enough for a meaningful coverage check.
"""

import pathlib
from dataclasses import replace

from cise.data import save_jsonl
from cise.synthetic import make_text_corpus

OUT = pathlib.Path(__file__).parent / "pipeline_fixture.jsonl"


def main():
    records = make_text_corpus(n_docs=400, p_range=(8, 16), seed=20240917)
    # The pipeline derives labels itself (greedy reference matching), so
    # the fixture ships without them.
    stripped = [
        replace(r, labels=None, label_source=None) for r in records
    ]
    save_jsonl(stripped, OUT)
    print(f"wrote {len(stripped)} records to {OUT}")


if __name__ == "__main__":
    main()
