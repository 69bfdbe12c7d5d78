"""Freezes the golden end-to-end report after anchoring it to the oracle.

Runs the package on the golden fixture (from inside tests/data/golden so the
config echo carries relative, machine-independent paths), verifies that every
score and correlation equals the independently computed numbers in
golden_numbers.json, and only then writes golden_report.json. Run from the
repository root:

    python3 tests/oracles/freeze_golden_report.py
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from drpe.harness import RunConfig, run_evaluation
from drpe.roles import PromptKind

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "data" / "golden"


def golden_config() -> RunConfig:
    return RunConfig(
        dataset="dataset.jsonl",
        schema="pair_labeled",
        backend="mock",
        mock_script="mock_script.jsonl",
        role_prompt_kind=PromptKind.COARSE,
    )


def verify_against_oracle(report) -> None:
    golden = json.loads((GOLDEN_DIR / "golden_numbers.json").read_text("utf-8"))
    assert len(report.rows) == len(golden["rows"])
    for row, expected in zip(report.rows, golden["rows"]):
        assert row["record_id"] == expected["record_id"]
        assert row["candidate_index"] == expected["candidate_index"]
        for key in ("human_score", "drpe", "drpe_raw", "direct", "n_roles",
                    "rouge1", "rouge2", "rougeL", "bleu"):
            assert row[key] == expected[key], (key, row[key], expected[key])
        contributions = [p["contribution"] for p in row["per_role"]]
        assert contributions == expected["per_role_contributions"]
    for metric, value in golden["correlations"].items():
        assert report.correlations[metric] == value, (metric,)


def main() -> None:
    os.chdir(GOLDEN_DIR)
    report = run_evaluation(golden_config())
    verify_against_oracle(report)
    out = GOLDEN_DIR / "golden_report.json"
    out.write_text(report.to_json(), encoding="utf-8")
    print(f"verified against oracle and wrote {out}")


if __name__ == "__main__":
    main()
