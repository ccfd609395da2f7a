#!/usr/bin/env python3
"""Reference external scorer for ``convrewrite rerank --reranker external``.

Reads candidate JSON lines on stdin and answers each with its first-stage
score. ``--reverse`` negates the scores, ``--drop N`` omits the N-th
candidate (0-based) to exercise the coverage check.
"""

import argparse
import json
import sys


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--reverse", action="store_true")
    parser.add_argument("--drop", type=int, default=None)
    args = parser.parse_args()
    for i, line in enumerate(sys.stdin):
        if not line.strip() or i == args.drop:
            continue
        obj = json.loads(line)
        score = obj.get("first_stage_score", 0.0)
        if args.reverse:
            score = -score
        print(json.dumps({"qid": obj["qid"], "docno": obj["docno"], "score": score}))


if __name__ == "__main__":
    main()
