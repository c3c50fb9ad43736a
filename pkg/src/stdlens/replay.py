"""Offline forensics on recorded gradient streams.

The engine can dump one JSON-lines record per gradient contribution;
this module replays such a file through a defense without any federated
training, emitting the same verdicts the live run would have produced.
"""

from __future__ import annotations

import json

import numpy as np

from .forensics import GradientContribution

__all__ = ["stream_dump_hook", "write_contributions", "read_stream", "replay_stream"]


def stream_dump_hook(path, num_classes: int):
    """An engine stream_hook that appends per-class contribution records."""
    from .forensics import extract_class_gradient_block

    fh = open(path, "w")

    def hook(round_idx, updates):
        for u in updates:
            for c in range(num_classes):
                block = extract_class_gradient_block(u.delta, c)
                fh.write(json.dumps({
                    "round": round_idx, "client_id": u.client_id, "class_id": c,
                    "block": [float(v) for v in block],
                }, sort_keys=True) + "\n")
        fh.flush()

    hook.close = fh.close
    return hook


def write_contributions(path, stream) -> None:
    """Serialize a per-round contribution stream (list of lists)."""
    with open(path, "w") as fh:
        for round_contribs in stream:
            for g in round_contribs:
                fh.write(json.dumps({
                    "round": int(g.round), "client_id": int(g.client_id),
                    "class_id": int(g.class_id),
                    "block": [float(v) for v in g.block],
                }, sort_keys=True) + "\n")


def read_stream(path):
    """Load a dumped stream, grouped by round in ascending order."""
    by_round: dict[int, list] = {}
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            g = GradientContribution(rec["client_id"], rec["round"],
                                     rec["class_id"], np.asarray(rec["block"]))
            by_round.setdefault(g.round, []).append(g)
    return [by_round[r] for r in sorted(by_round)]


def replay_stream(defense, stream):
    """Feed a recorded stream to a defense; returns revocations as
    (round, client_id) pairs plus the final verdict per client."""
    events = []
    clients = set()
    for round_contribs in stream:
        rnd = round_contribs[0].round if round_contribs else 0
        clients |= {g.client_id for g in round_contribs}
        revoked, _ = defense.observe_contributions(rnd, round_contribs)
        events += [(rnd, cid) for cid in revoked]
    revoked_ids = {cid for _, cid in events}
    verdicts = {cid: ("revoked" if cid in revoked_ids else "active")
                for cid in sorted(clients)}
    return events, verdicts
