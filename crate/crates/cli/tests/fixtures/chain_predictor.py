"""Line-protocol test predictor.

Follows the chain START -> A -> B -> C -> END with point masses, one day per
step. A single optional argument selects a misbehaviour for engine-side tests:
bad-mass, wrong-id, nan, silent, vocab-off, no-type, error.
"""

import json
import sys

MODE = sys.argv[1] if len(sys.argv) > 1 else "ok"
CHAIN = ["<START>", "A", "B", "C", "<END>"]


def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main():
    vocab = []
    for line in sys.stdin:
        msg = json.loads(line)
        kind = msg.get("type")
        if kind == "init":
            vocab = msg["vocabulary"]
            if MODE == "silent":
                continue
            if MODE == "no-type":
                send({"vocab_size": len(vocab)})
                continue
            send({
                "type": "capabilities",
                "vocab_size": len(vocab) + (1 if MODE == "vocab-off" else 0),
                "supports_multi_step": False,
                "max_m": 1,
                "supports_remaining_time": True,
                "supports_time_delta": True,
            })
        elif kind == "predict":
            if MODE == "error":
                send({"type": "error", "message": "model exploded", "request_id": msg["request_id"]})
                continue
            last = next(i for i in reversed(msg["input_ids"]) if i != 0)
            label = vocab[last]
            step = CHAIN.index(label) if label in CHAIN else len(CHAIN) - 2
            target = CHAIN[min(step + 1, len(CHAIN) - 1)]
            probs = [0.0] * len(vocab)
            probs[vocab.index(target)] = 1.0
            if MODE == "bad-mass":
                probs[vocab.index(target)] = 0.9
            if MODE == "nan":
                probs[0] = float("nan")
            request_id = msg["request_id"] + (1 if MODE == "wrong-id" else 0)
            dist = {"probs": probs, "delta_days": 1.0 if target in ("B", "C") else 0.0,
                    "remaining_days": float(min(2, 3 - step))}
            send({"type": "prediction", "request_id": request_id, "distributions": [dist]})
        elif kind == "shutdown":
            return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
