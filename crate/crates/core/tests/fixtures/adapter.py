#!/usr/bin/env python3
"""Protocol v1 test adapter.

Modes:
  persistence   repeat the last input row over the horizon
  wrong_id      answer every request with id + 1
  bad_shape     drop the last horizon row
  truncated     write half a JSON line on the first request, then exit
  early_exit    exit with code 7 on the second request
  silent        never complete the handshake
"""
import json
import sys
import time

mode = sys.argv[1] if len(sys.argv) > 1 else "persistence"


def send(msg):
    sys.stdout.write(json.dumps(msg) + "\n")
    sys.stdout.flush()


hello = json.loads(sys.stdin.readline())
assert hello["type"] == "hello" and hello["protocol"] == 1
horizon = hello["horizon"]
if mode == "silent":
    time.sleep(30)
    sys.exit(0)
send({"type": "ready", "name": "fixture-" + mode})

requests = 0
for line in sys.stdin:
    msg = json.loads(line)
    if msg["type"] == "shutdown":
        sys.exit(0)
    requests += 1
    outputs = [[list(x[-1]) for _ in range(horizon)] for x in msg["inputs"]]
    if mode == "wrong_id":
        send({"type": "prediction", "id": msg["id"] + 1, "outputs": outputs})
    elif mode == "bad_shape":
        send({"type": "prediction", "id": msg["id"], "outputs": [o[:-1] for o in outputs]})
    elif mode == "truncated":
        text = json.dumps({"type": "prediction", "id": msg["id"], "outputs": outputs})
        sys.stdout.write(text[: len(text) // 2] + "\n")
        sys.stdout.flush()
        sys.exit(0)
    elif mode == "early_exit" and requests == 2:
        sys.exit(7)
    else:
        send({"type": "prediction", "id": msg["id"], "outputs": outputs})
