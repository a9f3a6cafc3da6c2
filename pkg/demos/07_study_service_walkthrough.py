"""
Driving the study service over HTTP
===================================

Boots the web service as a real subprocess and plays a complete session
against it with nothing but the standard library: create a session,
inspect the round schedule, watch one round over the live event stream
while submitting frontier choices, finish the rest, and export the
session log.

A participant's browser does the same calls; here a loop stands in for
the human.
"""

import json
import os
import subprocess
import sys
import threading
import time
import urllib.request

PORT = 8766
BASE = f"http://127.0.0.1:{PORT}"
out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)


def http(method, path, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(BASE + path, data=data, method=method,
                                 headers={"content-type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


config = {
    "maps": [{"seed": 41, "width": 50, "height": 50, "rooms": 3},
             {"seed": 42, "width": 50, "height": 50, "rooms": 3}],
    "seed": 5,
    "budget": 8,
    "beams": 240,
    "range_m": 2.5,
    "ensemble": [{"kind": "inpaint", "radius": 10}],
    "pacing_ms": 0,
}
cfg_path = os.path.join(out, "service_config.json")
with open(cfg_path, "w") as f:
    json.dump(config, f)

server = subprocess.Popen(
    [sys.executable, "-m", "frontier_lab.cli", "--config", cfg_path, "serve",
     "--port", str(PORT)],
    stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
try:
    for _ in range(100):  # wait for the port to come up
        try:
            http("POST", "/sessions", {})
            break
        except Exception:
            time.sleep(0.1)

    session = http("POST", "/sessions", {"participant": "walkthrough"})
    sid = session["id"]
    print(f"session {sid}: {len(session['rounds'])} rounds "
          f"(1 training + 3 per map)")
    for r in session["rounds"]:
        print(f"  round {r['round']}: kind={r['kind']:>8}  map={r['map']}"
              f"  start={r['start']}  trial {r['round_in_map']} on its map")

    def play_round(k):
        """Submit the first offered slot whenever the round awaits a choice.

        Polling may race the round worker (409 until the round starts, or
        just after a choice lands); those are retried, not errors.
        """
        deadline = time.time() + 60
        while time.time() < deadline:
            try:
                snap = http("GET", f"/sessions/{sid}/rounds/{k}/state")
                if snap["terminal"]:
                    return snap
                if snap["awaiting"] and snap["frontiers"]:
                    http("POST", f"/sessions/{sid}/rounds/{k}/choice",
                         {"frontier": snap["frontiers"][0]["slot"]})
            except urllib.error.HTTPError as e:
                if e.code != 409:
                    raise
            time.sleep(0.02)
        raise RuntimeError(f"round {k} did not finish")

    # Round 0 with the live SSE stream attached: every timestep the service
    # publishes robot pose, remaining budget, IoU so far, and RLE-compressed
    # grids for rendering.
    events = []

    def read_stream():
        req = urllib.request.Request(f"{BASE}/sessions/{sid}/rounds/0/stream")
        with urllib.request.urlopen(req) as resp:
            for raw in resp:
                line = raw.decode().strip()
                if line.startswith("data: "):
                    events.append(json.loads(line[len("data: "):]))

    reader = threading.Thread(target=read_stream, daemon=True)
    reader.start()
    final = play_round(0)
    reader.join(timeout=10)
    print(f"\nround 0 finished: iou={final['iou']:.3f}  b_r={final['b_r']}")
    print(f"stream delivered {len(events)} frames; first 3:")
    for e in events[:3]:
        keys = ("seq", "awaiting", "terminal", "b_r", "robot", "iou")
        print("  ", {k: e[k] for k in keys},
              f"+ grids {e['grids']['width']}x{e['grids']['height']} (RLE)",
              f"+ {len(e['frontiers'])} frontier slots")

    for k in range(1, len(session["rounds"])):
        play_round(k)

    done = http("GET", f"/sessions/{sid}")
    assert done["complete"]
    print("\nall rounds complete; per-round study rewards:")
    for r in done["rounds"]:
        print(f"  round {r['round']} ({r['kind']:>8}, {r['map']}): "
              f"iou={r['final_iou']:.3f}  study_reward={r['study_reward']:.1f}")

    export = urllib.request.urlopen(f"{BASE}/sessions/{sid}/export").read()
    export_path = os.path.join(out, "session_export.ndjson")
    with open(export_path, "wb") as f:
        f.write(export)
    kinds = [json.loads(line)["type"] for line in export.splitlines()]
    print(f"\nexport: {len(kinds)} NDJSON lines "
          f"({', '.join(sorted(set(kinds)))}) -> {export_path}")
finally:
    server.terminate()
    try:
        server.wait(timeout=5)
    except subprocess.TimeoutExpired:
        server.kill()  # an open event-stream keeps graceful shutdown waiting
        server.wait(timeout=5)
