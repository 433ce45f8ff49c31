"""Smoke test for the `caos` Python extension.

Build and install the module first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/caos-*.whl

then run `python python/smoke_test.py`.
"""

import json
import math
import os
import tempfile

import caos


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok    {msg}")


def main():
    plan = caos.design_plan(1.0, 16, 7, 8)
    check(plan.channels == [64.0 * 2**j for j in range(8)], "ladder 64..8192 Hz")
    check(plan.fs == 65536.0 and plan.delta_f == 1.0, "fs and delta_f")
    again = caos.FrequencyPlan.from_json(plan.to_json())
    check(again.channels == plan.channels, "plan JSON round trip")

    bad = caos.validate_plan([1170.3, 1368.3, 1638.4, 2048, 2730.6, 4096, 8192], 4.0)
    check(not bad.passed and bad.flagged == [0, 1, 2, 4], "invalid set flagged")
    good = caos.validate_plan([128.0 * 2**j for j in range(7)], 4.0)
    check(bool(good), "valid set passes")
    check(bad.to_dict()["verdict"] == "fail", "report as dict")

    check(caos.available_slots(64, [64, 128]) == [256.0, 512.0], "free slots")

    h = caos.walsh_matrix(8)
    check(
        all(sum(a * b for a, b in zip(r, s)) == (8 if i == j else 0)
            for i, r in enumerate(h) for j, s in enumerate(h)),
        "Walsh rows orthogonal",
    )

    x = [math.cos(2 * math.pi * 4 * n / 64) for n in range(64)]
    spec = caos.fft(x)
    check(abs(abs(spec[4]) - 32) < 1e-9 and abs(spec[5]) < 1e-9, "FFT of a cosine")

    check(abs(caos.processing_gain_db(65536) - 45.15) < 0.01, "processing gain")
    check(abs(caos.encoding_time(1276, 8, 1.0) - 160.0) < 1e-12, "encoding time")
    check(abs(caos.dynamic_range_db(1.0, 1e-7) - 140.0) < 1e-9, "dynamic range")

    check("table5" in caos.preset_names(), "preset list")
    sim = caos.simulate("table5")
    img = sim.images()[0]
    worst = max(abs(v - t) / t for v, t in zip(img.values, img.truth))
    check(worst < 1e-6, f"table5 decode, worst rel err {worst:.1e}")
    report = sim.report()
    check(abs(report["recovered_dr_db"] - 140.0) < 1e-6, "table5 DR")

    doc = json.loads(caos.preset("table5"))
    doc["target"] = {"kind": "uniform", "value": 0.5}
    sim = caos.simulate(json.dumps(doc))
    check(all(abs(v - 0.5) < 1e-9 for v in sim.images()[0].values), "custom scenario")

    with tempfile.TemporaryDirectory() as tmp:
        out = caos.run("dispersion-check", tmp)
        check(os.path.isfile(os.path.join(tmp, "metrics.json")), "run writes files")
        check(abs(out["mean_nm_per_column"] - 6.15) < 0.1, "nm per column")

    try:
        caos.simulate('{"name": "x", "mode": "warp"}')
    except ValueError:
        check(True, "bad scenario raises ValueError")
    else:
        check(False, "bad scenario raises ValueError")

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
