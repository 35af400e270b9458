"""Smoke test for the `unroll` extension module.

Build and install first:

    pip install --no-build-isolation -e crates/python

then run `python python/smoke_test.py`.
"""

import math
import os
import tempfile

import unroll

SCENE = """
texture = "procedural"
seed = 4
focal = 120.0
width = 96
height = 64
gamma = 1.0
v = [0.3, 0.1, 0.05]
omega = [0.002, -0.003, 0.004]
[depth_ramp]
z0 = 5.0
dz_dx = 0.1
"""


def main():
    assert unroll.scanline_time_weight(1, 240.0, 1.0, 480) == 0.5
    assert unroll.undistortion_factor(240.0, 0.0, 1.0, 480) == 0.5
    assert abs(unroll.propagation_ratio(240.0, 0.0, 100.0, 480) + 100.0 / 140.0) < 1e-15
    assert unroll.propagation_ratio(240.0, 0.0, 100.0, 480, phi=0.0) == unroll.propagation_ratio(240.0, 0.0, 100.0, 480)

    scene = unroll.Scene.from_toml(SCENE)
    cam = scene.camera
    rs1, depth1 = scene.compose_rs(1)
    rs2, depth2 = scene.compose_rs(2)
    fwd, bwd = scene.gt_optical_flow()
    assert (rs1.width, rs1.height, rs1.channels) == (96, 64, 3)
    assert fwd.direction == "forward" and bwd.direction == "backward"

    v, omega, residual = unroll.estimate_motion(fwd, depth1, cam, scene.gamma)
    assert all(abs(a - b) < 1e-6 for a, b in zip(v, (0.3, 0.1, 0.05))), v
    assert residual < 1e-6

    inverter = unroll.Inverter(cam, scene.gamma, fwd, bwd)
    m = cam.middle_scanline
    [(s, gs1, valid1, gs2, valid2)] = inverter.invert(rs1, rs2, [m], depth1=depth1, depth2=depth2)
    gt1, _ = scene.render_gs(1, m)
    occ = scene.gt_occlusion(1, m)
    mask = [ok and not o for ok, o in zip(valid1, occ)]
    score = unroll.psnr(gs1, gt1, mask)
    print(f"GS frame 1 at scanline {s}: masked PSNR {score:.2f} dB, SSIM {unroll.ssim(gs1, gt1, mask):.4f}")
    assert score > 35.0

    # Zero acceleration is the constant velocity model.
    [(_, acc1, _, _, _)] = inverter.invert(rs1, rs2, [m], phi_forward=0.0, phi_backward=0.0, depth1=depth1, depth2=depth2)
    assert acc1.to_list() == gs1.to_list()

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "f.flo")
        fwd.write_flo(path)
        back = unroll.Flow.read_flo(path)
        a, b = fwd.get(10, 10), back.get(10, 10)
        assert all(abs(x - y) < 1e-4 for x, y in zip(a, b))
        try:
            unroll.Flow.read_flo(os.path.join(tmp, "missing.flo"))
        except OSError:
            pass
        else:
            raise AssertionError("missing file accepted")

    lk = unroll.estimate_flow_lk(rs1, rs2)
    errors = sorted(math.dist(a, b) for a, b in zip(lk.to_list(), fwd.to_list()) if a is not None)
    assert len(errors) > 96 * 64 // 2
    print(f"LK flow: median endpoint error {errors[len(errors) // 2]:.3f} px")
    assert errors[len(errors) // 2] < 0.5

    print("smoke test passed")


if __name__ == "__main__":
    main()
