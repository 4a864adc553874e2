"""Smoke test for the dearlab_py extension module.

Run after `pip install --no-build-isolation -e crates/py`.
"""

import math

import dearlab_py as dl


def main():
    img = dl.phantom(48, seed=3)
    assert len(img) == 48 and len(img[0]) == 48

    geom = dl.Geometry(48, 96, 96)
    sino = dl.project(img, geom)
    assert sino.n_views == 96
    assert len(sino.data[0]) == 96

    full = sino.fbp()
    few = sino.subsample(24).fbp()
    m_full = dl.metrics(full, img)
    m_few = dl.metrics(few, img)
    assert m_full["rmse"] < m_few["rmse"], (m_full, m_few)

    same = dl.metrics(img, img)
    assert math.isinf(same["psnr"]) and same["ssim"] == 1.0 and same["rmse"] == 0.0

    assert "dear3d" in dl.presets()
    assert dl.count_parameters("dear3d", filters=4) > 0

    gen = dl.Generator("dear3d", seed=1, filters=4)
    vol = [few, few, few]
    out = gen.forward(vol)
    err = max(abs(a - b) for so, si in zip(out, vol) for ro, ri in zip(so, si) for a, b in zip(ro, ri))
    assert err < 1e-6, f"zero-initialized output layer must give the identity, max error {err}"

    try:
        gen.forward([[[0.0] * 4] * 4])
    except ValueError as e:
        assert "minimum" in str(e)
    else:
        raise AssertionError("undersized input accepted")

    print(f"full-view psnr {m_full['psnr']:.2f} dB, few-view psnr {m_few['psnr']:.2f} dB")
    print("smoke test passed")


if __name__ == "__main__":
    main()
