"""Smoke test for the compiled `entangle2d` extension module.

Build and install first, e.g. `maturin develop --release` inside crates/python
(or `pip install crates/python`), then run `python crates/python/python/smoke_test.py`.
"""

import math

import entangle2d


def main() -> None:
    j, _ = entangle2d.coeff_j(0.5)
    assert abs(j / math.pi**3 - 1.0) < 1e-8, j

    row = entangle2d.coeff_e(1.0)
    assert abs(row["E"] - 2.6436) < 2e-3, row

    value, closed = entangle2d.coeff_l(0.75)
    assert abs(value - closed) < 1e-8 * closed

    rows = entangle2d.table([0.5, 0.75])
    assert [r["mu1"] for r in rows] == [0.5, 0.75]
    assert abs(rows[1]["E"] - 0.4725) < 2e-3

    assert abs(entangle2d.leading_purity(1.0, 1e-6) - 0.986149) < 2e-6

    sweep = entangle2d.purity_sweep(0.75, [1e-5, 1e-7], grid=16)
    assert len(sweep["entries"]) == 2

    inv_a = entangle2d.inverse_scattering_length("gaussian_well", -1.0, 1.0, 4.0, mesh_n=16)
    ln_a = entangle2d.radial_log_scattering_length("gaussian_well", -1.0, 1.0, 4.0)
    assert abs(inv_a + ln_a) < 0.02, (inv_a, ln_a)

    try:
        entangle2d.coeff_e(2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print("entangle2d smoke test passed")


if __name__ == "__main__":
    main()
