import os
import subprocess

import numpy as np
import pytest

import snndec


def test_footprint_of_reference_network():
    f = snndec.footprint()
    assert f["weights"] == 156160
    assert f["total"] == 160786


def test_count_ops_identity():
    ann = snndec.count_ops(strategy="ann-dense")
    assert ann["total"]["accesses"] == 4 * ann["total"]["macs"]
    sparse = snndec.count_ops()
    base = snndec.count_ops(strategy="snn-baseline")
    assert sparse["total"]["adds"] < base["total"]["adds"]
    with pytest.raises(ValueError):
        snndec.count_ops(strategy="nope")


def test_simulate_zero_spikes_is_cheaper():
    quiet = snndec.simulate([0, 0, 0])
    busy = snndec.simulate([120, 120, 60])
    assert quiet["total"]["cycles"] < busy["total"]["cycles"]


def test_pearson_and_rmse():
    a = [1.0, 2.0, 3.0, 4.0]
    assert snndec.pearson(a, [2.0, 4.0, 6.0, 8.0]) == pytest.approx(1.0)
    assert snndec.rmse(a, a) == 0.0


def test_train_quantize_and_run(tmp_path):
    frames, vel = snndec.make_synthetic(frames=1200, seed=2)
    assert frames.shape == (1200, 96)
    assert vel.shape == (1200, 2)
    dec = snndec.train(frames, vel, epochs=1, batch_size=64, seed=4)
    assert len(dec.history) == 1
    pred = dec.predict(frames[-100:])
    assert pred.shape == (100, 2)
    assert np.all(np.isfinite(pred))

    model = dec.quantize()
    w = model.weights(0)
    assert w.shape == (256, 96)
    assert np.abs(w).max() <= 7

    path = tmp_path / "m.snnq"
    model.save(path)
    again = snndec.QuantizedModel.load(path)
    assert np.array_equal(again.weights(1), model.weights(1))

    z = dec.standardize(frames[-50:])
    a = snndec.SparseEngine(model).run(z)
    b = snndec.SparseEngine(again).run(z)
    assert np.array_equal(a, b)

    with pytest.raises(OSError):
        snndec.QuantizedModel.load(tmp_path / "missing.snnq")


@pytest.mark.skipif("SNNDEC_CLI" not in os.environ, reason="command-line tool path not given")
def test_cli_help():
    out = subprocess.run([os.environ["SNNDEC_CLI"], "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "simulate" in out.stdout
