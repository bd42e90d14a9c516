import math

import numpy as np
import pytest

from qlg.lattice import run
from qlg.reference import classical_run
from qlg.spin.experiment import ExperimentConfig, ExperimentConfigError, simulate_experiment


@pytest.fixture(scope="module")
def published_run():
    return simulate_experiment(ExperimentConfig.published())


@pytest.mark.parametrize("readout", ["ideal", "gradient"])
def test_ideal_switches_reproduce_lattice(readout):
    cfg = ExperimentConfig(readout=readout)
    res = simulate_experiment(cfg)
    ref = run(cfg.initial_density(), 7)
    np.testing.assert_allclose(res.trajectory.rho, ref.rho, atol=1e-6)
    np.testing.assert_allclose(res.trajectory.f1, ref.f1, atol=1e-6)
    np.testing.assert_allclose(res.trajectory.rho, classical_run(cfg.initial_density(), 7),
                               atol=1e-6)
    np.testing.assert_allclose(res.deviation_from_ideal, 0, atol=1e-6)
    assert np.isnan(res.encoding_error).all()
    assert cfg.all_ideal == (readout == "ideal")


def test_finite_rotations_with_exact_encoding():
    # gate errors alone, with no small-angle mapping and no reference scans
    res = simulate_experiment(ExperimentConfig(rotations="finite", steps=3))
    dev = res.deviation_from_ideal
    assert dev[0] == 0 and np.all(np.diff(dev) > 0)
    assert res.gate_fidelities["collision"] == pytest.approx(0.9995, abs=2e-4)
    assert res.gate_fidelities["swap"] == pytest.approx(0.9995, abs=2e-4)


def test_published_switches_mass_drift(published_run):
    assert published_run.mass_drift <= 0.05
    assert published_run.trajectory.steps == 7


def test_published_switches_error_exceeds_ideal_and_accumulates(published_run):
    nmr, ideal = published_run.rms_vs_analytic, published_run.ideal_rms_vs_analytic
    assert np.all(nmr >= ideal)
    dev = published_run.deviation_from_ideal
    assert dev[0] == 0
    assert np.all(np.diff(dev) > 0)


def test_larger_flip_angle_encodes_worse():
    quarter = simulate_experiment(ExperimentConfig.published(steps=2, seed=3))
    half = simulate_experiment(ExperimentConfig.published(steps=2, seed=3, flip_angle=math.pi / 2))
    assert np.nanmean(half.encoding_error) > np.nanmean(quarter.encoding_error)


def test_no_decoupling_is_much_worse(published_run):
    off = simulate_experiment(ExperimentConfig.published(decoupling="off", steps=3))
    assert np.nanmean(off.encoding_error) > 10 * np.nanmean(published_run.encoding_error[:3])


def test_reference_scans_remove_gate_bias():
    raw = simulate_experiment(ExperimentConfig.published(reference_scans=False, steps=3,
                                                     decoupling="ideal"))
    cal = simulate_experiment(ExperimentConfig.published(steps=3, decoupling="ideal"))
    assert raw.mass_drift > 3 * cal.mass_drift


def test_noise_is_seeded():
    a = simulate_experiment(ExperimentConfig.published(steps=2, noise_std=1e-3, seed=11,
                                                   decoupling="ideal"))
    b = simulate_experiment(ExperimentConfig.published(steps=2, noise_std=1e-3, seed=11,
                                                   decoupling="ideal"))
    c = simulate_experiment(ExperimentConfig.published(steps=2, noise_std=1e-3, seed=12,
                                                   decoupling="ideal"))
    np.testing.assert_array_equal(a.trajectory.rho, b.trajectory.rho)
    assert not np.array_equal(a.trajectory.rho, c.trajectory.rho)


def test_explicit_initial_profile():
    rho0 = np.zeros(8)
    rho0[3] = 1.0
    res = simulate_experiment(ExperimentConfig(n_sites=8, steps=2, initial=rho0))
    np.testing.assert_allclose(res.trajectory.rho, classical_run(rho0, 2), atol=1e-12)
    assert res.analytic is None
    assert np.isnan(res.rms_vs_analytic).all()
    assert res.config.to_dict()["initial"] == list(rho0)


def test_zero_steps():
    res = simulate_experiment(ExperimentConfig(steps=0))
    assert len(res.trajectory) == 1
    assert res.encoding_error.shape == (0, 2)


@pytest.mark.parametrize("bad", [
    dict(encoding="fourier"), dict(rotations="soft"), dict(decoupling="maybe"),
    dict(readout="camera"), dict(steps=-1), dict(n_sites=1), dict(flip_angle=0.0),
    dict(flip_angle=2.0), dict(nutation_ratio=0), dict(J=0), dict(duty=1.5),
    dict(noise_std=-1), dict(noise_std=0.1), dict(initial=(0.1, 0.2)),
    dict(n_sites=2, initial=(0.1, 3.0)), dict(sigma=0), dict(peak=2.5), dict(spins_per_slice=0),
])
def test_invalid_configs(bad):
    with pytest.raises(ExperimentConfigError):
        ExperimentConfig(**bad)


def test_simulate_requires_config():
    with pytest.raises(ExperimentConfigError):
        simulate_experiment({"steps": 3})
