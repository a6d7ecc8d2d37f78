import os
import pathlib

import numpy as np
import pytest

import gamvar

FIXTURES = pathlib.Path(os.environ.get("GAMVAR_FIXTURES", pathlib.Path(__file__).parents[2] / "tests" / "fixtures"))


def test_q_matrices():
    q = gamvar.q_strict(4)
    assert q.shape == (4, 4)
    assert q[0, 0] == pytest.approx(1 / 16)
    assert gamvar.lambda_max(q) == pytest.approx(1 / 12)
    assert gamvar.validate_q(q)["valid"]
    assert np.allclose(gamvar.q_wholeplot(2, 3), gamvar.q_half(3))
    bad = q.copy()
    bad[0, 0] *= 2
    assert not gamvar.validate_q(bad)["valid"]
    with pytest.raises(ValueError):
        gamvar.lambda_max(bad)


def test_two_arm_variance_and_estimator():
    mech = gamvar.Mechanism.completely_randomized([2, 2])
    assert mech.num_units == 4
    assert mech.support_size() == 6
    assert mech.first_order_exact(0, 1) == "1/2"
    assert mech.second_order(0, 1, 0, 0) == pytest.approx(1 / 6)
    y = np.array([[1.0, 2.0], [2.0, 2.0], [3.0, 4.0], [4.0, 6.0]])
    g = np.array([-1.0, 1.0])
    var = gamvar.variance(mech, y, g)
    tau = y[:, 1] - y[:, 0]
    assert gamvar.v_q(mech, y, g, gamvar.q_strict(4)) == pytest.approx(var + gamvar.bias(gamvar.q_strict(4), tau))
    assert gamvar.estimate(mech, [0, 1, 0, 1], [1, 2, 3, 6], g) == pytest.approx(2.0)
    assert gamvar.v_q_hat(mech, [0, 1, 0, 1], [1, 2, 3, 6], g, gamvar.q_strict(4)) == pytest.approx(5.0)


def test_sampling_is_reproducible():
    mech = gamvar.Mechanism.stratified([3, 4], [[1, 2], [2, 2]])
    assert mech.sample(5) == mech.sample(5)
    assert sorted(set(mech.sample(5))) == [0, 1]


def test_unicluster_refuses():
    mech = gamvar.Mechanism.unicluster([2, 2, 2])
    name, q, rationale = gamvar.minimax_q(mech)
    assert name is None and q is None and rationale
    g = np.array([1.0, -2.0, 1.0])
    holds, witness = gamvar.sap_condition(gamvar.q_strict(6), mech, g)
    assert not holds and witness["unit"] != witness["other_unit"]
    with pytest.raises(gamvar.SapViolation):
        gamvar.v_q_hat(mech, [0, 0, 1, 1, 2, 2], [1, 2, 3, 4, 5, 6], g, gamvar.q_strict(6))


def test_split_plot_minimax():
    mech = gamvar.Mechanism.split_plot(4, 2, [2, 2], [1, 1])
    name, q, _ = gamvar.minimax_q(mech)
    assert name == "wholeplot"
    assert np.allclose(q, gamvar.q_wholeplot(4, 2))


def test_config_commands():
    r = gamvar.analyze(FIXTURES / "two_arm.toml", FIXTURES / "two_arm_observed.csv")
    assert r.exit_code == 0
    assert r["estimate"] == 2.0
    assert r["v_q_hat"] == 5.0
    refused = gamvar.analyze(FIXTURES / "splitplot.toml", FIXTURES / "splitplot_observed.csv", q="strict")
    assert refused.exit_code == 3 and refused["refused"]
    assert gamvar.probs(FIXTURES / "two_arm.toml")["support_size"] == "6"
    assert gamvar.check(FIXTURES / "splitplot.toml")["minimax_q"] == "wholeplot"
    assert gamvar.variance_report(FIXTURES / "additive.toml")["variance"] == pytest.approx(5 / 3)
    with pytest.raises(gamvar.ConfigError):
        gamvar.probs(FIXTURES / "bad_field.toml")


def test_oracle_and_simulation():
    assert "cr" in gamvar.battery_names()
    assert gamvar.oracle("cr", 1)["passed"]
    a = gamvar.simulate(models=["I", "IV"], reps=10, seed=3, threads=1)
    b = gamvar.simulate(models=["I", "IV"], reps=10, seed=3, threads=2)
    assert a == b
    assert gamvar.factorial([2, 2], [1, 1])["treatments"] == ["00", "01", "10", "11"]
