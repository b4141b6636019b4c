import numpy as np
import pytest

from softseg import CosineSchedule, adam_step, cosine_lr, init_adam
from softseg.autodiff import Tensor


def scalar_params(value=1.0):
    return {"w": Tensor(np.array([value]))}


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        params = scalar_params(3.0)
        state = init_adam(params)
        adam_step(state, params, {"w": np.zeros(1)}, lr=0.1)
        assert params["w"].data[0] == 3.0

    def test_first_step_is_bias_corrected_unit_step(self):
        params = scalar_params(1.0)
        state = init_adam(params)
        adam_step(state, params, {"w": np.ones(1)}, lr=0.1)
        # m_hat = v_hat = 1 after bias correction, so the update is lr/(1+eps)
        assert params["w"].data[0] == pytest.approx(0.9, abs=1e-8)

    def test_deterministic_across_runs(self):
        def run():
            rng = np.random.default_rng(60)
            params = {"w": Tensor(rng.standard_normal((4, 3)))}
            state = init_adam(params)
            for step in range(10):
                grad = rng.standard_normal((4, 3))
                adam_step(state, params, {"w": grad}, lr=0.01)
            return params["w"].data.tobytes()

        assert run() == run()

    def test_shape_mismatch_rejected(self):
        params = scalar_params()
        state = init_adam(params)
        with pytest.raises(ValueError, match="shape"):
            adam_step(state, params, {"w": np.zeros((2, 2))}, lr=0.1)

    def test_key_mismatch_rejected(self):
        params = scalar_params()
        state = init_adam(params)
        with pytest.raises(ValueError, match="keys"):
            adam_step(state, params, {"other": np.zeros(1)}, lr=0.1)

    def test_defaults_match_training_protocol(self):
        state = init_adam(scalar_params())
        assert state.beta1 == 0.9
        assert state.beta2 == 0.999
        assert state.weight_decay == 0.0


class TestCosineSchedule:
    def test_endpoints_exact(self):
        schedule = CosineSchedule(total_steps=150)
        assert cosine_lr(schedule, 0) == 1e-2
        assert cosine_lr(schedule, 150) == 1e-4

    def test_midpoint(self):
        schedule = CosineSchedule(total_steps=100)
        assert cosine_lr(schedule, 50) == pytest.approx(5.05e-3, abs=1e-12)

    def test_monotone_decreasing(self):
        schedule = CosineSchedule(total_steps=40)
        values = [cosine_lr(schedule, s) for s in range(41)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_out_of_range_step_rejected(self):
        schedule = CosineSchedule(total_steps=10)
        with pytest.raises(ValueError):
            cosine_lr(schedule, -1)
        with pytest.raises(ValueError):
            cosine_lr(schedule, 11)

    def test_invalid_schedule_rejected(self):
        with pytest.raises(ValueError):
            CosineSchedule(total_steps=0)
        with pytest.raises(ValueError):
            CosineSchedule(total_steps=10, lr_start=1e-4, lr_end=1e-2)
        with pytest.raises(ValueError):
            CosineSchedule(total_steps=10, lr_start=1e-2, lr_end=0.0)
