import math

import numpy as np
import pytest
import torch

from backsub.losses import (
    LossParams, bootstrap_weights, noise_loss, pixel_l1, reconstruction_loss,
    smooth_mask, soft_mask, total_loss,
)
from oracles import box_average_loops, loss_stack_loops


def test_loss_params_validation():
    with pytest.raises(ValueError):
        LossParams(soft_threshold=0.0)
    with pytest.raises(ValueError):
        LossParams(bootstrap_decay=-1.0)
    with pytest.raises(ValueError):
        LossParams(smoothing_divisor=0)


def test_pixel_l1_hand_values():
    recon = torch.tensor([0.2, 0.5, 0.9]).reshape(1, 3, 1, 1)
    target = torch.tensor([0.1, 0.7, 0.4]).reshape(1, 3, 1, 1)
    assert pixel_l1(recon, target).item() == pytest.approx(0.8, abs=1e-7)
    zero = pixel_l1(target, target)
    assert (zero == 0).all()
    maximal = pixel_l1(torch.zeros(1, 3, 1, 1), torch.ones(1, 3, 1, 1))
    assert maximal.item() == pytest.approx(3.0)
    with pytest.raises(ValueError):
        pixel_l1(torch.zeros(1, 3, 2, 2), torch.zeros(1, 3, 2, 3))


def test_soft_mask_values():
    assert soft_mask(torch.tensor(0.0), 0.25).item() == 0.0
    assert soft_mask(torch.tensor(0.25), 0.25).item() == pytest.approx(math.tanh(1.0), abs=1e-7)
    assert soft_mask(torch.tensor(3.0), 0.25).item() == pytest.approx(1.0, abs=1e-9)


def test_smooth_mask_window_size_and_identity():
    # width 320 with divisor 75 -> half-size 4, a 9x9 window
    mask = torch.zeros(1, 16, 320, dtype=torch.float64)
    mask[0, 8, 160] = 1.0
    smoothed = smooth_mask(mask, 75)
    assert smoothed[0, 8, 160].item() == pytest.approx(1.0 / 81.0)
    assert (smoothed[0, 4:13, 156:165] > 0).all()
    assert smoothed[0, 8, 165].item() == 0.0
    # width below the divisor -> no smoothing at all
    narrow = torch.rand(2, 8, 8, dtype=torch.float64)
    np.testing.assert_array_equal(smooth_mask(narrow, 75).numpy(), narrow.numpy())


def test_smooth_mask_constant_is_preserved():
    mask = torch.full((1, 10, 12), 0.3, dtype=torch.float64)
    smoothed = smooth_mask(mask, 4)  # k=3, 7x7 window with replicate borders
    np.testing.assert_allclose(smoothed.numpy(), 0.3, atol=1e-15)


def test_smooth_mask_single_pixel_box():
    mask = torch.zeros(5, 5, dtype=torch.float64)
    mask[2, 2] = 1.0
    smoothed = smooth_mask(mask, 5)  # k=1 -> 3x3 box
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = 1.0 / 9.0
    np.testing.assert_allclose(smoothed.numpy(), expected, atol=1e-15)


def test_smooth_mask_matches_loop_oracle_bitwise():
    rng = np.random.default_rng(3)
    for trial in range(20):
        divisor = (3, 5, 7, 11)[trial % 4]
        mask = rng.uniform(0, 1, size=(16, 16))
        ours = smooth_mask(torch.from_numpy(mask), divisor).numpy()
        reference = box_average_loops(mask, 16 // divisor)
        np.testing.assert_array_equal(ours, reference)


def test_bootstrap_weights_values():
    assert bootstrap_weights(torch.tensor(0.0), 6.0).item() == 1.0
    assert bootstrap_weights(torch.tensor(1.0), 6.0).item() == pytest.approx(math.exp(-6.0), rel=1e-7)
    ones = bootstrap_weights(torch.rand(4, 4), 0.0)
    assert (ones == 1.0).all()


def test_reconstruction_loss_hand_values():
    l1 = torch.tensor([[[0.4, 1.0]]])
    weights = torch.tensor([[[1.0, math.exp(-6.0)]]])
    expected = (0.4 + math.exp(-6.0) * 1.0) / 2.0
    assert reconstruction_loss(l1, weights).item() == pytest.approx(expected, abs=1e-8)
    assert reconstruction_loss(torch.zeros(2, 3, 3), torch.rand(2, 3, 3)).item() == 0.0
    constant = reconstruction_loss(torch.full((1, 2, 2), 0.8), torch.ones(1, 2, 2))
    assert constant.item() == pytest.approx(0.8, rel=1e-6)


def test_noise_loss_hand_values():
    l1 = torch.full((1, 2, 2), 0.3)
    pred = torch.zeros(1, 2, 2)
    ones = torch.ones(1, 2, 2)
    assert noise_loss(pred, l1, ones).item() == pytest.approx(0.1, rel=1e-6)
    assert noise_loss(l1.clone(), l1, ones).item() == 0.0
    assert noise_loss(pred, l1, torch.zeros(1, 2, 2)).item() == 0.0


def test_total_loss_perfect_reconstruction():
    target = torch.rand(2, 3, 6, 6, dtype=torch.float64)
    bundle = total_loss(target.clone(), torch.zeros(2, 6, 6, dtype=torch.float64), target)
    assert bundle.total.item() == 0.0
    assert (bundle.weights == 1.0).all()


def test_total_loss_beta_zero_is_plain_mean_l1():
    rng = torch.Generator().manual_seed(0)
    target = torch.rand(2, 3, 8, 8, generator=rng, dtype=torch.float64)
    recon = torch.rand(2, 3, 8, 8, generator=rng, dtype=torch.float64)
    noise = torch.rand(2, 8, 8, generator=rng, dtype=torch.float64)
    bundle = total_loss(recon, noise, target, LossParams(bootstrap_decay=0.0))
    l1 = (recon - target).abs().sum(dim=1)
    assert bundle.rec_loss.item() == pytest.approx(l1.mean().item(), abs=1e-12)


def test_total_loss_matches_scalar_loop_oracle():
    rng = np.random.default_rng(11)
    for trial in range(20):
        n = 1 + trial % 3
        params = LossParams(soft_threshold=(0.1, 0.25, 0.4)[trial % 3],
                            bootstrap_decay=(6.0, 2.0, 0.0)[trial % 3],
                            smoothing_divisor=(3, 5, 75)[trial % 3])
        recon = rng.uniform(0, 1, size=(n, 3, 8, 8))
        target = rng.uniform(0, 1, size=(n, 3, 8, 8))
        noise = rng.uniform(0, 1, size=(n, 8, 8))
        bundle = total_loss(torch.from_numpy(recon), torch.from_numpy(noise),
                            torch.from_numpy(target), params)
        rec, noi, total = loss_stack_loops(recon, noise, target,
                                           params.soft_threshold,
                                           params.bootstrap_decay,
                                           params.smoothing_divisor)
        assert bundle.rec_loss.item() == pytest.approx(rec, abs=1e-6)
        assert bundle.noise_loss.item() == pytest.approx(noi, abs=1e-6)
        assert bundle.total.item() == pytest.approx(total, abs=1e-6)


def _well_separated_inputs(n=1, h=4, w=4, margin=5e-2, seed=0):
    """Random float64 inputs with |recon-target| and |noise-l1| bounded away
    from the kinks of the absolute value."""
    rng = np.random.default_rng(seed)
    target = rng.uniform(0.2, 0.8, size=(n, 3, h, w))
    sign = rng.choice([-1.0, 1.0], size=(n, 3, h, w))
    recon = target + sign * rng.uniform(margin, 0.15, size=(n, 3, h, w))
    l1 = np.abs(recon - target).sum(axis=1)
    sign_noise = rng.choice([-1.0, 1.0], size=(n, h, w))
    noise = np.clip(l1 + sign_noise * rng.uniform(margin, 0.2, size=(n, h, w)), 0.0, 1.0)
    # clipping may land exactly on l1; push those away again
    flat = np.abs(noise - l1) < margin / 2
    noise[flat] = l1[flat] + margin
    return recon, noise, target


def test_gradients_match_analytic_formula():
    recon_np, noise_np, target_np = _well_separated_inputs(n=2, seed=1)
    recon = torch.from_numpy(recon_np).requires_grad_(True)
    noise = torch.from_numpy(noise_np).requires_grad_(True)
    target = torch.from_numpy(target_np)
    bundle = total_loss(recon, noise, target)
    bundle.total.backward()

    n, _, h, w = recon_np.shape
    weights = bundle.weights.numpy()
    expected_recon = weights[:, None] * np.sign(recon_np - target_np) / (n * h * w)
    expected_noise = weights * np.sign(noise_np - np.abs(recon_np - target_np).sum(1)) / (3 * n * h * w)
    np.testing.assert_allclose(recon.grad.numpy(), expected_recon, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(noise.grad.numpy(), expected_noise, rtol=1e-10, atol=1e-14)


def test_gradients_match_frozen_finite_differences():
    """Central differences of the loss with the weights and the noise target
    frozen at the base point; this is the contract the optimizer sees."""
    recon_np, noise_np, target_np = _well_separated_inputs(n=1, seed=2)
    recon = torch.from_numpy(recon_np).requires_grad_(True)
    noise = torch.from_numpy(noise_np).requires_grad_(True)
    target = torch.from_numpy(target_np)
    bundle = total_loss(recon, noise, target)
    bundle.total.backward()

    weights = bundle.weights.numpy()
    l1_base = np.abs(recon_np - target_np).sum(axis=1)
    n, _, h, w = recon_np.shape
    eps = 1e-6

    def frozen_loss(r, nz):
        l1 = np.abs(r - target_np).sum(axis=1)
        rec = (weights * l1).mean()
        noi = (weights * np.abs(nz - l1_base)).mean() / 3.0
        return rec + noi

    fd_recon = np.zeros_like(recon_np)
    for idx in np.ndindex(recon_np.shape):
        shifted = recon_np.copy()
        shifted[idx] += eps
        up = frozen_loss(shifted, noise_np)
        shifted[idx] -= 2 * eps
        down = frozen_loss(shifted, noise_np)
        fd_recon[idx] = (up - down) / (2 * eps)
    np.testing.assert_allclose(recon.grad.numpy(), fd_recon, rtol=1e-4)

    fd_noise = np.zeros_like(noise_np)
    for idx in np.ndindex(noise_np.shape):
        shifted = noise_np.copy()
        shifted[idx] += eps
        up = frozen_loss(recon_np, shifted)
        shifted[idx] -= 2 * eps
        down = frozen_loss(recon_np, shifted)
        fd_noise[idx] = (up - down) / (2 * eps)
    np.testing.assert_allclose(noise.grad.numpy(), fd_noise, rtol=1e-4)


def test_noise_prediction_never_touches_rec_loss():
    recon_np, noise_np, target_np = _well_separated_inputs(seed=3)
    recon = torch.from_numpy(recon_np)
    target = torch.from_numpy(target_np)
    a = total_loss(recon, torch.from_numpy(noise_np), target)
    b = total_loss(recon, torch.from_numpy(noise_np * 0.5), target)
    assert a.rec_loss.item() == b.rec_loss.item()
    assert a.noise_loss.item() != b.noise_loss.item()


def test_no_gradient_flows_into_weights_or_noise_target():
    recon_np, noise_np, target_np = _well_separated_inputs(seed=4)
    recon = torch.from_numpy(recon_np).requires_grad_(True)
    noise = torch.from_numpy(noise_np)
    bundle = total_loss(recon, noise, torch.from_numpy(target_np))
    assert not bundle.weights.requires_grad
    assert not bundle.smoothed_mask.requires_grad
    # gradient of the noise term w.r.t. recon must be exactly zero: the
    # target path is severed, so only rec_loss reaches the reconstruction
    grad_noise_term, = torch.autograd.grad(bundle.noise_loss, recon,
                                           retain_graph=True, allow_unused=True)
    assert grad_noise_term is None or (grad_noise_term == 0).all()


def test_monotonicity_in_single_pixel_error():
    rng = np.random.default_rng(5)
    target = torch.from_numpy(rng.uniform(0.3, 0.7, size=(1, 3, 6, 6)))
    recon = target.clone()
    recon[0, 0, 2, 2] += 0.1
    params = LossParams(smoothing_divisor=3)
    small = total_loss(recon.clone(), torch.zeros(1, 6, 6, dtype=torch.float64), target, params)
    recon[0, 0, 2, 2] += 0.15
    large = total_loss(recon, torch.zeros(1, 6, 6, dtype=torch.float64), target, params)
    assert (large.l1_error >= small.l1_error).all()
    assert (large.soft_mask >= small.soft_mask).all()
    assert (large.smoothed_mask >= small.smoothed_mask).all()


def test_l2_ablation_uses_unit_weights_and_squared_error():
    rng = torch.Generator().manual_seed(6)
    target = torch.rand(1, 3, 8, 8, generator=rng, dtype=torch.float64)
    recon = torch.rand(1, 3, 8, 8, generator=rng, dtype=torch.float64)
    noise = torch.rand(1, 8, 8, generator=rng, dtype=torch.float64)
    bundle = total_loss(recon, noise, target, squared_error=True)
    expected = ((recon - target) ** 2).sum(dim=1).mean()
    assert bundle.rec_loss.item() == pytest.approx(expected.item(), rel=1e-12)
    assert (bundle.weights == 1.0).all()
