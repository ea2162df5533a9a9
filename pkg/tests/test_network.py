import numpy as np
import pytest
import torch
import torch.nn.functional as F

from swapkit.errors import ConfigMismatch, ShapeMismatch
from swapkit.imageio import to_batch
from swapkit.network import (
    AADGenerator,
    AADLayer,
    AttributeFeatureStack,
    ConvIdentityEncoder,
    GeneratorConfig,
    MultiScalePatchDiscriminator,
    ToyEmbedder,
    UNetAttributeEncoder,
    attribute_channels,
    attribute_sizes,
    build_attribute_encoder,
    build_models,
    load_checkpoint,
    restore_models,
    save_checkpoint,
)


def rand_crop(rng, size):
    return rng.uniform(-1, 1, size=(size, size, 3))


class TestGeneratorConfig:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            GeneratorConfig(crop_size=48)

    def test_rejects_too_many_levels(self):
        with pytest.raises(ValueError):
            GeneratorConfig(crop_size=32, n_levels=5)

    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError):
            GeneratorConfig(encoder_variant="vgg")

    def test_unimplemented_variants_exist_as_knob(self):
        config = GeneratorConfig(encoder_variant="linknet")
        with pytest.raises(NotImplementedError):
            build_attribute_encoder(config)


class TestIdentityEncoders:
    def test_outputs_are_unit_norm(self):
        rng = np.random.default_rng(0)
        batch = to_batch([rand_crop(rng, 32) for _ in range(4)])
        for encoder in (ConvIdentityEncoder(16), ToyEmbedder(16)):
            with torch.no_grad():
                out = encoder(batch)
            norms = out.norm(dim=-1)
            assert torch.allclose(norms, torch.ones(4), atol=1e-6)

    def test_zero_crop_still_unit_norm(self):
        batch = torch.zeros(1, 3, 16, 16)
        for encoder in (ConvIdentityEncoder(8), ToyEmbedder(8)):
            with torch.no_grad():
                out = encoder(batch)
            assert abs(out.norm().item() - 1.0) < 1e-6

    def test_toy_embedder_deterministic(self):
        rng = np.random.default_rng(1)
        crop = rand_crop(rng, 16)
        emb = ToyEmbedder(24)
        with torch.no_grad():
            a = emb(to_batch([crop]))
            b = emb(to_batch([crop]))
        assert torch.equal(a, b)
        emb2 = ToyEmbedder(24)
        with torch.no_grad():
            c = emb2(to_batch([crop]))
        assert torch.equal(a, c)

    def test_toy_embedder_matches_matmul_oracle(self):
        rng = np.random.default_rng(2)
        crop_a = rand_crop(rng, 8)
        crop_b = crop_a.copy()
        crop_b[3, 5, 1] = np.clip(crop_b[3, 5, 1] + 0.25, -1, 1)
        emb = ToyEmbedder(identity_dim=16, pool_size=4, seed=99)
        with torch.no_grad():
            va = emb(to_batch([crop_a], torch.float64))[0].numpy()
            vb = emb(to_batch([crop_b], torch.float64))[0].numpy()
        cos_impl = float(va @ vb)

        def by_hand(crop):
            chw = crop.transpose(2, 0, 1)
            pooled = chw.reshape(3, 4, 2, 4, 2).mean(axis=(2, 4))
            feats = np.concatenate([pooled.reshape(-1), [1.0]])
            v = emb.projection.double().numpy() @ feats
            return v / np.linalg.norm(v)

        cos_oracle = float(by_hand(crop_a) @ by_hand(crop_b))
        assert abs(cos_impl - cos_oracle) < 1e-9

    def test_rejects_non_square(self):
        with pytest.raises(ShapeMismatch):
            ToyEmbedder(8)(torch.zeros(1, 3, 8, 16))


class TestAttributeEncoder:
    def test_level_schedule_64(self):
        config = GeneratorConfig(crop_size=64, n_levels=3, base_channels=8)
        enc = UNetAttributeEncoder(config)
        with torch.no_grad():
            stack = enc(torch.randn(2, 3, 64, 64))
        assert stack.spatial_sizes == [8, 16, 32]

    @pytest.mark.parametrize("size,n_levels", [(32, 2), (64, 3), (128, 4)])
    def test_schedule_grid(self, size, n_levels):
        config = GeneratorConfig(crop_size=size, n_levels=n_levels, base_channels=4)
        enc = UNetAttributeEncoder(config)
        with torch.no_grad():
            stack = enc(torch.randn(1, 3, size, size))
        assert stack.spatial_sizes == attribute_sizes(config)
        assert [m.shape[1] for m in stack.levels] == attribute_channels(config)

    def test_zero_image_is_finite(self):
        config = GeneratorConfig(crop_size=32, n_levels=2, base_channels=8)
        enc = UNetAttributeEncoder(config)
        with torch.no_grad():
            stack = enc(torch.zeros(1, 3, 32, 32))
        for level in stack.levels:
            assert torch.isfinite(level).all()

    def test_different_crops_give_different_stacks(self):
        torch.manual_seed(3)
        config = GeneratorConfig(crop_size=32, n_levels=2, base_channels=8)
        enc = UNetAttributeEncoder(config)
        with torch.no_grad():
            s1 = enc(torch.rand(1, 3, 32, 32) * 2 - 1)
            s2 = enc(torch.rand(1, 3, 32, 32) * 2 - 1)
        assert any(not torch.equal(a, b) for a, b in zip(s1.levels, s2.levels))

    def test_wrong_size_rejected(self):
        config = GeneratorConfig(crop_size=32, n_levels=2, base_channels=8)
        with pytest.raises(ShapeMismatch):
            UNetAttributeEncoder(config)(torch.zeros(1, 3, 16, 16))

    def test_stack_rejects_broken_schedule(self):
        with pytest.raises(ShapeMismatch):
            AttributeFeatureStack([torch.zeros(1, 4, 8, 8), torch.zeros(1, 4, 24, 24)])


class TestAADLayer:
    def setup_method(self):
        torch.manual_seed(4)
        self.layer = AADLayer(h_channels=6, att_channels=5, id_dim=8)
        self.hidden = torch.randn(2, 6, 8, 8)
        self.z_att = torch.randn(2, 5, 8, 8)
        self.z_id = F.normalize(torch.randn(2, 8), dim=-1)

    def test_gate_one_selects_identity_branch(self):
        self.layer.mask_override = 1.0
        with torch.no_grad():
            _, ident, _ = self.layer.branches(self.hidden, self.z_att, self.z_id)
            out = self.layer(self.hidden, self.z_att, self.z_id)
        assert torch.equal(out, ident)

    def test_gate_zero_selects_attribute_branch(self):
        self.layer.mask_override = 0.0
        with torch.no_grad():
            attr, _, _ = self.layer.branches(self.hidden, self.z_att, self.z_id)
            out = self.layer(self.hidden, self.z_att, self.z_id)
        assert torch.equal(out, attr)

    def test_recomposition_identity(self):
        with torch.no_grad():
            attr, ident, gate = self.layer.branches(self.hidden, self.z_att, self.z_id)
            out = self.layer(self.hidden, self.z_att, self.z_id)
        recomposed = gate * ident + (1.0 - gate) * attr
        assert torch.allclose(out, recomposed, atol=1e-6)

    def test_spatial_mismatch_rejected(self):
        with pytest.raises(ShapeMismatch):
            self.layer(self.hidden, torch.randn(2, 5, 4, 4), self.z_id)


class TestGenerator:
    def small_setup(self, seed=5):
        torch.manual_seed(seed)
        config = GeneratorConfig(
            crop_size=16, identity_dim=8, n_levels=2, base_channels=4
        )
        gen = AADGenerator(config)
        enc = UNetAttributeEncoder(config)
        x = torch.rand(2, 3, 16, 16) * 2 - 1
        with torch.no_grad():
            stack = enc(x)
        z = F.normalize(torch.randn(2, 8), dim=-1)
        return config, gen, stack, z

    def test_output_shape_and_range(self):
        _, gen, stack, z = self.small_setup()
        with torch.no_grad():
            out = gen(z, stack)
        assert out.shape == (2, 3, 16, 16)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_inference_determinism(self):
        _, gen, stack, z = self.small_setup()
        with torch.no_grad():
            a = gen(z, stack)
            b = gen(z, stack)
        assert torch.equal(a, b)

    def test_wrong_identity_dim_rejected(self):
        _, gen, stack, _ = self.small_setup()
        with pytest.raises(ConfigMismatch):
            gen(torch.randn(2, 12), stack)

    def test_gradient_probe_matches_finite_differences(self):
        torch.manual_seed(6)
        config = GeneratorConfig(crop_size=8, identity_dim=6, n_levels=1, base_channels=4)
        gen = AADGenerator(config).double()
        enc = UNetAttributeEncoder(config).double()
        with torch.no_grad():
            stack = enc(torch.rand(1, 3, 8, 8, dtype=torch.float64) * 2 - 1)
        z = F.normalize(torch.randn(1, 6, dtype=torch.float64), dim=-1)
        weights = torch.randn(1, 3, 8, 8, dtype=torch.float64)

        def probe(vec):
            return (gen(vec, stack) * weights).sum()

        z_var = z.clone().requires_grad_(True)
        grad = torch.autograd.grad(probe(z_var), z_var)[0]

        step = 1e-3
        fd = torch.zeros_like(z)
        for i in range(z.shape[1]):
            delta = torch.zeros_like(z)
            delta[0, i] = step
            with torch.no_grad():
                fd[0, i] = (probe(z + delta) - probe(z - delta)) / (2 * step)
        rel = (fd - grad).norm() / max(fd.norm().item(), 1e-12)
        assert rel.item() <= 1e-3


class TestDiscriminator:
    def test_map_shapes_at_64(self):
        disc = MultiScalePatchDiscriminator(base_channels=8, n_scales=2, n_layers=3)
        with torch.no_grad():
            scores = disc(torch.randn(2, 3, 64, 64))
        assert [tuple(m.shape[-2:]) for m in scores.maps] == [(8, 8), (4, 4)]

    def test_constant_image_finite(self):
        disc = MultiScalePatchDiscriminator(base_channels=8)
        with torch.no_grad():
            scores = disc(torch.zeros(1, 3, 64, 64))
        for m in scores.maps:
            assert torch.isfinite(m).all()

    def test_too_small_input_rejected(self):
        disc = MultiScalePatchDiscriminator(base_channels=8, n_scales=2, n_layers=3)
        with pytest.raises(ShapeMismatch):
            disc(torch.zeros(1, 3, 8, 8))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        config = GeneratorConfig(crop_size=16, identity_dim=8, n_levels=2, base_channels=4)
        swapper = build_models(config, embedder="toy", seed=7, disc_base_channels=4)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, swapper, step=17)
        restored, step = restore_models(path)
        assert step == 17
        assert restored.config == config
        for name, state in swapper.state_dicts().items():
            for key, tensor in state.items():
                assert torch.equal(tensor, restored.state_dicts()[name][key]), (name, key)

    def test_config_mismatch_rejected(self, tmp_path):
        config = GeneratorConfig(crop_size=16, identity_dim=8, n_levels=2, base_channels=4)
        swapper = build_models(config, embedder="toy", seed=8, disc_base_channels=4)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, swapper)
        other = GeneratorConfig(crop_size=32, identity_dim=8, n_levels=2, base_channels=4)
        with pytest.raises(ConfigMismatch):
            load_checkpoint(path, expected_config=other)
