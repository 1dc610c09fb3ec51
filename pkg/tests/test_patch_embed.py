import numpy as np
import pytest
import torch
from torch import nn

from src.controllers import UBVMT, apply_mask, embed_tokens, masked_count, patchify, plan_mask, unpatchify
from src.controllers.patch_embed import raw_patches
from src.errors import ConfigError, DataError
from src.models import ImageTensor, MaskPlan, PatchGrid, TokenModality


def random_image(size: int, seed: int = 0) -> ImageTensor:
    return ImageTensor(values=np.random.default_rng(seed).random((size, size, 3)))


class TestPatchify:
    def test_patches_are_standardized(self):
        grid = patchify(random_image(32), patch_size=8)
        assert (grid.grid_h, grid.grid_w, grid.patch_dim) == (4, 4, 192)
        np.testing.assert_allclose(grid.patches.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(grid.patches.var(axis=1), 1.0, rtol=1e-9)

    def test_flat_patch_hits_variance_floor(self):
        image = ImageTensor(values=np.full((8, 8, 3), 0.3))
        np.testing.assert_allclose(patchify(image, 4).patches, 0.0, atol=1e-9)

    def test_grid_order_is_row_major(self):
        values = np.zeros((8, 8, 3))
        values[0:4, 4:8] = 1.0
        patches = raw_patches(ImageTensor(values=values), 4)
        np.testing.assert_array_equal(patches.max(axis=1), [0.0, 1.0, 0.0, 0.0])

    def test_unpatchify_restores_image(self):
        image = random_image(16, seed=3)
        restored = unpatchify(raw_patches(image, 4), 4, 4, 4)
        np.testing.assert_array_equal(restored, image.values)

    def test_indivisible_image(self):
        with pytest.raises(DataError):
            patchify(random_image(10), 4)


class TestMasking:
    def test_masked_count_rounds(self):
        assert masked_count(196, 0.75) == 147
        assert masked_count(16, 0.75) == 12
        assert masked_count(4, 0.75) == 3

    def test_plan_is_sorted_and_reproducible(self):
        plan = plan_mask(196, 0.75, seed=9)
        assert plan.n_masked == 147
        assert list(plan.masked_indices) == sorted(set(plan.masked_indices))
        assert plan == plan_mask(196, 0.75, seed=9)
        assert set(plan.visible_indices).isdisjoint(plan.masked_indices)
        assert len(plan.visible_indices) == 49

    def test_every_patch_is_masked_at_the_ratio(self):
        hits = np.zeros(16)
        trials = 10_000
        for seed in range(trials):
            hits += plan_mask(16, 0.75, seed).mask_vector()
        np.testing.assert_allclose(hits / trials, 0.75, atol=0.02)

    @pytest.mark.parametrize('ratio', [0.0, 1.0, 1.5])
    def test_ratio_out_of_range(self, ratio):
        with pytest.raises(DataError):
            plan_mask(16, ratio, seed=0)


class TestTokens:
    @pytest.fixture
    def model(self, tiny_config):
        return UBVMT(tiny_config)

    @pytest.fixture
    def grids(self):
        return [patchify(random_image(8, seed), 4) for seed in range(3)]

    def test_embedding_shape(self, model, grids, tiny_config):
        tokens = embed_tokens(grids, TokenModality.BIOSENSOR, model)
        assert tuple(tokens.tokens.shape) == (3, 1 + 4, tiny_config.d_model)
        assert tokens.has_cls
        assert tokens.position_ids[0].tolist() == [-1, 0, 1, 2, 3]
        torch.testing.assert_close(tokens.tokens[:, 0], model.cls_token[0].expand(3, -1))

    def test_modalities_use_their_own_type_embedding(self, model, grids):
        with torch.no_grad():
            model.embeddings[str(TokenModality.FACE)].type_embed.fill_(1.0)
        face = embed_tokens(grids, TokenModality.FACE, model).tokens
        bio = embed_tokens(grids, TokenModality.BIOSENSOR, model).tokens
        assert not torch.allclose(face[:, 1:], bio[:, 1:])

    def test_token_is_projection_plus_row_col_and_type(self, model, grids):
        embedding = model.embeddings[str(TokenModality.BIOSENSOR)]
        with torch.no_grad():
            embedding.type_embed.normal_(generator=torch.Generator().manual_seed(2))
        tokens = embed_tokens(grids, TokenModality.BIOSENSOR, model).tokens
        patches = torch.from_numpy(grids[1].patches).float()
        rows, cols = embedding.positions.row_embed, embedding.positions.col_embed
        for i in range(4):
            expected = embedding.proj(patches[i]) + rows[i // 2] + cols[i % 2] + embedding.type_embed
            torch.testing.assert_close(tokens[1, 1 + i], expected)

    def test_affine_in_patch_content(self, model, grids):
        embedding = model.embeddings[str(TokenModality.FACE)]
        with torch.no_grad():
            embedding.proj.bias.zero_()
            embedding.positions.row_embed.zero_()
            embedding.positions.col_embed.zero_()
            embedding.type_embed.zero_()
        scaled = [PatchGrid(patches=-2.5 * g.patches, grid_h=g.grid_h, grid_w=g.grid_w, patch_size=g.patch_size)
                  for g in grids]
        base = embed_tokens(grids, TokenModality.FACE, model).tokens[:, 1:]
        out = embed_tokens(scaled, TokenModality.FACE, model).tokens[:, 1:]
        torch.testing.assert_close(out, -2.5 * base)

    def test_missing_parameters(self, grids):
        with pytest.raises(ConfigError):
            embed_tokens(grids, TokenModality.FACE, nn.Module())

    def test_wrong_grid_size(self, model):
        with pytest.raises(ConfigError):
            embed_tokens([patchify(random_image(16), 4)], TokenModality.FACE, model)

    def test_mask_keeps_cls_and_positions(self, model, grids):
        tokens = embed_tokens(grids, TokenModality.FACE, model)
        plans = [plan_mask(4, 0.75, seed) for seed in range(3)]
        visible = apply_mask(tokens, plans)
        assert tuple(visible.tokens.shape) == (3, 2, tokens.tokens.shape[-1])
        for b, plan in enumerate(plans):
            assert visible.position_ids[b].tolist() == [-1, *plan.visible_indices]
            kept = plan.visible_indices[0] + 1
            torch.testing.assert_close(visible.tokens[b, 1], tokens.tokens[b, kept])
        torch.testing.assert_close(visible.tokens[:, 0], tokens.tokens[:, 0])

    def test_empty_plan_keeps_everything(self, model, grids):
        tokens = embed_tokens(grids, TokenModality.FACE, model)
        visible = apply_mask(tokens, MaskPlan.empty(4))
        torch.testing.assert_close(visible.tokens, tokens.tokens)

    def test_mixed_mask_counts(self, model, grids):
        tokens = embed_tokens(grids[:2], TokenModality.FACE, model)
        plans = [MaskPlan(masked_indices=(0,), n_masked=1, n_patches=4, seed=0),
                 MaskPlan(masked_indices=(0, 1), n_masked=2, n_patches=4, seed=0)]
        with pytest.raises(DataError):
            apply_mask(tokens, plans)

    def test_plan_for_other_grid(self, model, grids):
        tokens = embed_tokens(grids, TokenModality.FACE, model)
        with pytest.raises(DataError):
            apply_mask(tokens, plan_mask(16, 0.75, seed=0))
