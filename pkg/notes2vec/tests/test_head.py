import math

import pytest
import torch

from notes2vec import HeadSpec, build_head


class TestHeadSpec:
    @pytest.mark.parametrize("n,expected", [(2, 40), (4, 56), (8, 79), (16, 111), (32, 157)])
    def test_hidden_width_formula_at_768(self, n, expected):
        assert HeadSpec(768, n).hidden1 == expected

    def test_toy_encoder_width(self):
        assert HeadSpec(64, 2).hidden1 == 12

    def test_formula_holds_generally(self):
        for input_dim in (16, 48, 64, 300, 768, 1024):
            for n in (1, 2, 3, 8, 32):
                assert HeadSpec(input_dim, n).hidden1 == math.ceil(math.sqrt(input_dim * n))

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            HeadSpec(0, 2)
        with pytest.raises(ValueError):
            HeadSpec(768, 0)


class TestBuildHead:
    def test_layer_shapes(self):
        head = build_head(HeadSpec(768, 2))
        assert head.fc1.in_features == 768 and head.fc1.out_features == 40
        assert head.fc2.in_features == 40 and head.fc2.out_features == 2
        assert head.out.in_features == 2 and head.out.out_features == 1
        assert head.dropout.p == 0.1

    def test_forward_returns_embedding_and_single_logit(self):
        torch.manual_seed(0)
        head = build_head(HeadSpec(64, 3)).eval()
        embedding, logit = head(torch.randn(5, 64))
        assert embedding.shape == (5, 3)
        assert logit.shape == (5,)
        assert (embedding >= 0).all()  # rectified activation

    def test_eval_mode_is_deterministic(self):
        torch.manual_seed(1)
        head = build_head(HeadSpec(32, 2)).eval()
        x = torch.randn(4, 32)
        a, _ = head(x)
        b, _ = head(x)
        assert torch.equal(a, b)

    def test_train_mode_applies_dropout(self):
        torch.manual_seed(2)
        head = build_head(HeadSpec(32, 4)).train()
        x = torch.randn(64, 32)
        _, la = head(x)
        _, lb = head(x)
        assert not torch.equal(la, lb)
