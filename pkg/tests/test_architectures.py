"""Tests for architecture builders."""

import pytest

from microsleep.architectures import (
    CNN, CNN_LSTM, ArchitectureError, build_architecture, build_cnn, build_cnn_lstm, pool_count,
    repeat_count, temporal_sizes,
)
from microsleep.config import ARCHITECTURE_IDS


class TestLadder:
    @pytest.mark.parametrize("seconds,repeats", [(2, 3), (4, 4), (8, 5), (16, 6), (32, 7)])
    def test_repeat_counts(self, seconds, repeats):
        assert repeat_count(seconds) == repeats

    @pytest.mark.parametrize("seconds", [2, 4, 8, 16, 32])
    def test_ladder_ends_at_one(self, seconds):
        """Every window size reaches temporal size 1 after its last block."""
        spec = build_cnn(seconds)
        assert temporal_sizes(spec.window_samples, pool_count(spec))[-1] == 1

    def test_16s_ladder(self):
        assert temporal_sizes(3200, 10) == [3200, 1599, 798, 398, 198, 98, 48, 23, 10, 4, 1]

    def test_unsupported_window(self):
        with pytest.raises(ArchitectureError, match="Unsupported window"):
            build_cnn(3)


class TestBuilders:
    def test_cnn_layer_order(self):
        kinds = [layer.kind for layer in build_cnn(2).layers]
        assert kinds[0] == "GaussianNoise"
        assert kinds[1:5] == ["Conv1D", "BatchNorm", "ReLU", "MaxPool"]
        assert kinds[-6:] == ["Flatten", "Dropout", "Dense", "ReLU", "Dense", "Softmax"]

    def test_cnn_filters(self):
        filters = [layer.units for layer in build_cnn(4).layers if layer.kind == "Conv1D"]
        assert filters == [8, 16, 32, 64, 128, 128, 128, 128]

    def test_embedding_block(self):
        spec = build_cnn(16, embedding=True)
        kinds = [layer.kind for layer in spec.layers]
        i = kinds.index("Flatten")
        assert kinds[i - 3:i] == ["Conv1D", "BatchNorm", "ReLU"]
        assert spec.layers[i - 3].units == 64 and spec.layers[i - 3].padding == "same"

    def test_cnn_lstm(self):
        spec = build_cnn_lstm()
        assert spec.family == CNN_LSTM
        assert spec.window_samples == 200 and spec.stride_samples == 50
        assert pool_count(spec) == 6
        assert [layer.kind for layer in spec.layers][-3:] == ["LSTM", "Dense", "Softmax"]

    @pytest.mark.parametrize("arch_id", ARCHITECTURE_IDS)
    def test_every_cli_id_builds(self, arch_id):
        spec = build_architecture(arch_id)
        assert spec.arch_id == arch_id
        assert spec.family == (CNN_LSTM if arch_id == "cnn_lstm" else CNN)

    def test_variants(self):
        assert build_architecture("16s_u").weighting == "uniform"
        assert build_architecture("16s").weighting == "inverse"
        single = build_architecture("16s_1c")
        assert single.n_channels == 1 and single.channel_names == ("O1M2",)
        assert build_architecture("16s").channel_names == ("O1M2", "E1M1", "E2M1")

    def test_unknown_id_lists_valid(self):
        with pytest.raises(ArchitectureError, match="16s_u"):
            build_architecture("64s")

    def test_lstm_has_no_embedding(self):
        with pytest.raises(ArchitectureError):
            build_architecture("cnn_lstm", embedding=True)
