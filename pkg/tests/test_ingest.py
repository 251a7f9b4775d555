"""Tests for EDF parsing/writing and scoring files."""

import numpy as np
import pytest

from microsleep.ingest import (
    ChannelError, EdfError, Label, LabelFileError, LabelTrack, Recording, declared_duration,
    label_runs, parse_edf, parse_labels, select_channels, write_edf, write_labels,
)


def _signals(n=400, seed=0):
    rng = np.random.default_rng(seed)
    return {name: rng.uniform(-200, 200, n) for name in ("O1M2", "O2M1", "E1M1", "E2M1")}


# ---------------------------------------------------------------------------
# EDF parsing
# ---------------------------------------------------------------------------
class TestParseEdf:
    def test_four_channels_at_200hz(self, edf_factory):
        """A well-formed file decodes to samples x channels at 200 Hz."""
        signals = _signals()
        rec = parse_edf(edf_factory(signals), "a")
        assert rec.rate_hz == 200
        assert rec.channel_names == ("O1M2", "O2M1", "E1M1", "E2M1")
        assert rec.data.shape == (400, 4)

    def test_digital_to_physical_mapping(self, edf_factory):
        """Physical values come back within one quantization step."""
        signals = _signals()
        rec = parse_edf(edf_factory(signals))
        step = 1000.0 / 65535
        for name, samples in signals.items():
            assert np.max(np.abs(rec.channel(name) - samples)) <= step

    def test_mixed_rates_rejected(self, edf_factory):
        """Signals with different samples per record are refused."""
        signals = {"O1M2": np.zeros(400), "E1M1": np.zeros(200)}
        blob = edf_factory(signals, samples_per_record=[200, 100], n_records=2)
        with pytest.raises(EdfError, match="differing sampling rates"):
            parse_edf(blob)

    def test_truncated_data(self, edf_factory):
        blob = edf_factory(_signals())
        with pytest.raises(EdfError, match="Truncated"):
            parse_edf(blob[:-10])

    def test_short_blob(self):
        with pytest.raises(EdfError):
            parse_edf(b"0       ")

    def test_bad_header_count(self, edf_factory):
        """The header byte field must equal 256*(signals+1)."""
        blob = bytearray(edf_factory(_signals()))
        blob[184:192] = b"999     "
        with pytest.raises(EdfError, match="Header byte count"):
            parse_edf(bytes(blob))

    def test_unknown_record_count(self, edf_factory):
        """A record count of -1 is inferred from the payload size."""
        blob = bytearray(edf_factory(_signals()))
        blob[236:244] = b"-1      "
        assert parse_edf(bytes(blob)).duration_samples == 400


class TestWriteEdf:
    def test_round_trip_within_quantization(self):
        """write_edf output parses back to the same samples."""
        rng = np.random.default_rng(2)
        data = rng.normal(0, 40, (450, 4))
        rec = Recording("x", 200.0, ("O1M2", "O2M1", "E1M1", "E2M1"), data)
        back = parse_edf(write_edf(rec), "x")
        assert back.duration_samples == 600  # padded to whole records
        span = data.max(axis=0) - data.min(axis=0)
        assert np.all(np.abs(back.data[:450] - data) <= span / 65535 + 1e-3)
        np.testing.assert_allclose(back.data[450:], np.repeat(back.data[449:450], 150, axis=0))

    def test_constant_channel(self):
        rec = Recording("c", 200.0, ("O1M2",), np.full((200, 1), 7.0))
        back = parse_edf(write_edf(rec))
        np.testing.assert_allclose(back.data, 7.0, atol=1e-3)


# ---------------------------------------------------------------------------
# Recording helpers
# ---------------------------------------------------------------------------
class TestRecording:
    def test_select_channels_order(self):
        rec = Recording("r", 200.0, ("A", "B", "C"), np.arange(6.0).reshape(2, 3))
        sub = select_channels(rec, ["C", "A"])
        assert sub.channel_names == ("C", "A")
        np.testing.assert_array_equal(sub.data, [[2, 0], [5, 3]])

    def test_missing_channel(self):
        rec = Recording("r", 200.0, ("A",), np.zeros((2, 1)))
        with pytest.raises(ChannelError, match="O1M2"):
            select_channels(rec, ["O1M2"])

    def test_data_is_read_only(self):
        rec = Recording("r", 200.0, ("A",), np.zeros((2, 1)))
        with pytest.raises(ValueError):
            rec.data[0, 0] = 1.0


# ---------------------------------------------------------------------------
# Scoring files
# ---------------------------------------------------------------------------
class TestParseLabels:
    def test_intervals_and_default_wake(self):
        track = parse_labels("# header\n10,20,MSE\n30,35,ED\n", 40)
        assert track.length == 40
        assert np.all(track.labels[10:20] == Label.MSE)
        assert np.all(track.labels[30:35] == Label.ED)
        assert np.sum(track.labels == Label.W) == 25

    def test_overlap_rejected(self):
        with pytest.raises(LabelFileError, match="Overlapping"):
            parse_labels("0,10,MSE\n5,15,ED\n", 20)

    def test_out_of_range_rejected(self):
        with pytest.raises(LabelFileError, match="outside"):
            parse_labels("0,25,MSE\n", 20)

    def test_unknown_class(self):
        with pytest.raises(LabelFileError, match="Unknown class"):
            parse_labels("0,5,NREM\n", 20)

    def test_write_labels_inverse(self):
        labels = np.array([0, 0, 1, 1, 1, 0, 2, 3, 3, 0], dtype=np.int8)
        text = write_labels(LabelTrack(labels))
        np.testing.assert_array_equal(parse_labels(text, 10).labels, labels)

    def test_duration_header(self):
        text = write_labels(LabelTrack(np.array([0, 1, 1, 0], dtype=np.int8)))
        assert text.splitlines()[0] == "# duration=4"
        assert declared_duration(text) == 4
        assert declared_duration("0,2,MSE\n") is None

    def test_duration_header_must_match(self):
        with pytest.raises(LabelFileError, match="covers 4 samples, expected 5000"):
            parse_labels("# duration=4\n1,3,MSE\n", 5000)

    def test_bad_duration_header(self):
        with pytest.raises(LabelFileError, match="duration"):
            parse_labels("# duration=long\n", 10)

    def test_label_runs(self):
        assert label_runs(np.array([0, 0, 1, 0])) == [(0, 2, 0), (2, 3, 1), (3, 4, 0)]
        assert label_runs(np.array([])) == []
