"""Shared fixtures for microsleep tests."""

import os

import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance test (needs --runslow)")
    config.addinivalue_line("markers", "mwt: needs the full MWT dataset in MICROSLEEP_MWT_DIR")


def pytest_collection_modifyitems(config, items):
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    skip_mwt = pytest.mark.skip(reason="MICROSLEEP_MWT_DIR not set")
    for item in items:
        if "slow" in item.keywords and not config.getoption("--runslow"):
            item.add_marker(skip_slow)
        if "mwt" in item.keywords and not os.environ.get("MICROSLEEP_MWT_DIR"):
            item.add_marker(skip_mwt)


# ---------------------------------------------------------------------------
# Independent EDF writer (does not use microsleep.ingest)
# ---------------------------------------------------------------------------
def _field(value, width):
    return str(value).ljust(width)[:width].encode("ascii")


def make_edf(signals, rate_hz=200, record_seconds=1.0, phys_min=-500.0, phys_max=500.0,
             dig_min=-32768, dig_max=32767, n_records=None, samples_per_record=None):
    """
    Build EDF bytes from {label: samples}. Samples are quantized with the
    given physical/digital ranges; `samples_per_record` may list a count per
    signal to produce mixed-rate files.
    """
    labels = list(signals)
    ns = len(labels)
    spr = samples_per_record or [int(rate_hz * record_seconds)] * ns
    if n_records is None:
        n_records = len(next(iter(signals.values()))) // spr[0]

    header = b"".join([
        _field("0", 8), _field("patient", 80), _field("recording", 80),
        _field("01.01.20", 8), _field("10.00.00", 8), _field(256 * (ns + 1), 8),
        _field("", 44), _field(n_records, 8), _field(f"{record_seconds:g}", 8), _field(ns, 4),
    ])
    columns = [
        [_field(lbl, 16) for lbl in labels],
        [_field("AgAgCl", 80)] * ns,
        [_field("uV", 8)] * ns,
        [_field(f"{phys_min:g}", 8)] * ns,
        [_field(f"{phys_max:g}", 8)] * ns,
        [_field(dig_min, 8)] * ns,
        [_field(dig_max, 8)] * ns,
        [_field("", 80)] * ns,
        [_field(n, 8) for n in spr],
        [_field("", 32)] * ns,
    ]
    for column in columns:
        header += b"".join(column)

    scale = (dig_max - dig_min) / (phys_max - phys_min)
    body = b""
    for r in range(n_records):
        for lbl, n in zip(labels, spr):
            chunk = np.asarray(signals[lbl], dtype=np.float64)[r * n:(r + 1) * n]
            digital = np.round((chunk - phys_min) * scale + dig_min).astype("<i2")
            body += digital.tobytes()
    return header + body


@pytest.fixture
def edf_factory():
    return make_edf


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------
@pytest.fixture
def synth_pair():
    """A 60-s synthetic recording and its scoring."""
    from microsleep.synthgen import SynthConfig, generate
    return generate(SynthConfig(duration_s=60), seed=1, recording_id="rec001")


@pytest.fixture
def long_synth_pair():
    """A 120-s synthetic recording, long enough to contain every class."""
    from microsleep.synthgen import SynthConfig, generate
    return generate(SynthConfig(duration_s=120), seed=7, recording_id="rec120")


@pytest.fixture
def synth_corpus():
    """Six 60-s synthetic recordings as a Corpus."""
    from microsleep.synthgen import SynthConfig, generate_corpus
    from microsleep.trainer import Corpus
    return Corpus.from_pairs(generate_corpus(6, SynthConfig(duration_s=60), seed=3))


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------
def randomize_buffers(network, seed=0):
    """Give batch-norm layers non-trivial running statistics."""
    rng = np.random.default_rng(seed)
    for name, value in network.buffers().items():
        layer_name, key = name.split("/")
        layer = network.layers[network.names.index(layer_name)]
        if key == "running_mean":
            layer.state[key] = rng.normal(0.0, 0.1, value.shape).astype(value.dtype)
        else:
            layer.state[key] = rng.uniform(0.5, 1.5, value.shape).astype(value.dtype)
    return network


@pytest.fixture
def small_cnn():
    """The 2-s CNN in float64 with randomized batch-norm statistics."""
    from microsleep.architectures import build_cnn
    from microsleep.network import Network
    return randomize_buffers(Network(build_cnn(2), seed=0, dtype=np.float64))


@pytest.fixture
def embedding_cnn():
    from microsleep.architectures import build_cnn
    from microsleep.network import Network
    return randomize_buffers(Network(build_cnn(2, embedding=True), seed=1, dtype=np.float64), seed=1)


# ---------------------------------------------------------------------------
# Settings and folders
# ---------------------------------------------------------------------------
@pytest.fixture
def default_settings():
    """Return a Settings instance with all defaults."""
    from microsleep.settings import Settings
    return Settings.defaults()


@pytest.fixture
def base_dir(tmp_path):
    """A base folder with the standard sub-folders."""
    for name in ("data", "output", "checkpoints", "watch", "logs"):
        (tmp_path / name).mkdir()
    return tmp_path
