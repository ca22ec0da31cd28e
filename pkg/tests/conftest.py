import dataclasses

import numpy as np
import pytest

from grfasr import corpus
from grfasr.asr import AsrConfig
from grfasr.config import ExperimentConfig, TrainConfig
from grfasr.enhancement import EnhancementConfig
from grfasr.fusion import FusionConfig

ACCEPTANCE_LINES = []
ACCEPTANCE_REPORTS = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(data_dir, out_dir="runs", mode="grf"):
    """Small models and short phases for plumbing tests."""
    cfg = ExperimentConfig(mode=mode)
    cfg.corpus = corpus.SyntheticSpec(utterances=6, test_utterances=2, tokens_per_utt=(2, 3), seed=3)
    cfg.enh = EnhancementConfig(hidden=6, layers=1)
    cfg.fusion = FusionConfig(encoder_hidden=6, out_dim=8, stages=2)
    cfg.asr = AsrConfig(d_model=8, heads=2, d_ff=16, enc_blocks=1, dec_blocks=1, conv_channels=2)
    cfg.train = TrainConfig(enh_steps=4, asr_steps=4, joint_steps=4, warmup=4, log_every=1)
    cfg.beam = 2
    cfg.paths.data_dir = str(data_dir)
    cfg.paths.out_dir = str(out_dir)
    return cfg


def build_corpus(cfg):
    root = cfg.paths.data_dir
    entries = corpus.generate_synthetic_corpus(cfg.corpus, root)
    noise_dir = f"{root}/{cfg.paths.noise_dir}"
    corpus.generate_noise_corpus(noise_dir, seed=0, duration_s=1.0)
    mixed = corpus.build_noisy_sets(entries, noise_dir, seed=0, data_root=root)
    corpus.write_manifest(mixed, f"{root}/{cfg.paths.manifest}")
    return mixed


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """A mixed micro corpus shared (read-only) by plumbing tests."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    cfg = tiny_config(root)
    build_corpus(cfg)
    return root


@pytest.fixture
def tiny_cfg(tiny_data, tmp_path):
    return tiny_config(tiny_data, tmp_path / "runs")


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion; printed in the terminal summary."""

    def report(name, ok, detail="", extra=None):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        if extra:
            ACCEPTANCE_REPORTS.append((name, extra))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
        for name, text in ACCEPTANCE_REPORTS:
            terminalreporter.write_line("")
            terminalreporter.write_line(f"[{name}]")
            for line in text.rstrip().splitlines():
                terminalreporter.write_line(line)


def replace(cfg, **kw):
    return dataclasses.replace(cfg, **kw)
