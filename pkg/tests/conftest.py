from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_font() -> str:
    path = FIXTURES / "fixture.ttf"
    assert path.is_file(), "run scripts/make_fixture_font.py to regenerate"
    return str(path)


@pytest.fixture(scope="session")
def synth_ds():
    """Small shared synthetic corpus (seed 1, 4 fonts x 16 chars, 32px)."""
    from fontfusion.glyph_data import synth_glyph_dataset

    return synth_glyph_dataset(seed=1, n_fonts=4, n_chars=16, size=32)


@pytest.fixture(scope="session")
def probe_run(synth_ds, tmp_path_factory):
    """One short shared training run: a 60-step 32px model on ``synth_ds``.

    Several suites read from it — loss trajectories, metrics layout, and a
    trained checkpoint for the style-mixing inference tests.
    """
    from types import SimpleNamespace

    from fontfusion.trainer import TrainConfig, train

    config = TrainConfig(
        image_size=32,
        channel_base=256,
        channel_max=32,
        batch_size=8,
        total_steps=60,
        seed=11,
        log_every=10,
    )
    out = tmp_path_factory.mktemp("probe")
    state, rows = train(config, synth_ds, out_dir=out)
    return SimpleNamespace(config=config, state=state, rows=rows, out=out)
