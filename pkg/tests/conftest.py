import pytest

from motioncfm.data.synthetic import DatasetSpec, FamilySpec, generate_synthetic_dataset


def small_spec(count=6, min_frames=12, max_frames=20):
    families = [FamilySpec(k, count=count) for k in ("stand", "walk", "circle", "wave")]
    return DatasetSpec(families=families, min_frames=min_frames, max_frames=max_frames)


@pytest.fixture(scope="session")
def tiny_data():
    """A handful of short sequences: ``(motions, condition_ids, vocab)``."""
    return generate_synthetic_dataset(small_spec(), seed=0)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
