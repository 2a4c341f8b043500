import pytest


@pytest.fixture(autouse=True, scope="session")
def _isolated_cache(tmp_path_factory):
    # keep overlap-table caching inside the test session so runs never
    # touch (or depend on) the user's real cache directory
    import os

    cache = tmp_path_factory.mktemp("overlap_cache")
    old = os.environ.get("OSCBENCH_CACHE")
    os.environ["OSCBENCH_CACHE"] = str(cache)
    yield
    if old is None:
        os.environ.pop("OSCBENCH_CACHE", None)
    else:
        os.environ["OSCBENCH_CACHE"] = old
