collect_ignore = ["data"]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: statistical checks over many seeds")
