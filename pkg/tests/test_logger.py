import logging

from probeseg.logger import run_log


def test_run_log_captures_package_records(tmp_path):
    path = tmp_path / "run" / "train.log"
    with run_log(path):
        logging.getLogger("probeseg.trainer").info("cycle 3 done")
        logging.getLogger("elsewhere").warning("not ours")
        logging.getLogger("probeseg.membank").debug("too detailed")
    text = path.read_text()
    assert "probeseg.trainer - INFO - cycle 3 done" in text
    assert "not ours" not in text
    assert "too detailed" not in text


def test_run_log_restores_level(tmp_path):
    package = logging.getLogger("probeseg")
    package.setLevel(logging.ERROR)
    try:
        with run_log(tmp_path / "a.log"):
            assert package.level == logging.INFO
        assert package.level == logging.ERROR
        assert not package.handlers
    finally:
        package.setLevel(logging.NOTSET)
