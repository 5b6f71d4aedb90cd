import logging
import os
import tempfile
import unittest

from steinvar.services.logging_utils import setup_logging


class LoggingSetupTest(unittest.TestCase):
    def tearDown(self) -> None:
        self._reset_logger("app")
        self._reset_logger("simulation")

    def test_setup_logging_is_idempotent_for_named_loggers(self) -> None:
        with tempfile.TemporaryDirectory() as tmp_dir:
            app_logger, simulation_logger = setup_logging(tmp_dir)
            app_logger.info("app event")
            simulation_logger.info("simulation event")

            app_logger, simulation_logger = setup_logging(tmp_dir)
            app_logger.info("app event after reset")
            simulation_logger.info("simulation event after reset")

            self._assert_logger_has_expected_handlers(app_logger, file_handlers=1)
            self._assert_logger_has_expected_handlers(simulation_logger, file_handlers=1)

            self.assertTrue(os.path.exists(os.path.join(tmp_dir, "app.log")))
            self.assertTrue(os.path.exists(os.path.join(tmp_dir, "simulation.log")))

            self._reset_logger("app")
            self._reset_logger("simulation")

    def test_console_only_without_directory(self) -> None:
        app_logger, simulation_logger = setup_logging()
        self._assert_logger_has_expected_handlers(app_logger, file_handlers=0)
        self._assert_logger_has_expected_handlers(simulation_logger, file_handlers=0)
        self.assertFalse(app_logger.propagate)

    def test_quiet_raises_console_level(self) -> None:
        app_logger, _ = setup_logging(quiet=True)
        (console,) = app_logger.handlers
        self.assertEqual(console.level, logging.WARNING)

    def _assert_logger_has_expected_handlers(self, logger: logging.Logger, file_handlers: int) -> None:
        self.assertEqual(len(logger.handlers), 1 + file_handlers)
        console = [
            handler
            for handler in logger.handlers
            if isinstance(handler, logging.StreamHandler)
            and not isinstance(handler, logging.FileHandler)
        ]
        files = [handler for handler in logger.handlers if isinstance(handler, logging.FileHandler)]
        self.assertEqual(len(console), 1)
        self.assertEqual(len(files), file_handlers)

    def _reset_logger(self, name: str) -> None:
        logger = logging.getLogger(name)
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()


if __name__ == "__main__":
    unittest.main()
