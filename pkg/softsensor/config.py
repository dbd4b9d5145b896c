import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    """
    Configuration class implementing Singleton pattern for process-level settings.

    This class reads optional environment variables (or a ``.env`` file) that
    control where datasets are looked up, where run artifacts are written,
    how verbose logging is and how many sweep cells may train concurrently.
    Experiment hyperparameters do not live here; they come from INI files
    (see ``cli.config``).

    Attributes:
        __log_level (str): Logging level name used by the CLI entry point
        __data_dir (str): Base directory for relative dataset paths
        __output_dir (str): Default directory for run artifacts
        __sweep_workers (int): Maximum number of sweep cells trained at once

    Example:
        >>> config = Config()
        >>> config.sweep_workers
        1
    """
    _instance = None

    def __new__(cls):
        """
        Create or return the singleton instance of the Config class.

        Returns:
            Config: The singleton instance of the Config class

        Raises:
            ValueError: If SOFTSENSOR_SWEEP_WORKERS is not a positive integer
        """
        if cls._instance is None:
            instance = super().__new__(cls)

            instance.__log_level = os.getenv("SOFTSENSOR_LOG_LEVEL", "INFO").upper()
            instance.__data_dir = os.getenv("SOFTSENSOR_DATA_DIR", ".")
            instance.__output_dir = os.getenv("SOFTSENSOR_OUTPUT_DIR", "runs")
            workers_env = os.getenv("SOFTSENSOR_SWEEP_WORKERS", "1")

            try:
                instance.__sweep_workers = int(workers_env)
            except ValueError:
                raise ValueError("SOFTSENSOR_SWEEP_WORKERS must be a valid integer")
            if instance.__sweep_workers < 1:
                raise ValueError("SOFTSENSOR_SWEEP_WORKERS must be at least 1")

            cls._instance = instance

        return cls._instance

    @classmethod
    def reset(cls):
        """Drop the cached instance so the next access re-reads the environment."""
        cls._instance = None

    @property
    def log_level(self):
        """
        Get the logging level name.

        Returns:
            str: Level name such as ``INFO`` or ``DEBUG``
        """
        return self.__log_level

    @property
    def data_dir(self):
        """
        Get the base directory for relative dataset paths.

        Returns:
            str: Directory prepended to dataset paths that are not absolute
        """
        return self.__data_dir

    @property
    def output_dir(self):
        """
        Get the default artifact directory.

        Returns:
            str: Directory used when neither the config nor ``--out`` names one
        """
        return self.__output_dir

    @property
    def sweep_workers(self):
        """
        Get the sweep concurrency limit.

        Returns:
            int: Number of sweep cells allowed to train at the same time
        """
        return self.__sweep_workers
