"""
Configuration Management Module
==============================
This module handles configuration loading and saving for the DART2 toolkit.

Values come from three layers, later ones winning: the built-in defaults, a
JSON configuration file, and command-line arguments (applied in main.py).
The configuration file path can be redirected with the DART2_CONFIG
environment variable, which may also be set in a local .env file.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import json
import logging
import os

from dotenv import load_dotenv


class Config:
    """Configuration management for the application."""

    CONFIG_FILE = "dart2_config.json"

    DEFAULT_CONFIG = {
        "alpha": 0.05,
        "mode": "robust",
        "layer_alpha_rule": "scaled",
        "max_children": 2,
        "cm": 5,
        "sample_size": 300,
        "reps": 200,
        "seed": 2024,
        "threads": 1,
        "coeffs": "main",
        "log_directory": "logs",
        "output_directory": "results"
    }

    @classmethod
    def config_path(cls):
        """Resolve the configuration file path (DART2_CONFIG overrides the default)."""
        load_dotenv()
        return os.environ.get("DART2_CONFIG", cls.CONFIG_FILE)

    @classmethod
    def load(cls, path=None):
        """
        Load configuration from file, falling back to defaults.

        Args:
            path (str, optional): Explicit configuration file path

        Returns:
            dict: Defaults merged with the file contents
        """
        path = path or cls.config_path()
        config = cls.DEFAULT_CONFIG.copy()

        if os.path.exists(path):
            try:
                with open(path, 'r', encoding='utf-8') as f:
                    loaded = json.load(f)
                unknown = sorted(set(loaded) - set(cls.DEFAULT_CONFIG))
                if unknown:
                    logging.warning(f"Ignoring unknown config keys in {path}: {unknown}")
                for key, value in loaded.items():
                    if key in config:
                        config[key] = value
            except Exception as e:
                logging.warning(f"Failed to load config: {e}. Using defaults.")

        log_dir = os.environ.get("DART2_LOG_DIR")
        if log_dir:
            config["log_directory"] = log_dir

        return config

    @classmethod
    def save(cls, config, path=None):
        """Save configuration to file. Returns the path written."""
        path = path or cls.config_path()
        try:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(config, f, indent=4)
            logging.info(f"Configuration saved to {path}")
        except Exception as e:
            logging.error(f"Failed to save config: {e}")
            raise
        return path
