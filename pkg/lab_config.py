#!/usr/bin/env python3
"""
Central configuration manager for burgers-lab
Loads experiment defaults from config.json and user config files
"""

import copy
import json
import logging
import os
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config.json")


class ConfigError(ValueError):
    """Invalid or unknown configuration value."""


class LabConfig:
    """Manages solver, experiment and output defaults"""

    def __init__(self, path: str = CONFIG_PATH):
        self.path = path
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from config.json, merged over the built-in defaults"""
        config = self._get_default_config()
        try:
            with open(self.path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except FileNotFoundError:
            logger.warning(f"Config file {self.path} not found, using defaults")
            return config
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Failed to load {self.path}: {e}")
            return config

        for section, values in loaded.items():
            if isinstance(values, dict):
                config.setdefault(section, {}).update(values)
            else:
                config[section] = values
        return config

    def _get_default_config(self) -> Dict[str, Any]:
        """Default configuration if config.json fails to load"""
        return {
            "solver": {
                "cfl": 0.25,
                "t_final": 0.5,
                "initial_projection": "l2",
                "record_every": 50,
                "nu1_variant": "ratio",
                "slope_guard": True,
            },
            "viscosity": {"kind": "nonlinear", "nu": 0.0, "eps": "0"},
            "experiments": {
                "case": "smooth",
                "n_list": [100, 200, 400, 800],
                "delta_list": ["1", "h"],
                "max_workers": 1,
            },
            "reference": {
                "smooth_resolution": 6400,
                "nonsmooth_resolution": 12800,
                "fixed_point_tol": 1e-13,
            },
            "checks": {"n_elems": 100, "seed": 20240101, "oracle_samples": 100},
            "output": {"directory": "output", "table_digits": 3},
            "logging": {
                "enable_debug_logging": False,
                "log_format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
                "progress_every": 500,
                "dump_failed_states": True,
            },
        }

    def get_section(self, section: str) -> Dict[str, Any]:
        """Copy of one configuration section"""
        return copy.deepcopy(self.config.get(section, {}))

    def get_setting(self, section: str, key: str, default: Any = None) -> Any:
        return copy.deepcopy(self.config.get(section, {}).get(key, default))


def load_experiment_file(path: str, allowed_keys) -> Dict[str, Any]:
    """
    Load a user experiment file.

    Args:
        path (str): JSON file with a flat mapping of experiment keys
        allowed_keys: Keys the caller understands

    Returns:
        Dict[str, Any]: The parsed mapping
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")

    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a JSON object")

    unknown = sorted(set(data) - set(allowed_keys))
    if unknown:
        raise ConfigError(f"Unknown keys in {path}: {', '.join(unknown)}")
    logger.info(f"Experiment file loaded: {path}")
    return data


# Global instance
lab_config = LabConfig()


def get_section(section: str) -> Dict[str, Any]:
    """Get one section of the active configuration"""
    return lab_config.get_section(section)


def get_setting(section: str, key: str, default: Optional[Any] = None) -> Any:
    """Get one setting of the active configuration"""
    return lab_config.get_setting(section, key, default)
