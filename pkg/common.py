from __future__ import annotations

import json
import logging
import os
import typing

from . import utils

DIR = os.path.dirname(__file__)

VERSION = '0.1.0'

log = logging.getLogger(__name__)


class Pseudosphere_Error(Exception):
    """ Base of every error raised by the package. """

    exit_status = 2


class Input_Error(Pseudosphere_Error):
    exit_status = 2


class Parse_Error(Input_Error):

    def __init__(self, message: str, position: typing.Optional[int] = None, text: typing.Optional[str] = None):
        self.message = message
        self.position = position
        self.text = text
        if position is None:
            super().__init__(message)
        else:
            super().__init__(f"{message} at position {position}")


class Model_Error(Input_Error):
    pass


class Config_Error(Input_Error):
    pass


class Initial_Data_Error(Input_Error):
    """ Initial data violates a solver precondition. """


class Algebra_Error(Pseudosphere_Error):
    exit_status = 2


class Laurent_Error(Algebra_Error):
    pass


class Nonlocal_Error(Algebra_Error):
    """ A time derivative needs a quantity the model does not define locally. """


class Evaluation_Error(Pseudosphere_Error):
    exit_status = 2


class Hierarchy_Error(Pseudosphere_Error):
    exit_status = 1


class Numeric_Error(Pseudosphere_Error):
    exit_status = 3


class Blow_Up_Error(Numeric_Error):
    pass


class Stability_Error(Numeric_Error):
    pass


class Settings:

    _sections = ('grid', 'time', 'initial', 'thresholds')
    """ Nested configuration sections whose keys are attributes of the settings. """

    def __init__(self, **kwargs):
        self._update(kwargs)

    @property
    def _dict(self):
        data = {}
        for cls in reversed(type(self).__mro__):
            data.update({key: value for key, value in cls.__dict__.items() if not key.startswith('_') and not callable(value) and not isinstance(value, property)})
        data.update(self.__dict__)
        return data

    def _update(self, values: typing.Mapping[str, typing.Any]):

        flat = {}
        for key, value in values.items():
            if key in self._sections and isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value

        known = self._dict
        for key, value in flat.items():
            if key not in known:
                raise Config_Error(f"Unknown setting for {type(self).__name__}: {key!r}")
            setattr(self, key, value)

        self._validate()
        return self

    def _validate(self):
        pass


class Report:
    """ Lazy evaluated report handler for one command over one model file. """

    _command = None

    def __init__(self, model_path: str, target_dir: str):
        """
        Parameters
        ----------
        model_path: model file path

        target_dir: directory where reports will be placed
        """
        self.model_path = os.path.abspath(model_path)

        self.target_directory = os.path.abspath(target_dir)
        """ Directory where reports will be placed. """

        self.stem = os.path.splitext(os.path.basename(self.model_path))[0]
        """
        A name for the generated files.

        By default the same as the model file's base name without the file extension.
        """

        self.seed = 0
        """ Seed of the probe points, recorded in every report. """

    def _get_model_hash(self):
        return utils.get_file_hash(self.model_path)

    @property
    def json_os_path_target(self):
        return os.path.join(self.target_directory, self.stem + '.manifest.json')

    @property
    def json(self):
        if not os.path.exists(self.json_os_path_target):
            return {}

        with open(self.json_os_path_target, 'r', encoding='utf-8') as json_file:
            try:
                return json.load(json_file)
            except json.decoder.JSONDecodeError:
                return {}

    @property
    def file_settings(self):
        return self.json.get(self._command, {})

    @property
    def _settings_dict(self) -> dict:
        """ Everything the report depends on besides the model file. """
        return {'seed': self.seed}

    def _write_json(self, data: dict):

        base_json_data = self.json

        settings = base_json_data.get(self._command)
        if not settings:
            base_json_data[self._command] = settings = {}

        settings.update(data)
        settings['model_path'] = os.path.realpath(self.model_path)
        settings['model_hash'] = self._get_model_hash()
        settings['settings'] = utils.round_floats(self._settings_dict)
        settings['version'] = VERSION

        utils.write_json(self.json_os_path_target, base_json_data)

    @property
    def os_path_target(self):
        """
        OS style target path
        #### Does not update the files
        """
        return os.path.join(self.target_directory, self.stem + '.' + self._command + '.json')

    @property
    def needs_update(self):

        if not os.path.exists(self.os_path_target):
            return True

        settings = self.file_settings

        if settings.get('model_hash') != self._get_model_hash():
            return True

        if settings.get('settings') != utils.round_floats(self._settings_dict):
            return True

        if settings.get('version') != VERSION:
            return True

        return False

    def _compute(self) -> dict:
        raise NotImplementedError('This function computes the report body.')

    def update(self, forced = False):

        if not (self.needs_update or forced):
            log.info("%s report for %s is up to date", self._command, self.stem)
            return

        os.makedirs(self.target_directory, exist_ok = True)

        log.info("Computing %s report for %s", self._command, self.stem)
        body = self._compute()

        report = {
            'command': self._command,
            'model_hash': self._get_model_hash(),
            'seed': self.seed,
            'version': VERSION,
            'settings': self._settings_dict,
        }
        report.update(body)

        utils.write_json(self.os_path_target, report)

        self._write_json({'passed': body.get('passed'), 'exit_status': body.get('exit_status')})

    @property
    def os_path(self):
        """ OS style path """
        self.update()
        return os.path.realpath(self.os_path_target)

    @property
    def result(self) -> dict:
        """ The report body, computed first only if it is missing or stale. """

        if self.needs_update:
            self.update()

        with open(self.os_path_target, 'r', encoding='utf-8') as json_file:
            return json.load(json_file)

    @property
    def exit_status(self) -> int:
        return self.result.get('exit_status', 0)
