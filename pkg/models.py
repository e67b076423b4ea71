"""
Model files and run configurations.

A model file is INI text:

```ini
[model]
name = mkdv
field = q
evolution = -6*q^2*q_x - q_xxx
solution = mkdv-soliton

[qr]
q = q
r = -q
A = -1/2*eta^3 - eta*q^2
B = ...
C = ...
```

`evolution` is derived from `[qr]` when absent. `constraints` and `potential_dt` take one `lhs = rhs` per line.
An optional `[f]` section gives the one-form table `f11 ... f32` directly.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import logging
import os
import typing

import sympy

from . import common
from . import structure
from . import symcore

log = logging.getLogger(__name__)

MODELS_DIR = os.path.join(common.DIR, 'models')

MKDV_MODEL = os.path.join(MODELS_DIR, 'mkdv.model')
SINE_GORDON_MODEL = os.path.join(MODELS_DIR, 'sine-gordon.model')

QR_KEYS = ('q', 'r', 'A', 'B', 'C')
F_KEYS = ('f11', 'f12', 'f21', 'f22', 'f31', 'f32')


@dataclasses.dataclass(frozen = True)
class Model_File:

    path: str
    model: symcore.Evolution_Model
    qr: structure.QR_Model
    ft: typing.Optional[structure.F_Table] = None
    solution: typing.Optional[str] = None
    derived: bool = False
    """ The evolution was read off the coefficient data. """

    @property
    def f_table(self) -> structure.F_Table:
        return self.ft if self.ft is not None else structure.qr_to_f(self.qr)


def resolve(path_or_name: str) -> str:
    """ A model file path, or the name of a bundled model such as `mkdv`. """

    if os.path.exists(path_or_name):
        return path_or_name

    bundled = os.path.join(MODELS_DIR, path_or_name if path_or_name.endswith('.model') else path_or_name + '.model')
    if os.path.exists(bundled):
        return bundled

    raise common.Model_Error(f"No model file {path_or_name!r}")


def _lines(text: str) -> typing.List[typing.Tuple[str, str]]:

    pairs = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if '=' not in line:
            raise common.Model_Error(f"Expected 'lhs = rhs', got {line!r}")
        lhs, rhs = line.split('=', 1)
        pairs.append((lhs.strip(), rhs.strip()))

    return pairs


def _names(text: str) -> typing.Tuple[str, ...]:
    return tuple(name for name in text.replace(',', ' ').split() if name)


def _section_expr(section: configparser.SectionProxy, key: str, model: symcore.Evolution_Model) -> sympy.Expr:
    try:
        text = section[key]
    except KeyError:
        raise common.Model_Error(f"[{section.name}] lacks {key!r}") from None
    return symcore.parse(text, model = model)


def loads(text: str, path: str = '<string>') -> Model_File:

    parser = configparser.ConfigParser(interpolation = None)
    parser.optionxform = str

    try:
        parser.read_string(text, source = path)
    except configparser.Error as error:
        raise common.Model_Error(f"Malformed model file {path}: {error}") from error

    for section in ('model', 'qr'):
        if not parser.has_section(section):
            raise common.Model_Error(f"Model file {path} lacks the [{section}] section")

    header = parser['model']
    field = header.get('field', 'q').strip()
    potentials = _names(header.get('potentials', ''))
    fields = _names(header.get('fields', ''))
    name = header.get('name', os.path.splitext(os.path.basename(path))[0]).strip()

    known = set(symcore.DEFAULT_FIELDS) | {field, *potentials, *fields}

    constraints = []
    for lhs, rhs in _lines(header.get('constraints', '')):
        parts = symcore.split_jet(sympy.Symbol(lhs))
        if parts is None or parts[2]:
            raise common.Model_Error(f"Constraint left side must be an x-jet, got {lhs!r}")
        constraints.append((parts[0], parts[1], symcore.parse(rhs, fields = known, potentials = potentials)))

    potential_dt = []
    for lhs, rhs in _lines(header.get('potential_dt', '')):
        if lhs not in potentials:
            raise common.Model_Error(f"{lhs!r} is not a declared potential")
        potential_dt.append((lhs, symcore.parse(rhs, fields = known, potentials = potentials)))

    base = symcore.Evolution_Model(
        field = field,
        constraints = tuple(constraints),
        potentials = potentials,
        potential_dt = tuple(potential_dt),
        fields = fields,
        name = name,
    )

    qr = structure.QR_Model(*(_section_expr(parser['qr'], key, base) for key in QR_KEYS))

    ft = None
    if parser.has_section('f'):
        ft = structure.F_Table(*(_section_expr(parser['f'], key, base) for key in F_KEYS))

    derived = 'evolution' not in header
    if derived:
        model = structure.derive_evolution(qr, base)
        log.info("Derived %s_t = %s for %s", field, symcore.to_text(model.evolution), name)
    else:
        model = base.with_evolution(symcore.parse(header['evolution'], model = base))

    solution = header.get('solution')
    return Model_File(path, model, qr, ft, solution.strip() if solution else None, derived)


def load(path_or_name: str) -> Model_File:
    path = resolve(path_or_name)
    with open(path, 'r', encoding = 'utf-8') as file:
        return loads(file.read(), path)


def load_config(path: str, settings: common.Settings) -> common.Settings:
    """ Apply a JSON run configuration to `settings`. """

    try:
        with open(path, 'r', encoding = 'utf-8') as file:
            data = json.load(file)
    except OSError as error:
        raise common.Config_Error(f"Cannot read run configuration {path}: {error}") from error
    except json.decoder.JSONDecodeError as error:
        raise common.Config_Error(f"Malformed run configuration {path}: {error}") from error

    if not isinstance(data, dict):
        raise common.Config_Error(f"Run configuration {path} must be a JSON object")

    return settings._update(data)
