import concurrent.futures
import csv
import hashlib
import json
import math
import multiprocessing
import typing

FLOAT_DIGITS = 12

T = typing.TypeVar('T')
T2 = typing.TypeVar('T2')


def get_file_hash(path: str) -> str:
    sha256 = hashlib.sha256()
    with open(path, 'rb') as file:
        for chunk in iter(lambda: file.read(1 << 16), b''):
            sha256.update(chunk)
    return sha256.hexdigest()


def round_floats(data, digits = FLOAT_DIGITS):
    """ Fixed precision copy of a JSON-like structure. Non-finite floats become strings. """

    if isinstance(data, bool) or data is None:
        return data

    if isinstance(data, float) or type(data).__module__ == 'numpy' and hasattr(data, 'dtype') and data.dtype.kind == 'f':
        value = float(data)
        if not math.isfinite(value):
            return str(value)
        return float(format(value, f'.{digits}g'))

    if type(data).__module__ == 'numpy' and hasattr(data, 'tolist'):
        return round_floats(data.tolist(), digits)

    if isinstance(data, dict):
        return {str(key): round_floats(value, digits) for key, value in data.items()}

    if isinstance(data, (list, tuple)):
        return [round_floats(value, digits) for value in data]

    return data


def write_json(path: str, data):
    with open(path, 'w', encoding='utf-8') as json_file:
        json.dump(round_floats(data), json_file, indent=4, ensure_ascii=False, sort_keys=True)
        json_file.write('\n')


def write_csv(path: str, rows: typing.List[dict], fieldnames: typing.Optional[typing.List[str]] = None):

    if fieldnames is None:
        fieldnames = []
        for row in rows:
            for key in row:
                if not key in fieldnames:
                    fieldnames.append(key)

    with open(path, 'w', encoding='utf-8', newline='') as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames = fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(round_floats(row))


def _encode_dill(object):
    import dill

    # dumps results are not reproducible, roundtrip equality checking fails with closures · Issue #481 · uqfoundation/dill
    # https://github.com/uqfoundation/dill/issues/481
    unsorted_batch_setitems = dill.Pickler._batch_setitems

    def _batch_setitems(self, items, *args, **kwargs):
        items = list(items)
        try:
            items = sorted(items)
        except TypeError:
            pass
        unsorted_batch_setitems(self, items, *args, **kwargs)

    dill.Pickler._batch_setitems = _batch_setitems
    try:
        return dill.dumps(object, recurse = True)
    finally:
        dill.Pickler._batch_setitems = unsorted_batch_setitems


def _run_dill(func_dump: bytes, item_dump: bytes):
    import dill
    return dill.dumps(dill.loads(func_dump)(dill.loads(item_dump)), recurse = True)


def parallel_map(func: typing.Callable[[T], T2], items: typing.Iterable[T], workers = 1) -> typing.List[T2]:
    """
    Ordered map over independent work items.

    With `workers > 1` the callable and the items are serialized with `uqfoundation/dill`,
    so closures and lambdas over symbolic expressions can cross the process boundary.
    """

    items = list(items)

    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    import dill

    context = None
    if 'fork' in multiprocessing.get_all_start_methods():
        context = multiprocessing.get_context('fork')

    func_dump = _encode_dill(func)

    with concurrent.futures.ProcessPoolExecutor(max_workers = workers, mp_context = context) as executor:
        futures = [executor.submit(_run_dill, func_dump, _encode_dill(item)) for item in items]
        return [dill.loads(future.result()) for future in futures]


