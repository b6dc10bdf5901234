from os import getcwd, makedirs
import json
import shutil
import logging
from pathlib import Path

import numpy as np
from scipy.stats import gmean
from colorlog import ColoredFormatter


def setup_logger(name, verbose=False):
    LOGFORMAT = "%(log_color)s%(levelname)-8s%(reset)s | %(log_color)s%(message)s%(reset)s"
    formatter = ColoredFormatter(LOGFORMAT)

    logger = logging.getLogger(name)
    if verbose:
        LOG_LEVEL = logging.DEBUG
    else:
        LOG_LEVEL = logging.WARNING
    logger.setLevel(LOG_LEVEL)
    # Only one stream handler per process, setup_logger is called per command
    if not any(getattr(h, '_webdvfs', False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(formatter)
        handler._webdvfs = True
        logger.addHandler(handler)
    return logger


class WebdvfsException(Exception):
    ''' Used to halt code with message '''
    pass


class SchemaMismatch(WebdvfsException):
    pass


class ConfigurationError(WebdvfsException):
    pass


class TrainingError(WebdvfsException):
    pass


OUTPUT_FOLDERS = ['models', 'reports', 'plotdata', 'features', 'traces']


def folder_setup(parentPath=None):
    # create directory structure for output files
    if not parentPath:
        parentPath = Path(getcwd())
    parentPath = Path(parentPath)
    paths = {'parent': parentPath}
    for fd in OUTPUT_FOLDERS:
        paths[fd] = parentPath / fd
    for k, path in paths.items():
        if not path.exists():
            makedirs(path)
    return paths


def cleanup(parentPath):
    parentPath = Path(parentPath)
    for fd in OUTPUT_FOLDERS:
        if (parentPath / fd).exists():
            shutil.rmtree(parentPath / fd)
    return


def geometric_mean(values):
    '''
    Geometric mean of strictly positive ratios

    Raises
    ------
    WebdvfsException
        if the sequence is empty or contains a non-positive value
    '''
    values = np.asarray(list(values), dtype=float)
    if values.size == 0:
        raise WebdvfsException("Geometric mean of an empty sequence")
    if (values <= 0).any():
        raise WebdvfsException("Geometric mean needs strictly positive values")
    return float(gmean(values))


def write_json(path, data):
    # sort_keys keeps repeated runs byte-identical
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    return path


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise WebdvfsException(f"{path} is not valid JSON: {e}")


def write_jsonl(path, records):
    with open(path, 'w') as fid:
        for record in records:
            fid.write(json.dumps(record, sort_keys=True) + "\n")
    return path


def write_csv(path, header, rows, fmt='%s'):
    rows = list(rows)
    if rows:
        np.savetxt(path, np.asarray(rows, dtype=object), delimiter=",", fmt=fmt, header=",".join(header), comments='')
    else:
        Path(path).write_text(",".join(header) + "\n")
    return path


def read_csv(path):
    # Returns the header and the rows as lists of strings
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    return header, rows
