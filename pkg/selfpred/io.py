"""Reading and writing MDPs, reports, and experiment results (JSON and CSV)."""

from abc import ABC, abstractmethod
from collections.abc import Iterable, Sequence
import csv
import json
from pathlib import Path
import platform
from typing import IO, Any, Optional, Union

from fancy_dataclass import JSONBaseDataclass
import numpy as np
from pydantic.dataclasses import dataclass
import scipy
from typing_extensions import Self

from selfpred import __version__
from selfpred.config import OutputFormat, get_config


AnyPath = Union[str, Path]


###########
# ENCODER #
###########

class ArrayJSONEncoder(json.JSONEncoder):
    """JSONEncoder that represents numpy arrays as nested lists and numpy scalars as Python scalars.
    Floats are written with full round-trip precision."""

    def default(self, obj: Any) -> Any:
        """Customizes JSON encoding of numpy objects."""
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        return super().default(obj)


########
# JSON #
########

class JSONImportable(ABC):
    """Base class for an object that can be converted from a JSON object."""

    @classmethod
    @abstractmethod
    def from_json_obj(cls, obj: Any) -> Self:
        """Constructs the object from a JSON-deserialized object."""


class JSONReadable(JSONImportable):
    """Base class for something that can be read from a JSON file."""

    @classmethod
    def read(cls, fp: IO[str], **kwargs: Any) -> Self:
        """Constructs an object from a JSON file."""
        return cls.from_json_obj(json.load(fp, **kwargs))

    @classmethod
    def load(cls, path: AnyPath) -> Self:
        """Loads an object from a JSON file path."""
        with open(path) as fp:
            return cls.read(fp)


class JSONExportable(ABC):
    """Base class for an object that can be converted to a JSON object."""

    @abstractmethod
    def to_json_obj(self) -> Any:
        """Converts the object to a JSON-serializable object (numpy arrays are allowed)."""


class JSONWritable(JSONExportable):
    """Base class for something that can write to a JSON file."""

    def write(self, fp: IO[str], **kwargs: Any) -> None:
        """Writes to a JSON file."""
        json.dump(self.to_json_obj(), fp, cls=ArrayJSONEncoder, **kwargs)

    def to_json_string(self, **kwargs: Any) -> str:
        """Converts the object to a JSON string."""
        return json.dumps(self.to_json_obj(), cls=ArrayJSONEncoder, **kwargs)

    def save(self, path: AnyPath, indent: Optional[int] = None) -> None:
        """Saves the object to a JSON file path (by default, with the configured indentation)."""
        if indent is None:
            indent = get_config().file.json_indent
        with open(path, 'w') as fp:
            self.write(fp, indent=indent)
            fp.write('\n')


#######
# CSV #
#######

def format_cell(val: Any, float_format: Optional[str] = None) -> str:
    """Renders a single CSV cell; floats use the configured format spec."""
    if val is None:
        return ''
    if isinstance(val, (bool, np.bool_)):
        return str(bool(val)).lower()
    if isinstance(val, (float, np.floating)):
        fmt = get_config().file.float_format if (float_format is None) else float_format
        return format(float(val), fmt)
    return str(val)


class CSVWritable(ABC):
    """Base class for a tabular result that can be written as a CSV file with a header row."""

    @abstractmethod
    def csv_header(self) -> list[str]:
        """Gets the column names."""

    @abstractmethod
    def csv_rows(self) -> Iterable[Sequence[Any]]:
        """Gets the rows, each aligned with the header."""

    def write_csv(self, fp: IO[str]) -> None:
        """Writes the header and rows to a CSV file."""
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(self.csv_header())
        for row in self.csv_rows():
            writer.writerow([format_cell(val) for val in row])

    def save_csv(self, path: AnyPath) -> None:
        """Saves the table to a CSV file path."""
        with open(path, 'w', newline='') as fp:
            self.write_csv(fp)


class ResultTable(JSONWritable, CSVWritable):
    """Base class for an experiment result that can be saved as either JSON or CSV."""

    def save_as(self, path: AnyPath, fmt: OutputFormat) -> Path:
        """Saves the result in the given format, replacing the path's suffix with the format's extension.
        Returns the path written."""
        out = Path(path).with_suffix(f'.{fmt}')
        if fmt == OutputFormat.json:
            self.save(out)
        else:
            self.save_csv(out)
        return out


############
# MANIFEST #
############

def package_versions() -> dict[str, str]:
    """Gets the versions of selfpred, Python, and the numerical libraries."""
    return {
        'selfpred': __version__,
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
    }


@dataclass
class Manifest(JSONWritable):
    """Record of one experiment run: what was run, with which configuration, and what it produced."""
    command: str
    config: dict[str, Any]
    config_hash: str
    seed: int
    n_instances: int
    n_skipped: int
    outputs: list[str]
    degenerate: bool = False
    n_unconverged: int = 0

    def to_json_obj(self) -> dict[str, Any]:
        """Converts the manifest to a JSON object."""
        return {
            'command': self.command,
            'config': self.config,
            'config_hash': self.config_hash,
            'seed': self.seed,
            'n_instances': self.n_instances,
            'n_skipped': self.n_skipped,
            'n_unconverged': self.n_unconverged,
            'degenerate': self.degenerate,
            'outputs': self.outputs,
            'versions': package_versions(),
        }


###########
# RECORDS #
###########

class Record(JSONBaseDataclass, suppress_none=True, store_type='off', validate=False):
    """Base class for flat result records (objective values, fit errors, integrator steps)."""

    def to_json_obj(self) -> dict[str, Any]:
        """Converts the record to a JSON object, omitting unset fields."""
        return self.to_dict()
