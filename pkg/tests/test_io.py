from collections.abc import Iterable, Sequence
import csv
from dataclasses import dataclass
import json
from typing import Any

import numpy as np
import pytest

from selfpred import __version__
from selfpred.config import OutputFormat
from selfpred.io import ArrayJSONEncoder, Manifest, ResultTable, format_cell, package_versions


@dataclass
class TinyTable(ResultTable):
    names: list[str]
    values: np.ndarray

    def csv_header(self) -> list[str]:
        return ['name', 'value']

    def csv_rows(self) -> Iterable[Sequence[Any]]:
        return zip(self.names, self.values)

    def to_json_obj(self) -> dict[str, Any]:
        return {'names': self.names, 'values': self.values}


@pytest.mark.parametrize(['val', 'fmt', 'output'], [
    (None, None, ''),
    (True, None, 'true'),
    (np.bool_(False), None, 'false'),
    (3, None, '3'),
    ('pi', None, 'pi'),
    (0.1, None, '0.10000000000000001'),
    (np.float64(0.25), None, '0.25'),
    (1 / 3, '.3f', '0.333'),
])
def test_format_cell(val, fmt, output):
    assert format_cell(val, fmt) == output


def test_array_encoder():
    obj = {'arr': np.arange(4.0).reshape(2, 2), 'n': np.int64(3), 'x': np.float64(0.5), 'flag': np.bool_(True)}
    assert json.loads(json.dumps(obj, cls=ArrayJSONEncoder)) == {'arr': [[0.0, 1.0], [2.0, 3.0]], 'n': 3, 'x': 0.5, 'flag': True}
    with pytest.raises(TypeError):
        json.dumps({'bad': object()}, cls=ArrayJSONEncoder)


class TestResultTable:

    @pytest.fixture
    def table(self):
        return TinyTable(names=['a', 'b'], values=np.array([0.5, 1 / 3]))

    def test_save_csv(self, table, tmp_path):
        path = table.save_as(tmp_path / 'tiny.txt', OutputFormat.csv)
        assert path == tmp_path / 'tiny.csv'
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows == [['name', 'value'], ['a', '0.5'], ['b', format(1 / 3, '.17g')]]

    def test_save_json(self, table, tmp_path):
        path = table.save_as(tmp_path / 'tiny', OutputFormat.json)
        assert path == tmp_path / 'tiny.json'
        text = path.read_text()
        assert text.endswith('\n')
        obj = json.loads(text)
        assert obj['names'] == ['a', 'b']
        # floats round-trip exactly
        assert obj['values'][1] == 1 / 3


def test_manifest(tmp_path):
    manifest = Manifest(
        command='cross-table',
        config={'seed': 0},
        config_hash='abc',
        seed=0,
        n_instances=9,
        n_skipped=1,
        outputs=['cross_table.csv'],
    )
    path = tmp_path / 'manifest.json'
    manifest.save(path)
    obj = json.loads(path.read_text())
    assert obj['command'] == 'cross-table'
    assert obj['n_instances'] == 9
    assert obj['n_skipped'] == 1
    assert obj['n_unconverged'] == 0
    assert obj['degenerate'] is False
    assert obj['versions'] == package_versions()
    assert obj['versions']['selfpred'] == __version__
    assert set(obj['versions']) == {'selfpred', 'python', 'numpy', 'scipy'}
