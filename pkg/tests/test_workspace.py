import json

import pytest

from core.workspace import Workspace, get_workspace, read_csv, sha256_of


@pytest.fixture
def result_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(Workspace, 'result_dir', tmp_path)
    return tmp_path


def test_published_run_has_a_manifest(result_dir):
    with Workspace('demo') as workspace:
        assert get_workspace() is workspace
        workspace.save_csv('table.csv', ('x', 'y'), [(1, 0.5), (2, None)])
        with workspace.timer('step'):
            workspace.save_json('data.json', {'b': 1, 'a': [1.5]})
        run_dir = workspace.save_as('abc', {'seed': 1})

    assert run_dir.parent == result_dir and run_dir.name.startswith('demo-')
    manifest = json.loads((run_dir / 'manifest.json').read_text())
    assert manifest['command'] == 'demo' and manifest['config_hash'] == 'abc'
    assert manifest['seeds'] == {'seed': 1}
    assert manifest['files'] == {name: sha256_of(run_dir / name) for name in ('data.json', 'table.csv')}
    assert 'step' in manifest['timings'] and 'total' in manifest['timings']
    assert (run_dir / 'data.json').read_text() == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
    assert read_csv(run_dir / 'table.csv') == [{'x': '1', 'y': '0.5'}, {'x': '2', 'y': ''}]
    assert [p.name for p in result_dir.iterdir()] == [run_dir.name]


def test_failed_command_leaves_nothing_behind(result_dir):
    with pytest.raises(RuntimeError):
        with Workspace('demo') as workspace:
            workspace.save_to_file('partial', 'partial.txt')
            raise RuntimeError('boom')
    assert list(result_dir.iterdir()) == []


def test_runs_are_never_overwritten(result_dir):
    names = set()
    for _ in range(3):
        with Workspace('demo') as workspace:
            workspace.save_to_file('x', 'x.txt')
            names.add(workspace.save_as('abc', {}).name)
    assert len(names) == 3


def test_temp_file_names(result_dir):
    with Workspace('demo') as workspace:
        first = workspace.save_to_file('1', 'note.txt', unique=True)
        second = workspace.save_to_file('2', 'note.txt', unique=True)
        assert first != second and second.read_text() == '2'
        workspace.tmpdir.joinpath('folder').mkdir()
        with pytest.raises(IsADirectoryError):
            workspace.path_to_temp_file('folder', unique=False)
