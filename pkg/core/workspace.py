import csv
import hashlib
import json
import logging
import tempfile
import time
from collections.abc import Callable, Iterable, Sequence
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from shutil import copytree

from core.consts import DEFAULT_RESULT_DIR, FLOAT_FORMAT, MANIFEST_FILENAME, TOOLKIT_VERSION

logger = logging.getLogger(__name__)


def format_value(value) -> str:
    """Render one CSV cell: floats with a fixed significant-digit format, None as empty."""
    if value is None:
        return ''
    if isinstance(value, float):
        return format(value, FLOAT_FORMAT)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows([format_value(v) for v in row] for row in rows)
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + '\n'


def write_json(path: Path, obj) -> Path:
    path.write_text(json_text(obj), encoding='utf-8')
    return path


def sha256_of(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Workspace:
    """A run directory under construction.

    Commands write their outputs into a temporary directory created under `result_dir`.
    `save_as()` publishes it as `<result_dir>/<command>-<timestamp>/` together with the
    manifest. If the command fails before that, the temporary directory is discarded so
    no partial outputs remain. This class must be used as a context manager::

        with Workspace('sweep-duration') as workspace:
            ...
            workspace.save_as(config_hash, seeds)
    """

    result_dir = Path(DEFAULT_RESULT_DIR)

    def __init__(self, command: str):
        self.command = command
        self.timings: dict[str, float] = {}
        self.produced: list[str] = []

    def __enter__(self):
        self.__class__.result_dir.mkdir(parents=True, exist_ok=True)
        self._tmpdir = tempfile.TemporaryDirectory(dir=self.__class__.result_dir, prefix='.tmp-')
        self._started = time.perf_counter()
        push_workspace(self)
        return self

    def __exit__(self, exc, value, tb):
        self._tmpdir.cleanup()
        pop_workspace()
        if exc is not None:
            logger.debug(f'Discarded outputs of failed command "{self.command}"')

    @property
    def tmpdir(self) -> Path:
        return Path(self._tmpdir.name)

    def _fresh_name(self) -> str:
        """A run directory name that does not exist yet."""
        stem = f'{self.command}-{datetime.today().strftime("%Y%m%d_%H%M%S_%f")}'
        name, suffix = stem, 0
        while (self.__class__.result_dir / name).exists():
            suffix += 1
            name = f'{stem}-{suffix}'
        return name

    def path_to_temp_file(self, filename: str, unique=True) -> Path:
        """Get the absolute path to the file `filename` under the `tmpdir` of current environment.
        If there has already been a directory at that place, raise `IsADirectoryError`."""

        filepath = self.tmpdir / filename

        if unique:
            stem = filepath.stem
            suffix = 0
            while filepath.exists():
                filepath = filepath.with_stem(stem + str(suffix))
                suffix += 1

        elif filepath.is_dir():
            raise IsADirectoryError(f'file name "{filename}" conflicts with an existing directory.')

        return filepath

    def _register(self, filepath: Path) -> Path:
        name = filepath.relative_to(self.tmpdir).as_posix()
        if name not in self.produced:
            self.produced.append(name)
        return filepath

    def save_to_file(self, content: str | bytes, filename: str, unique=False) -> Path:
        """Writes given `content` to a file named `filename` under the tmpdir.
        Returns the absolute path to the file."""

        if isinstance(content, bytes):
            content = content.decode()

        filepath = self.path_to_temp_file(filename, unique)
        filepath.parent.mkdir(parents=True, exist_ok=True)
        filepath.write_text(content, encoding='utf-8')
        return self._register(filepath)

    def save_csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        filepath = self.path_to_temp_file(filename, unique=False)
        filepath.parent.mkdir(parents=True, exist_ok=True)
        return self._register(write_csv(filepath, header, rows))

    def save_json(self, filename: str, obj) -> Path:
        return self.save_to_file(json_text(obj), filename)

    def save_with(self, filename: str, write: Callable[[Path], object]) -> Path:
        """Let `write(path)` produce `filename` under the tmpdir and track it for the manifest."""
        filepath = self.path_to_temp_file(filename, unique=False)
        filepath.parent.mkdir(parents=True, exist_ok=True)
        write(filepath)
        return self._register(filepath)

    @contextmanager
    def timer(self, label: str):
        started = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = round(time.perf_counter() - started, 3)

    def manifest(self, config_hash: str, seeds: dict) -> dict:
        return {
            'command': self.command,
            'config_hash': config_hash,
            'version': TOOLKIT_VERSION,
            'seeds': seeds,
            'files': {name: sha256_of(self.tmpdir / name) for name in sorted(self.produced)},
            'timings': {**self.timings, 'total': round(time.perf_counter() - self._started, 3)}
        }

    def save_as(self, config_hash: str, seeds: dict) -> Path:
        """Write the manifest and publish the run directory. Existing runs are never overwritten."""
        write_json(self.tmpdir / MANIFEST_FILENAME, self.manifest(config_hash, seeds))
        destination = copytree(src=self.tmpdir, dst=self.__class__.result_dir / self._fresh_name())
        logger.info(f'Results saved to {destination}')
        return destination


WORKSPACES_STACK = []


def get_workspace() -> Workspace:
    """Returns the `Workspace` at the top of the stack."""
    return WORKSPACES_STACK[-1]


def push_workspace(workspace) -> None:
    """Push the given workspace onto the stack."""
    WORKSPACES_STACK.append(workspace)


def pop_workspace() -> Workspace:
    """Pop a workspace from the stack."""
    return WORKSPACES_STACK.pop()
