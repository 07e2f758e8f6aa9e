"""Text manifest listing the clips of a corpus with frame counts and checksums.

Fields are tab-separated so names with spaces read back unchanged::

    # translad manifest v2
    name<TAB><corpus name>
    palette<TAB><class1,class2,...>
    clip<TAB><split><TAB><clip_id><TAB><frame_count><TAB><sha256>
"""
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .domain import Split
from .utils import frame_paths

HEADER = '# translad manifest v2'
SEPARATOR = '\t'
MANIFEST_NAME = 'manifest.txt'


@dataclass(frozen=True)
class ManifestEntry:
    split: str
    clip_id: str
    frame_count: int
    checksum: str


@dataclass
class CorpusManifest:
    name: str
    palette: list[str]
    entries: list[ManifestEntry] = field(default_factory=list)

    def to_text(self) -> str:
        rows = [['name', self.name], ['palette', ','.join(self.palette)]]
        for entry in self.entries:
            rows.append(['clip', entry.split, entry.clip_id, str(entry.frame_count), entry.checksum])
        for row in rows:
            for value in row:
                if SEPARATOR in value or '\n' in value or '\r' in value:
                    raise ValueError(f'Manifest field {value!r} contains a tab or line break')
        return '\n'.join([HEADER] + [SEPARATOR.join(row) for row in rows]) + '\n'

    @classmethod
    def from_text(cls, text: str) -> 'CorpusManifest':
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines or lines[0] != HEADER:
            raise ValueError('Not a translad manifest: missing header')
        name = None
        palette = None
        entries = []
        for line in lines[1:]:
            key, _, rest = line.partition(SEPARATOR)
            if key == 'name':
                name = rest
            elif key == 'palette':
                palette = [item for item in rest.split(',') if item]
            elif key == 'clip':
                parts = rest.split(SEPARATOR)
                if len(parts) != 4:
                    raise ValueError(f'Malformed manifest clip line: {line!r}')
                split, clip_id, count, checksum = parts
                entries.append(ManifestEntry(split, clip_id, int(count), checksum))
            else:
                raise ValueError(f'Unknown manifest key {key!r}')
        if name is None or palette is None:
            raise ValueError('Manifest must declare name and palette')
        return cls(name=name, palette=palette, entries=entries)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def save(self, root: Path) -> Path:
        path = Path(root) / MANIFEST_NAME
        path.write_text(self.to_text())
        return path

    @classmethod
    def load(cls, root: Path) -> 'CorpusManifest':
        return cls.from_text((Path(root) / MANIFEST_NAME).read_text())


def clip_checksum(clip_dir: Path, labels_path: Path | None = None) -> str:
    digest = hashlib.sha256()
    for path in frame_paths(clip_dir):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    if labels_path is not None and labels_path.exists():
        digest.update(labels_path.read_bytes())
    return digest.hexdigest()


def build_manifest(root: Path, name: str, palette: list[str]) -> CorpusManifest:
    """Scan the corpus layout on disk and checksum every clip."""
    root = Path(root)
    entries = []
    for split in (Split.TRAIN, Split.TEST):
        split_dir = root / split
        if not split_dir.is_dir():
            continue
        for clip_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            labels_path = split_dir / f'{clip_dir.name}.labels'
            entries.append(ManifestEntry(
                split=str(split),
                clip_id=clip_dir.name,
                frame_count=len(frame_paths(clip_dir)),
                checksum=clip_checksum(clip_dir, labels_path if split == Split.TEST else None),
            ))
    return CorpusManifest(name=name, palette=list(palette), entries=entries)
