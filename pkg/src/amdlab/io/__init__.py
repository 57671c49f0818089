"""Config documents, snapshot streams and SVG figures."""

from .config import config_from_dict, config_to_dict, load_config, parse_config, serialize_config
from .figures import render_figures, render_landscape
from .snapshots import SnapshotWriter, decode_snapshot, encode_snapshot, read_snapshots, write_snapshot

__all__ = [
    "config_from_dict", "config_to_dict", "load_config", "parse_config", "serialize_config",
    "render_figures", "render_landscape",
    "SnapshotWriter", "decode_snapshot", "encode_snapshot", "read_snapshots", "write_snapshot",
]
