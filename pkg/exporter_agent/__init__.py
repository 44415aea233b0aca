from .main import ExporterAgent, load_snapshot, read_pgm, snapshot_header
