import os
import json
import logging
import shutil

import numpy as np
import pandas as pd

from phase_space_core import ContractError, WignerField, make_grid

logger = logging.getLogger(__name__)

EXPORT_FORMATS = ["json", "csv", "txt", "snapshot", "pgm"]
SNAPSHOT_DTYPE = "<f8"
PGM_MAXVAL = 65535


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (pd.DataFrame, pd.Series)):
        return json.loads(value.to_json(orient="records"))
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def snapshot_header(field):
    grid = field.grid
    return {
        "nx": grid.nx, "np": grid.n_p,
        "x_min": grid.x_min, "x_max": grid.x_max,
        "p_min": grid.p_min, "p_max": grid.p_max,
        "hbar": grid.hbar, "mass": grid.mass,
        "time": field.time,
        "dtype": SNAPSHOT_DTYPE, "order": "row-major, row = x index, column = p index",
    }


def sidecar_path(path):
    return os.path.splitext(path)[0] + ".json"


def load_snapshot(path):
    """
    Read a binary field snapshot and its JSON sidecar.

    :param path: path to the .bin file
    :return: WignerField
    """
    with open(sidecar_path(path)) as file:
        header = json.load(file)
    grid = make_grid(header)
    values = np.fromfile(path, dtype=header.get("dtype", SNAPSHOT_DTYPE))
    if values.size != grid.nx * grid.n_p:
        raise ContractError(f"{path} holds {values.size} values, header expects {grid.nx * grid.n_p}")
    return WignerField(grid, values.reshape(grid.nx, grid.n_p).astype(np.float64), float(header["time"]))


def pgm_bytes(field):
    """16-bit big-endian P5 image, x along columns and p increasing upwards."""
    image = field.values.T[::-1, :]
    vmin, vmax = float(image.min()), float(image.max())
    span = vmax - vmin
    if span > 0:
        levels = np.rint((image - vmin) / span * PGM_MAXVAL)
    else:
        levels = np.zeros_like(image)
    height, width = image.shape
    header = f"P5\n# min {vmin!r} max {vmax!r} time {field.time!r}\n{width} {height}\n{PGM_MAXVAL}\n"
    return header.encode("ascii") + levels.astype(">u2").tobytes()


def read_pgm(path):
    """
    Parse a P5 file written by pgm_bytes.

    :return: (levels as uint16 array, comment line)
    """
    with open(path, "rb") as file:
        raw = file.read()
    lines, offset, comment = [], 0, ""
    while len(lines) < 4:
        end = raw.index(b"\n", offset)
        line = raw[offset:end].decode("ascii")
        offset = end + 1
        if line.startswith("#"):
            comment = line[1:].strip()
            continue
        lines.extend(line.split())
    magic, width, height, maxval = lines[0], int(lines[1]), int(lines[2]), int(lines[3])
    if magic != "P5" or maxval != PGM_MAXVAL:
        raise ContractError(f"{path} is not a 16-bit P5 image")
    levels = np.frombuffer(raw[offset:offset + 2 * width * height], dtype=">u2").reshape(height, width)
    return levels, comment


class ExporterAgent:
    """
    Writes every file the laboratory produces.

    Formats: "json", "csv" and "txt" for tables and summaries, "snapshot"
    for raw fields (little-endian float64 plus a JSON sidecar) and "pgm"
    for 16-bit heatmaps.

    Attributes:
        name (str): Name of the agent.
        file_path (str): Path of the next export.
        export_format (str): One of EXPORT_FORMATS.
    """

    def __init__(self, name: str, export_path: str = "results/export.csv", export_format: str = "csv"):
        self.name = name
        self.file_path = export_path
        self.set_export_format(export_format)

    def export_data(self, data):
        """
        Export data to self.file_path in the current format.

        :param data: DataFrame, mapping or WignerField (snapshot/pgm).
        :return: status dictionary
        """
        try:
            directory = os.path.dirname(self.file_path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            if self.export_format == "snapshot":
                self._export_snapshot(data)
            elif self.export_format == "pgm":
                with open(self.file_path, "wb") as file:
                    file.write(pgm_bytes(data))
            else:
                with open(self.file_path, "w", newline="") as file:
                    if self.export_format == "json":
                        if isinstance(data, (pd.DataFrame, pd.Series)):
                            data.to_json(file, orient="records", double_precision=15)
                        else:
                            json.dump(data, file, indent=4, default=_to_builtin)
                    elif self.export_format == "csv":
                        pd.DataFrame(data).to_csv(file, index=False)
                    else:
                        if isinstance(data, (pd.DataFrame, pd.Series)):
                            data.to_string(file, index=False)
                        else:
                            file.write(str(data))
            logger.info("%s: data exported successfully to %s", self.name, self.file_path)
            return {"status": "success", "message": f"Data exported to {self.file_path}"}
        except (OSError, TypeError, ValueError) as e:
            logger.error("%s: export to %s failed: %s", self.name, self.file_path, e)
            return {"status": "error", "message": str(e)}

    def _export_snapshot(self, field):
        field.values.astype(SNAPSHOT_DTYPE).tofile(self.file_path)
        with open(sidecar_path(self.file_path), "w") as file:
            json.dump(snapshot_header(field), file, indent=4)

    def export_config(self, source_path):
        """Copy the originating config file next to the outputs, verbatim."""
        shutil.copyfile(source_path, self.file_path)
        return {"status": "success", "message": f"Config copied to {self.file_path}"}

    def set_export_format(self, format: str):
        """
        Set the export format for the data.
        :param format: one of "json", "csv", "txt", "snapshot", "pgm".
        """
        if format not in EXPORT_FORMATS:
            raise ValueError(f"Unsupported export format '{format}'. Supported formats are {EXPORT_FORMATS}.")
        self.export_format = format

    def set_file_path(self, path: str):
        self.file_path = path

    def get_file_path(self):
        return self.file_path

    def export(self, data, path, format):
        """Set path and format, then export."""
        self.set_file_path(path)
        self.set_export_format(format)
        return self.export_data(data)
