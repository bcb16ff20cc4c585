"""Chunked CSV ingestion shared by every log parser.

Lines are read as raw text and split here rather than by the CSV engine, so a
line with the wrong number of fields is counted as malformed instead of
aborting the whole read.
"""
import csv
import io
import logging
from typing import Iterator

import numpy as np
import pandas as pd

from apps.common.exceptions import ErrorCode, InputError

logger = logging.getLogger(__name__)

EPOCH = pd.Timestamp("1970-01-01", tz="UTC")
TS_FORMATS = ("unix", "rfc3339")


class ByteCounter(io.RawIOBase):
    """Raw stream wrapper that counts the bytes handed to the reader."""

    def __init__(self, raw):
        self.raw = raw
        self.n_bytes = 0

    def readable(self):
        return True

    def readinto(self, buffer):
        data = self.raw.read(len(buffer))
        n = len(data)
        buffer[:n] = data
        self.n_bytes += n
        return n


class CsvReader:
    """
    Iterate a CSV byte stream in chunks of string columns.

    Each chunk is a ``(frame, n_malformed)`` pair where ``frame`` holds the
    stripped fields of the lines with exactly ``len(columns)`` fields.
    """

    def __init__(self, stream, columns: list[str], chunk_rows: int = 1_000_000, source: str = ""):
        self.columns = list(columns)
        self.chunk_rows = chunk_rows
        self.source = source or getattr(stream, "name", "<stream>")
        self.counter = ByteCounter(stream)
        self.text = io.TextIOWrapper(io.BufferedReader(self.counter), encoding="utf-8", errors="replace", newline="")
        self.n_lines = 0
        self.n_malformed = 0
        self._check_header()

    @property
    def n_bytes(self) -> int:
        return self.counter.n_bytes

    def _check_header(self):
        header_line = self.text.readline()
        header = [field.strip() for field in header_line.strip("\r\n").split(",")]
        if header != self.columns:
            raise InputError(
                f"{self.source}: unreadable header",
                data={"expected": ",".join(self.columns), "found": header_line.strip()},
            )

    def __iter__(self) -> Iterator[tuple[pd.DataFrame, int]]:
        n_fields = len(self.columns)
        try:
            chunks = pd.read_csv(
                self.text,
                sep="\x1f",
                header=None,
                names=["line"],
                dtype=str,
                quoting=csv.QUOTE_NONE,
                na_filter=False,
                skip_blank_lines=True,
                chunksize=self.chunk_rows,
            )
            for chunk in chunks:
                if chunk.empty:
                    continue
                parts = chunk["line"].str.split(",", expand=True)
                if parts.shape[1] < n_fields:
                    parts = parts.reindex(columns=range(n_fields))
                good = parts.iloc[:, :n_fields].notna().all(axis=1)
                if parts.shape[1] > n_fields:
                    good &= parts.iloc[:, n_fields:].isna().all(axis=1)
                # undecodable bytes arrive as U+FFFD
                good &= ~chunk["line"].str.contains("\ufffd", regex=False)
                frame = parts.loc[good, list(range(n_fields))].copy()
                frame.columns = self.columns
                for column in self.columns:
                    frame[column] = frame[column].str.strip()
                n_bad = int((~good).sum())
                self.n_lines += len(chunk)
                self.n_malformed += n_bad
                logger.debug(f"{self.source}: {self.n_lines:,} lines read")
                yield frame.reset_index(drop=True), n_bad
        except pd.errors.EmptyDataError:
            return
        # drain so the byte count covers the whole stream
        while self.text.read(1 << 20):
            pass


def parse_timestamps(values: pd.Series, ts_format: str) -> np.ndarray:
    """UTC seconds as float64; unparseable values become NaN."""
    if ts_format == "unix":
        return pd.to_numeric(values, errors="coerce").to_numpy(dtype=float)
    if ts_format == "rfc3339":
        stamps = pd.to_datetime(values, utc=True, errors="coerce", format="ISO8601")
        return (stamps - EPOCH).dt.total_seconds().to_numpy(dtype=float)
    raise InputError(f"Unknown timestamp format '{ts_format}'", ErrorCode.INVALID_VALUE)


def parse_floats(values: pd.Series) -> np.ndarray:
    return pd.to_numeric(values, errors="coerce").to_numpy(dtype=float)


def check_malformed(n_malformed: int, n_lines: int, max_fraction: float, source: str):
    if n_lines and n_malformed / n_lines > max_fraction:
        raise InputError(
            f"{source}: {n_malformed} of {n_lines} lines malformed",
            data={
                "malformed": n_malformed,
                "lines": n_lines,
                "max_fraction": max_fraction,
            },
        )
    if n_malformed:
        logger.warning(f"{source}: skipped {n_malformed} malformed lines of {n_lines}")
