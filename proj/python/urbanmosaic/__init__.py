"""Python access to the urbanmosaic corpus tools and query service."""

import json
import os

from ._urbanmosaic import (
    COARSE_DIM,
    DEFAULT_BITS,
    DEFAULT_TAU,
    RAW_BYTES_PER_IMAGE,
    REGION_DIM,
    VECTORS_PER_IMAGE,
    Error,
    FormatError,
    NotFoundError,
    ValidationError,
    _Service,
    max_hamming_within,
)
from ._urbanmosaic import build_index as _build_index
from ._urbanmosaic import generate as _generate

__all__ = [
    "ApiError",
    "Service",
    "build_index",
    "generate",
    "max_hamming_within",
    "storage_stats",
]


class ApiError(Exception):
    """Non-2xx response from the service; carries status, code and message."""

    def __init__(self, status, code, message):
        super().__init__(f"{status} {code}: {message}")
        self.status = status
        self.code = code
        self.message = message


def generate(out, images=1000, clusters=10, seed=7, sigma=0.15):
    """Write a synthetic corpus with planted clusters to `out`."""
    return json.loads(_generate(os.fspath(out), images, clusters, seed, sigma))


def build_index(store, index_dir=None, bits=DEFAULT_BITS, seed=7, threads=0):
    """Hash `store`/features.umfv into `index_dir` (default `store`/index)."""
    store = os.fspath(store)
    index_dir = os.path.join(store, "index") if index_dir is None else os.fspath(index_dir)
    return json.loads(_build_index(os.path.join(store, "features.umfv"), index_dir, bits, seed, threads))


def storage_stats(images, bits=DEFAULT_BITS):
    """Raw versus hashed descriptor storage for `images` images, in bytes."""
    hashed = VECTORS_PER_IMAGE * bits // 8
    return {
        "raw_bytes_per_image": RAW_BYTES_PER_IMAGE,
        "hashed_bytes_per_image": hashed,
        "raw_bytes": images * RAW_BYTES_PER_IMAGE,
        "hashed_bytes": images * hashed,
        "compression_ratio": RAW_BYTES_PER_IMAGE / hashed,
    }


class Service:
    """In-process query service; the same handlers back the HTTP server."""

    def __init__(self, store, index_dir=None, workspace=""):
        store = os.fspath(store)
        index_dir = os.path.join(store, "index") if index_dir is None else os.fspath(index_dir)
        self._service = _Service(store, index_dir, os.fspath(workspace))

    def request(self, method, path, body=None, params=None):
        """Raw call returning (status, body bytes, content type)."""
        payload = body if isinstance(body, str) else ("" if body is None else json.dumps(body))
        return self._service.handle(method, path, payload, params or {})

    def call(self, method, path, body=None, params=None):
        """JSON call; raises ApiError on error statuses."""
        status, data, content_type = self.request(method, path, body, params)
        if status >= 400:
            err = json.loads(data)
            raise ApiError(status, err.get("code"), err.get("message"))
        if content_type != "application/json":
            return data
        return json.loads(data)

    def search(self, spec):
        return self.call("POST", "/query/search", spec)

    def clusters(self, spec):
        return self.call("POST", "/query/clusters", spec)

    def aggregate(self, request):
        return self.call("POST", "/aggregate", request)
