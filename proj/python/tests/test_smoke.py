import filecmp
import json
import os
import shutil
import subprocess

import pytest

import urbanmosaic as um

CLI = os.environ.get("URBANMOSAIC_CLI") or shutil.which("urbanmosaic")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    store = tmp_path_factory.mktemp("store")
    um.generate(store, images=80, clusters=4, seed=3)
    um.build_index(store, seed=3)
    return store


def run_cli(*args, stdin=None):
    if CLI is None:
        pytest.skip("urbanmosaic CLI not built")
    return subprocess.run([CLI, *map(str, args)], input=stdin, capture_output=True, text=True)


def test_storage_constants():
    assert um.RAW_BYTES_PER_IMAGE == 329_728
    stats = um.storage_stats(7_700_000)
    assert stats["hashed_bytes_per_image"] == 2_688
    assert stats["hashed_bytes"] == 7_700_000 * 2_688
    assert abs(stats["raw_bytes"] / 1e12 - 2.54) / 2.54 < 0.01
    assert um.max_hamming_within(0.35, 1024) == 114


def test_self_query_ranks_first(corpus):
    service = um.Service(corpus)
    page = service.search({"constraints": [{"image_id": 9}], "tau": 0.01})
    assert page["hits"][0]["image_id"] == 9
    assert page["hits"][0]["hamming"] == 0
    clusters = service.clusters({"constraints": [{"image_id": 9}], "tau": 0.5})
    assert clusters["total_hits"] >= 1


def test_error_statuses(corpus):
    service = um.Service(corpus)
    with pytest.raises(um.ApiError) as err:
        service.search({"constraints": []})
    assert err.value.status == 422
    assert err.value.code == "empty_constraints"
    status, _, _ = service.request("POST", "/query/search", "{not json")
    assert status == 400
    with pytest.raises(um.ApiError) as err:
        service.call("GET", "/images/99999/meta")
    assert err.value.status == 404


def test_image_bytes_match_blob(corpus):
    service = um.Service(corpus)
    meta = service.call("GET", "/images/4/meta")
    data = service.call("GET", "/images/4")
    assert data == (corpus / meta["blob_ref"]).read_bytes()


def test_workspace_csv_header_only(corpus, tmp_path):
    service = um.Service(corpus, workspace=tmp_path / "ws.jsonl")
    assert service.call("GET", "/workspace/export", params={"format": "csv"}) == b"image_id,timestamp,lat,lon,note\n"


def test_generation_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        result = run_cli("gen", "--seed", 11, "--images", 40, "--clusters", 3, "--out", tmp_path / name)
        assert result.returncode == 0, result.stderr
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    stack = [cmp]
    while stack:
        d = stack.pop()
        assert not d.left_only and not d.right_only
        _, mismatch, errors = filecmp.cmpfiles(d.left, d.right, d.common_files, shallow=False)
        assert not mismatch and not errors
        stack.extend(d.subdirs.values())


def test_cli_query_matches_service(corpus, tmp_path):
    spec = {"constraints": [{"image_id": 12, "crop": [0, 0, 0.5, 1]}], "tau": 0.4, "page_size": 500}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    result = run_cli("query", "--store", corpus, "--index-dir", corpus / "index", "--spec", path)
    assert result.returncode == 0, result.stderr
    assert json.loads(result.stdout) == um.Service(corpus).search(spec)


def test_cli_exit_codes(tmp_path):
    missing = run_cli("query", "--store", tmp_path / "nope", "--index-dir", tmp_path / "nope", "--spec", "-",
                      stdin="{}")
    assert missing.returncode == 3
    assert json.loads(missing.stderr)["error"]
    assert run_cli("no-such-command").returncode == 2
