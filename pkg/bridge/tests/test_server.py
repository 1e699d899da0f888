import io
import json
import subprocess
import sys

import numpy as np
import pytest

from foldbridge.backends import (BackendError, mock_energy, mock_fold,
                                 mode_frequencies, read_pdb_ca, ss_from_coords)
from foldbridge.server import PROTOCOL_VERSION, BridgeConfig, serve


def run_serve(lines, config=None):
    stdin = io.StringIO("".join(line + "\n" for line in lines))
    stdout = io.StringIO()
    serve(config or BridgeConfig(), stdin=stdin, stdout=stdout)
    return [json.loads(line) for line in stdout.getvalue().strip().split("\n")]


def request(seq, need, req_id="r1", anm=None):
    payload = {"id": req_id, "sequence": seq, "need": need}
    if anm:
        payload["anm"] = anm
    return json.dumps(payload)


class TestMockBackends:
    def test_fold_deterministic_per_sequence(self):
        a = mock_fold("ACDEFGHIKL")
        b = mock_fold("ACDEFGHIKL")
        c = mock_fold("ACDEFGHIKM")
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_fold_no_duplicate_positions(self):
        coords = mock_fold("ACDEFGHIKLMNPQRSTVWY")
        d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
        off_diag = d[~np.eye(len(coords), dtype=bool)]
        assert off_diag.min() > 1e-3

    def test_energy_deterministic(self):
        coords = mock_fold("ACDEFGHIKL")
        assert mock_energy("ACDEFGHIKL", coords) == mock_energy("ACDEFGHIKL", coords)

    def test_ss_three_state(self):
        coords = mock_fold("ACDEFGHIKLMNP")
        ss = ss_from_coords(coords)
        assert len(ss) == 13
        assert set(ss) <= {"H", "E", "L"}

    def test_frequencies_normalized_ascending(self):
        coords = mock_fold("ACDEFGHIKLMN")
        freqs = mode_frequencies(coords, cutoff=15.0, k=6)
        assert freqs == sorted(freqs)
        assert freqs[-1] == 1.0
        assert all(0.0 < f <= 1.0 for f in freqs)

    def test_frequencies_insufficient_modes(self):
        coords = mock_fold("ACDE")
        with pytest.raises(BackendError):
            mode_frequencies(coords, cutoff=15.0, k=10)


class TestServeLoop:
    def test_handshake_first(self):
        out = run_serve([])
        assert out[0] == {"protocol": PROTOCOL_VERSION}

    def test_valid_response_invariants(self):
        req = request("ACDEFGHIKL", ["energy", "ss", "coords", "frequencies"],
                      anm={"cutoff": 15.0, "k": 6})
        out = run_serve([req])
        resp = out[1]
        assert resp["id"] == "r1"
        assert len(resp["ss"]) == 10
        assert set(resp["ss"]) <= {"H", "E", "L"}
        assert isinstance(resp["total_energy"], float)
        coords = np.asarray(resp["ca_coords"])
        assert coords.shape == (10, 3)
        assert np.all(np.isfinite(coords))
        freqs = resp["frequencies"]
        assert freqs == sorted(freqs) and freqs[-1] == 1.0

    def test_deterministic_per_sequence(self):
        req = request("MKTAYIAKQR", ["energy", "ss", "coords"])
        out1 = run_serve([req])
        out2 = run_serve([req])
        assert out1 == out2

    def test_malformed_line_keeps_loop_alive(self):
        out = run_serve(["this is not json",
                         request("ACDEF", ["ss", "coords"])])
        assert "parse" in out[1]["error"]
        assert out[2]["id"] == "r1"
        assert len(out[2]["ss"]) == 5

    def test_bad_sequence_is_request_error(self):
        out = run_serve([request("ACXDE", ["ss", "coords"])])
        assert "non-canonical" in out[1]["error"]

    def test_unknown_need_rejected(self):
        out = run_serve([request("ACDEF", ["torsions"])])
        assert "unknown need" in out[1]["error"]

    def test_frequencies_unavailable_without_fold(self):
        config = BridgeConfig(fold_backend="none")
        out = run_serve([request("ACDEFGHIKL", ["frequencies"],
                                 anm={"cutoff": 15.0, "k": 4})], config)
        assert "frequencies unavailable" in out[1]["error"]

    def test_per_request_id_echoed(self):
        out = run_serve([request("ACDEF", ["ss", "coords"], req_id="zz-9")])
        assert out[1]["id"] == "zz-9"


class TestExternalBackends:
    def test_external_fold_via_fake_tool(self, tmp_path):
        # a stand-in "folder" that writes a fixed PDB for any input
        tool = tmp_path / "fakefold.py"
        tool.write_text(
            "import sys\n"
            "fasta, pdb = sys.argv[1], sys.argv[2]\n"
            "seq = open(fasta).read().strip().split('\\n')[1]\n"
            "lines = []\n"
            "for i, aa in enumerate(seq):\n"
            "    lines.append('ATOM  %5d  CA  ALA A%4d    %8.3f%8.3f%8.3f  1.00  0.00           C'\n"
            "                 % (i + 1, i + 1, i * 3.8, (i % 2) * 0.5, 0.0))\n"
            "open(pdb, 'w').write('\\n'.join(lines) + '\\n')\n")
        config = BridgeConfig(
            fold_backend="external",
            fold_command=f"{sys.executable} {tool} {{fasta}} {{pdb}}",
            working_dir=tmp_path / "work")
        out = run_serve([request("ACDEF", ["coords", "ss"])], config)
        coords = np.asarray(out[1]["ca_coords"])
        assert coords.shape == (5, 3)
        assert coords[1][0] == pytest.approx(3.8)

    def test_missing_external_tool_degrades_to_mock(self, tmp_path, capsys):
        config = BridgeConfig(fold_backend="external",
                              fold_command="/no/such/folder {fasta} {pdb}",
                              working_dir=tmp_path)
        out = run_serve([request("ACDEF", ["coords"])], config)
        assert np.asarray(out[1]["ca_coords"]).shape == (5, 3)
        assert "using mock fold" in capsys.readouterr().err

    def test_read_pdb_ca_rejects_empty(self, tmp_path):
        empty = tmp_path / "empty.pdb"
        empty.write_text("REMARK nothing here\n")
        with pytest.raises(BackendError):
            read_pdb_ca(empty)


def test_cli_process_round_trip():
    proc = subprocess.Popen(
        [sys.executable, "-m", "foldbridge", "serve", "--fold", "mock"],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True)
    try:
        req = request("ACDEFGHIKL", ["energy", "ss", "coords"])
        out, _ = proc.communicate(req + "\n", timeout=30)
    finally:
        proc.kill()
    lines = [json.loads(l) for l in out.strip().split("\n")]
    assert lines[0] == {"protocol": 1}
    assert lines[1]["id"] == "r1"
