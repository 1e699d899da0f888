import json
import sys
import textwrap

import yaml

from seqswarm.cli import main
from seqswarm.fasta import read_fasta, write_fasta
from seqswarm.trajectory import read_trajectory

GOOD_STUB = """
import json, sys
print(json.dumps({"protocol": 1}), flush=True)
for line in sys.stdin:
    req = json.loads(line)
    n = len(req["sequence"])
    print(json.dumps({
        "id": req["id"],
        "total_energy": -1.0 * n,
        "energy_terms": {"contact": -1.0 * n},
        "ss": "L" * n,
        "ca_coords": [[i * 3.8, (i % 2) * 0.7, 0.0] for i in range(n)],
    }), flush=True)
"""


def write_config(tmp_path, **overrides):
    cfg = {
        "objective": {
            "name": "all-helix",
            "prompt": "Make every position helical.",
            "scorer": {"type": "ss_composition", "target": "H" * 10},
        },
        "start_sequence": "S" * 10,
        "iterations": 2,
        "seed": 5,
        "policy": {"type": "keep"},
        "evaluator": {"type": "builtin"},
        "output": str(tmp_path / "run.jsonl"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_design_minimal(tmp_path, capsys):
    config = write_config(tmp_path)
    assert main(["design", "--config", str(config)]) == 0
    out = capsys.readouterr().out
    assert "best sequence" in out
    data = read_trajectory(tmp_path / "run.jsonl")
    assert len(data.records) == 2


def test_design_missing_start_sequence(tmp_path, capsys):
    config = write_config(tmp_path)
    raw = yaml.safe_load(config.read_text())
    del raw["start_sequence"]
    config.write_text(yaml.safe_dump(raw))
    assert main(["design", "--config", str(config)]) == 3
    assert "start_sequence" in capsys.readouterr().err


def test_iterations_override(tmp_path):
    config = write_config(tmp_path)
    assert main(["design", "--config", str(config), "--iterations", "64",
                 "--policy", "propensity:H:0.5"]) == 0
    data = read_trajectory(tmp_path / "run.jsonl")
    assert len(data.records) == 64


def test_flag_precedence_over_file(tmp_path):
    config = write_config(tmp_path, iterations=2, seed=5)
    assert main(["design", "--config", str(config), "--seed", "9",
                 "--iterations", "3"]) == 0
    data = read_trajectory(tmp_path / "run.jsonl")
    assert len(data.records) == 3


def test_resume_subcommand(tmp_path):
    config = write_config(tmp_path, iterations=4,
                          policy={"type": "propensity", "target_ss": "H",
                                  "temperature": 0.5})
    assert main(["design", "--config", str(config), "--iterations", "2"]) == 0
    # same config hash requires identical effective config on resume
    assert main(["resume", "--config", str(config), "--iterations", "2"]) == 0
    data = read_trajectory(tmp_path / "run.jsonl")
    assert len(data.records) == 2


def test_analyze_hamming(tmp_path):
    config = write_config(tmp_path, iterations=4,
                          policy={"type": "random", "seed": 3})
    main(["design", "--config", str(config)])
    out = tmp_path / "hamming.csv"
    assert main(["analyze-hamming", "--trajectory", str(tmp_path / "run.jsonl"),
                 "--output", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("# seqswarm")
    assert "config_hash=" in lines[0]
    assert len(lines) == 1 + 4
    assert len(lines[1].split(",")) == 4


def test_analyze_convergence(tmp_path):
    config = write_config(tmp_path, iterations=3)
    main(["design", "--config", str(config)])
    out = tmp_path / "conv.csv"
    assert main(["analyze-convergence", "--trajectory",
                 str(tmp_path / "run.jsonl"), "--output", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[1] == "iteration,total_energy,objective_score,accepted"
    assert len(lines) == 2 + 3


def test_analyze_logo_from_fasta(tmp_path):
    fasta = tmp_path / "corpus.fasta"
    write_fasta(fasta, [("a", "ACDE"), ("b", "ACDF"), ("c", "ACDE")])
    out = tmp_path / "logo.csv"
    assert main(["analyze-logo", "--input", str(fasta), "--output", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 2 + 4  # header comment + column row + 4 positions


def test_analyze_embed_three_sources(tmp_path):
    rng_letters = ["ACDEFYKL", "MNPQRSTV", "WYACDEGH"]
    paths = []
    for i, letters in enumerate(rng_letters):
        fasta = tmp_path / f"src{i}.fasta"
        records = [(f"s{j}", letters[j % 4:] + letters[:j % 4 + 4]) for j in range(4)]
        # enforce equal-ish lengths not required for embedding
        write_fasta(fasta, records)
        paths.append(fasta)
    out = tmp_path / "embed.csv"
    argv = ["analyze-embed", "--output", str(out), "--seed", "1",
            "--max-iter", "150"]
    for i, p in enumerate(paths):
        argv += ["--input", f"src{i}={p}"]
    assert main(argv) == 0
    lines = out.read_text().strip().split("\n")
    labels = {line.split(",")[0] for line in lines[2:]}
    assert labels == {"src0", "src1", "src2"}


def test_analyze_tree_subsamples(tmp_path):
    fasta = tmp_path / "big.fasta"
    rng = __import__("numpy").random.default_rng(0)
    alphabet = "ACDEFGHIKLMNPQRSTVWY"
    records = []
    for i in range(1001):
        seq = "".join(alphabet[k] for k in rng.integers(0, 20, 12))
        records.append((f"s{i}", seq))
    write_fasta(fasta, records)
    out = tmp_path / "tree.nwk"
    assert main(["analyze-tree", "--input", f"big={fasta}",
                 "--output", str(out), "--seed", "11"]) == 0
    text = out.read_text()
    header, newick_line = text.strip().split("\n")
    assert "seed=11" in header
    assert newick_line.count("big|") == 1000


def test_validate_bridge_cli(tmp_path, capsys):
    stub = tmp_path / "stub.py"
    stub.write_text(textwrap.dedent(GOOD_STUB))
    assert main(["validate-bridge", "--command", f"{sys.executable} {stub}"]) == 0
    out = capsys.readouterr().out
    assert "protocol version: 1" in out
    assert "round trip" in out


def test_validate_bridge_failure_named(tmp_path, capsys):
    bad = textwrap.dedent(GOOD_STUB).replace('"ss": "L" * n', '"ss": "L" * (n + 1)')
    stub = tmp_path / "bad.py"
    stub.write_text(bad)
    assert main(["validate-bridge", "--command", f"{sys.executable} {stub}"]) != 0
    assert "ss has length" in capsys.readouterr().err


def test_design_through_external_stub(tmp_path):
    stub = tmp_path / "stub.py"
    stub.write_text(textwrap.dedent(GOOD_STUB))
    config = write_config(
        tmp_path, iterations=3,
        objective={"name": "coil", "prompt": "stay loose",
                   "scorer": {"type": "ss_composition", "target": "L" * 10}},
        evaluator={"type": "external",
                   "command": f"{sys.executable} {stub}", "timeout": 10.0})
    assert main(["design", "--config", str(config)]) == 0
    data = read_trajectory(tmp_path / "run.jsonl")
    assert len(data.records) == 3
    assert all(r["objective_score"] == 1.0 for r in data.records)


def test_design_exit_two_on_evaluator_loss(tmp_path):
    # bridge answers the handshake but errors every request: the baseline and
    # five consecutive iterations fail, the campaign terminates incomplete
    stub = tmp_path / "broken.py"
    stub.write_text(textwrap.dedent("""
        import json, sys
        print(json.dumps({"protocol": 1}), flush=True)
        for line in sys.stdin:
            req = json.loads(line)
            print(json.dumps({"id": req["id"], "error": "no backend"}), flush=True)
    """))
    config = write_config(
        tmp_path, iterations=20,
        evaluator={"type": "external", "command": f"{sys.executable} {stub}",
                   "timeout": 10.0})
    assert main(["design", "--config", str(config)]) == 2
    data = read_trajectory(tmp_path / "run.jsonl")
    assert data.terminated is not None
    assert len(data.records) == 5


def test_fasta_roundtrip_and_wrapping(tmp_path):
    path = tmp_path / "x.fasta"
    long_seq = "ACDEFGHIKL" * 13  # 130 residues, forces wrapping
    write_fasta(path, [("long header", long_seq)])
    text = path.read_text().split("\n")
    assert max(len(line) for line in text) == 60
    records = read_fasta(path)
    assert records == [("long header", long_seq)]


def test_fasta_skips_noncanonical(tmp_path, caplog):
    from seqswarm.fasta import canonical_records
    path = tmp_path / "x.fasta"
    path.write_text(">ok\nACDE\n>bad\nACXDE\n>ok2\nacgh\n")
    records = canonical_records(read_fasta(path))
    assert [h for h, _ in records] == ["ok", "ok2"]
    assert records[1][1] == "ACGH"
