"""Runs the command-line tool on a small simulated panel and validates the
analysis report against its JSON schema."""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema


def main() -> int:
    tool, schema_path, work = sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    common = ["--regions", "8", "--words", "10", "--sim-weeks", "60", "--particles", "60",
              "--samples", "12", "--em-iterations", "5", "--quiet"]
    runs = {
        "planted": ["pipeline", "--preset", "planted-edges", "--seed", "1"],
        "null": ["pipeline", "--preset", "null", "--seed", "2"],
    }
    failures = 0
    for name, args in runs.items():
        out = work / name
        proc = subprocess.run([tool, *args, "--out", str(out), *common], capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"{name}: exit {proc.returncode}\n{proc.stderr}")
            failures += 1
            continue
        report = json.loads((out / "analysis_report.json").read_text())
        errors = sorted(validator.iter_errors(report), key=lambda e: list(e.path))
        for err in errors:
            print(f"{name}: {'/'.join(map(str, err.path))}: {err.message}")
        failures += bool(errors)
        print(f"{name}: {len(errors)} schema errors, {report['linked_pairs']} linked pairs")

    # A hand-written edge list with one hub exercises the populated tables.
    hub = work / "hub"
    shutil.copytree(work / "planted", hub)
    lines = ["sender_id,receiver_id,mu,sigma,z,significant"]
    for s in range(8):
        for r in range(8):
            if s != r and (s == 0 or r == s + 1 or (s + r) % 3 == 0):
                lines.append(f"{s},{r},0.1,0.01,10,1")
    (hub / "edges.csv").write_text("\n".join(lines) + "\n")
    proc = subprocess.run([tool, "analyze", "--out", str(hub), "--folds", "2", "--quiet"],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        print(f"hub: exit {proc.returncode}\n{proc.stderr}")
        return 1
    report = json.loads((hub / "analysis_report.json").read_text())
    errors = list(validator.iter_errors(report))
    for err in errors:
        print(f"hub: {'/'.join(map(str, err.path))}: {err.message}")
    if report["table3a_link_regression"] is None or not report["table3b_ablation_accuracy"]:
        print("hub: link tables unexpectedly empty")
        failures += 1
    failures += bool(errors)
    print(f"hub: {len(errors)} schema errors, {report['linked_pairs']} linked pairs")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
