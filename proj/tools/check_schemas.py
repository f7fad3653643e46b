#!/usr/bin/env python3
"""Runs every subcommand of the CLI and validates the JSON it writes."""
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

cli, schemas = sys.argv[1], pathlib.Path(sys.argv[2])
RUNS = {
    "validate": [],
    "did": [],
    "att": [],
    "mixture": ["--types", "2"],
    "select-types": ["--max-types", "2"],
    "bootstrap": ["--types", "2", "--bootstrap-B", "20"],
    "pretest": ["--types", "2"],
    "placebo": [],
    "flows": ["--types", "2"],
}
FAST = ["--n-short", "40", "--n-long", "3"]


def load(name):
    return json.loads((schemas / f"{name}.schema.json").read_text())


def check(path, schema):
    jsonschema.Draft202012Validator(load(schema)).validate(json.loads(path.read_text()))


with tempfile.TemporaryDirectory() as tmp:
    tmp = pathlib.Path(tmp)
    subprocess.run([cli, "simulate", "--spec", "separated", "--n", "400", "--seed", "3",
                    "--out", str(tmp / "panel.csv")], check=True, stdout=subprocess.DEVNULL)
    subprocess.run([cli, "simulate", "--spec", "staggered", "--n", "2000", "--seed", "3",
                    "--out", str(tmp / "stag.csv")], check=True, stdout=subprocess.DEVNULL)
    runs = [(sub, "panel.csv", args + (FAST if sub not in ("validate", "did", "placebo") else []))
            for sub, args in RUNS.items()]
    runs.append(("staggered", "stag.csv", []))
    failures = 0
    for sub, data, args in runs:
        out = tmp / sub
        subprocess.run([cli, sub, "--input", str(tmp / data), "--out", str(out), *args],
                       check=True, stdout=subprocess.DEVNULL)
        try:
            check(out / f"{sub}.json", sub)
            check(out / "manifest.json", "manifest")
            check(out / "config.json", "config")
            print(f"ok   {sub}")
        except jsonschema.ValidationError as e:
            failures += 1
            print(f"FAIL {sub}: {e.message}")
    spec = pathlib.Path(sys.argv[3]) if len(sys.argv) > 3 else None
    if spec:
        doc = json.loads(spec.read_text())
        jsonschema.Draft202012Validator(load("spec")).validate(doc)
        jsonschema.Draft202012Validator(load("params")).validate(doc["params"])
        print(f"ok   {spec.name}")
sys.exit(1 if failures else 0)
