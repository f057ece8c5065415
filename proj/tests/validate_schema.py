"""Validate every scenario file in a directory against the shipped JSON Schema."""

import json
import pathlib
import sys

import jsonschema


def deepest(error):
    """oneOf failures report the whole document; the leaf error with the longest path is the cause."""
    if not error.context:
        return error
    return max((deepest(c) for c in error.context), key=lambda c: len(c.absolute_path))


def main(argv):
    if len(argv) != 3:
        print("usage: validate_schema.py SCHEMA DIR", file=sys.stderr)
        return 1
    schema = json.loads(pathlib.Path(argv[1]).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    files = sorted(pathlib.Path(argv[2]).glob("*.json"))
    if not files:
        print(f"no scenario files under {argv[2]}", file=sys.stderr)
        return 1
    failed = 0
    for path in files:
        errors = list(validator.iter_errors(json.loads(path.read_text())))
        for e in errors:
            e = deepest(e)
            print(f"{path.name}: /{'/'.join(map(str, e.absolute_path))}: {e.message[:200]}", file=sys.stderr)
        failed += bool(errors)
        print(f"{path.name}: {'ok' if not errors else 'INVALID'}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
