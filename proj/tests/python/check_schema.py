"""Validate the shipped config against the shipped schema with jsonschema."""
import json
import sys

import jsonschema

schema_path, config_path = sys.argv[1], sys.argv[2]
with open(schema_path) as f:
    schema = json.load(f)
with open(config_path) as f:
    config = json.load(f)

jsonschema.Draft7Validator.check_schema(schema)
jsonschema.validate(config, schema)
bad = dict(config, unexpected_key=1)
try:
    jsonschema.validate(bad, schema)
except jsonschema.ValidationError:
    print("schema ok")
    sys.exit(0)
print("schema accepted an unknown key")
sys.exit(1)
