#!/usr/bin/env python3
"""Author every demo task and freeze the scripts under src/wheelarm/data/scripts/.

Each script is replayed once before writing; a task whose replay produces a
rejected command aborts the run so stale geometry cannot ship.
"""

import json
import pathlib
import sys

from wheelarm.demos import TASKS, author_task
from wheelarm.session import script_to_dict, scripted_replay

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "wheelarm" / "data" / "scripts"


def main() -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    for name in sorted(TASKS):
        script = author_task(name)
        result = scripted_replay(script)
        bad = [a for a in result.acks if not a["ok"]]
        if bad:
            print(f"{name}: replay rejected a command: {bad[0]}", file=sys.stderr)
            return 1
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(script_to_dict(script), indent=2, sort_keys=True) + "\n")
        print(f"{name}: {script.duration:.2f}s, {len(script.commands)} commands -> {path.name}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
