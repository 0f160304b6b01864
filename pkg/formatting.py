import csv
import io
import json
import sys


def dump_json(doc) -> str:
    return json.dumps(doc, indent=2) + '\n'


def dump_csv(rows: list[dict], fieldnames: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_output(text: str, out: str | None):
    """Write to the path out, or to stdout for None / '-'."""
    if out is None or out == '-':
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(out, 'w') as f:
            f.write(text)


def sweep_trace_rows(trace: list[float]) -> list[dict]:
    return [{'sweep': i, 'value': repr(v)} for i, v in enumerate(trace)]


def trial_rows(outcomes) -> list[dict]:
    return [o.csv_row(t) for t, o in enumerate(outcomes)]


TRIAL_FIELDS = ['trial', 'accepted', 'rejection_stage', 'j', 'i', 'n_ji']
SWEEP_FIELDS = ['sweep', 'value']
