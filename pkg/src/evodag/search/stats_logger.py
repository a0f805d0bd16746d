"""
Statistics logging for evolution runs.

Progress rows (one per counted result) and per-operator tables go to CSV files
in the output directory; finished searches and retrain runs print a summary to
stdout. CSV appends take an exclusive file lock so that several processes can
share one file, and the header is extended when a row brings new columns.
"""

import csv
import fcntl
import os

from ..genome import save_genome

PROGRESS_FILE = "progress.csv"
OPERATORS_FILE = "operators.csv"
BEST_GENOME_FILE = "best_genome.json"
OPERATOR_COLUMNS = ("operator", "generated", "inserted", "insertion_rate")
RETRAIN_COLUMNS = (
    "rep", "init", "val_loss", "test_loss", "val_error", "test_error", "val_accuracy", "test_accuracy"
)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def append_csv_row(row, path):
    """
    Appends a row to a CSV file in a process-safe manner.

    Args:
        row (dict): Column name to value. Missing columns are left empty; None becomes "".
        path (str): Path to the CSV file, created with a header if missing or empty.
    """
    row = {key: _cell(value) for key, value in row.items()}
    file_exists = os.path.isfile(path)

    with open(path, "a+", newline="", encoding="utf-8") as csvfile:
        fcntl.flock(csvfile.fileno(), fcntl.LOCK_EX)
        csvfile.seek(0)
        first_line = csvfile.readline()

        if file_exists and first_line:
            existing_header = next(csv.reader([first_line]))
            fieldnames = existing_header + [k for k in row if k not in existing_header]
        else:
            fieldnames = list(row)

        csvfile.seek(0, os.SEEK_END)
        writer = csv.DictWriter(csvfile, fieldnames=fieldnames, restval="")
        if not first_line:
            writer.writeheader()
        writer.writerow(row)
        csvfile.flush()
        fcntl.flock(csvfile.fileno(), fcntl.LOCK_UN)


def write_csv(rows, path, fieldnames=None):
    """Writes (overwrites) a whole CSV table."""
    rows = [{key: _cell(value) for key, value in row.items()} for row in rows]
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=fieldnames, restval="")
        writer.writeheader()
        writer.writerows(rows)


def _fmt(value, spec=".4f"):
    return "-" if value is None else format(value, spec)


def log_search_stats_stdout(snapshot, best, elapsed):
    """
    Prints the final state of a search.

    Args:
        snapshot (StatsSnapshot): Master statistics.
        best (Genome): Best genome of the population (None if nothing was evaluated).
        elapsed (float): Search time in seconds.
    """
    population = snapshot.population
    print("-" * 110, flush=True)
    print(f"Search finished after {snapshot.evaluations_completed} evaluations ({snapshot.issued} issued):")
    print()

    print("Population:")
    print(f"\tSize:       {population['size']:-10}")
    for name in ("fitness", "nodes", "conv_edges", "pool_edges", "weights"):
        low, mean, high = (population[f"{name}_{s}"] for s in ("min", "avg", "max"))
        print(f"\t{name + ':':<12}[MIN={_fmt(low)}, AVG={_fmt(mean)}, MAX={_fmt(high)}]")
    print()

    print("Operators:")
    for row in snapshot.operators:
        if row["generated"]:
            print(
                f"\t{row['operator'] + ':':<18}{row['generated']:-6} generated {row['inserted']:-6} inserted"
                f"\t[{100 * row['insertion_rate']:.2f}%]"
            )
    print()

    print("Summary:")
    if best is not None:
        print(f"\tBest:       {best.fitness:-10.4f}  \t[id={best.generation_id}, by={best.generated_by}]")
    print(f"\tTime:       {elapsed:-10.2f} s")
    print("-" * 110, flush=True)


def log_retrain_stats_stdout(rows):
    """Prints the per-repetition losses and errors of a retrain run and their means."""
    print("-" * 70)
    for row in rows:
        print(
            f"\t{row['rep']:-3} {row['init']:<11} val {row['val_loss']:10.4f} [{100 * row['val_error']:6.2f}%]"
            f"  test {row['test_loss']:10.4f} [{100 * row['test_error']:6.2f}%]"
        )
    if rows:
        means = {key: sum(row[key] for row in rows) / len(rows) for key in RETRAIN_COLUMNS[2:6]}
        print(
            f"\tmean            val {means['val_loss']:10.4f} [{100 * means['val_error']:6.2f}%]"
            f"  test {means['test_loss']:10.4f} [{100 * means['test_error']:6.2f}%]"
        )
    print("-" * 70)


def progress_listener(output_dir):
    """Returns a master listener appending every progress row to `output_dir`/progress.csv."""
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, PROGRESS_FILE)

    def listener(row):
        append_csv_row(row, path)

    return listener


def write_search_outputs(master, output_dir):
    """Writes operators.csv, best_genome.json and a final checkpoint."""
    os.makedirs(output_dir, exist_ok=True)
    snapshot = master.snapshot_stats()
    write_csv(
        snapshot.operators, os.path.join(output_dir, OPERATORS_FILE), OPERATOR_COLUMNS
    )
    best = master.best()
    if best is not None:
        save_genome(best, os.path.join(output_dir, BEST_GENOME_FILE))
    master.checkpoint(os.path.join(output_dir, "checkpoint"))
    return snapshot, best
