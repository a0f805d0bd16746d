"""
Command-line interface of evodag.

Commands:
    search   evolve CNN genomes (sequentially, on a Ray worker pool, or as a TCP master)
    worker   train genomes for a TCP master
    retrain  retrain a genome archive several times and report validation/test errors
    export   render a genome archive as Graphviz DOT
    stats    summarize the operator statistics of a checkpoint

Example:
    evodag search --train-images train-images-idx3-ubyte.gz --train-labels train-labels-idx1-ubyte.gz \\
        --max-evals 500 --population 50 --node-ops --no-pooling --workers 4

Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 protocol error.
"""

import logging
import math
import os
import sys
from dataclasses import replace

import click

from .errors import ConfigError, DatasetError, EvodagError, GenomeError, ProtocolError, SearchInterrupted

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PROTOCOL = 0, 1, 2, 3


def parse_address(value, default_host="127.0.0.1"):
    """Parses "host:port" (or just "port") into a (host, port) tuple."""
    host, _, port = value.rpartition(":")
    try:
        return (host or default_host, int(port))
    except ValueError:
        raise click.BadParameter(f"expected HOST:PORT, got {value!r}") from None


def build_config(config_path=None, **overrides):
    """
    Loads a configuration file and applies command-line overrides.

    Args:
        config_path (str): TOML file; None starts from the defaults.
        overrides: "section.key" names (with "." replaced by "__") mapped to values; None values are skipped.
    """
    from .search.config import config_from_dict, config_to_dict, load_config

    document = config_to_dict(load_config(config_path))
    for name, value in overrides.items():
        if value is not None:
            section, key = name.split("__", 1)
            document[section][key] = value
    return config_from_dict(document)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--verbose", is_flag=True, help="Log progress (INFO)")
@click.option("--debug", is_flag=True, help="Log everything (DEBUG)")
def cli(verbose, debug):
    """evodag: asynchronous evolution of DAG-structured convolutional networks."""
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(format="%(asctime)s %(levelname)-8s %(message)s", datefmt="%Y-%m-%d %H:%M:%S")
    logging.getLogger().setLevel(level)


def dataset_options(command):
    command = click.option("--train-labels", help="IDX training labels (.gz allowed)")(command)
    command = click.option("--train-images", help="IDX training images (.gz allowed)")(command)
    command = click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML configuration file")(
        command
    )
    return command


@cli.command()
@dataset_options
@click.option("--seed", type=int, help="Master and training seed (default: 0)")
@click.option("--max-evals", type=int, help="Number of genomes to evaluate (default: 500)")
@click.option("--population", type=int, help="Population size (default: 50)")
@click.option("--epochs", type=int, help="Training epochs per genome (default: 10)")
@click.option("--workers", default=1, show_default=True, help="Ray evaluation workers (1 runs in-process)")
@click.option("--address", default="", help="Address of an existing Ray cluster to connect to")
@click.option("--serve", default=None, metavar="HOST:PORT", help="Act as TCP master for `evodag worker` processes")
@click.option("--node-ops/--no-node-ops", default=None, help="Enable node mutations (default: on)")
@click.option("--pooling/--no-pooling", default=None, help="Allow pooling edges (default: off)")
@click.option("--weight-init", type=click.Choice(["epigenetic", "he"]), help="Weights of issued genomes")
@click.option("--output-dir", help="Directory for CSV stats, checkpoints and the best genome")
@click.option("--resume", is_flag=True, help="Continue from the checkpoint in the output directory")
@click.option("--dump-config", is_flag=True, help="Print the effective configuration as TOML and exit")
def search(
    config_path, train_images, train_labels, seed, max_evals, population, epochs, workers, address, serve,
    node_ops, pooling, weight_init, output_dir, resume, dump_config,
):
    """Runs an evolution search."""
    config = build_config(
        config_path,
        dataset__train_images=train_images,
        dataset__train_labels=train_labels,
        search__seed=seed,
        search__max_evaluations=max_evals,
        search__population_size=population,
        search__weight_init=weight_init,
        search__output_dir=output_dir,
        operators__node_ops_enabled=node_ops,
        operators__pooling_enabled=pooling,
        training__epochs=epochs,
    )
    if dump_config:
        from .search.config import dump_config as dumps

        click.echo(dumps(config), nl=False)
        return EXIT_OK

    train_set, validation_set = config.dataset.load()
    logger.info("Loaded %s training and %s validation images.", len(train_set), len(validation_set))

    if serve:
        from .protocol.server import serve_search

        serve_search(config, train_set, validation_set, parse_address(serve, "0.0.0.0"), resume=resume)
    elif workers > 1 or address:
        import ray

        from .search.distributed_search import DistributedSearch

        if address:
            ray.init(address=address)
        else:
            ray.init()
        driver = DistributedSearch(config, train_set, validation_set, workers=workers, resume=resume)
        try:
            driver.run()
        finally:
            driver.shutdown()
    else:
        from .search.sequential_search import SequentialSearch

        SequentialSearch(config, train_set, validation_set, resume=resume).run()
    return EXIT_OK


@cli.command()
@dataset_options
@click.option("--master", "master_address", required=True, metavar="HOST:PORT", help="Address of the TCP master")
@click.option("--epochs", type=int, help="Override the master's epoch count")
@click.option("--worker-id", default=None, help="Worker name (random by default)")
@click.option("--max-retries", default=8, show_default=True, help="Consecutive connection failures tolerated")
def worker(config_path, train_images, train_labels, master_address, epochs, worker_id, max_retries):
    """Trains genomes for a TCP master until it says stop."""
    from .protocol.worker import worker_loop

    config = build_config(config_path, dataset__train_images=train_images, dataset__train_labels=train_labels)
    train_set, validation_set = config.dataset.load()
    worker_loop(
        parse_address(master_address), train_set, validation_set, worker_id=worker_id, epochs=epochs,
        max_retries=max_retries,
    )
    return EXIT_OK


@cli.command()
@dataset_options
@click.option("--genome", "genome_path", required=True, type=click.Path(dir_okay=False), help="Genome archive")
@click.option("--test-images", help="IDX test images")
@click.option("--test-labels", help="IDX test labels")
@click.option("--init", "init", type=click.Choice(["he", "epigenetic"]), default="he", show_default=True)
@click.option("--reps", default=5, show_default=True, help="Number of retraining runs")
@click.option("--epochs", type=int, help="Training epochs per run")
@click.option("--seed", default=0, show_default=True, help="Seed of the first run (run i uses seed + i)")
@click.option("--output", default="retrain.csv", show_default=True, help="CSV file receiving one row per run")
def retrain(config_path, train_images, train_labels, genome_path, test_images, test_labels, init, reps, epochs, seed, output):
    """Retrains a genome and reports validation and test errors."""
    from .genome import load_genome
    from .search.stats_logger import RETRAIN_COLUMNS, log_retrain_stats_stdout, write_csv
    from .training.trainer import evaluate, train

    config = build_config(
        config_path,
        dataset__train_images=train_images,
        dataset__train_labels=train_labels,
        dataset__test_images=test_images,
        dataset__test_labels=test_labels,
        training__epochs=epochs,
    )
    genome = load_genome(genome_path)
    train_set, validation_set = config.dataset.load()
    test_set = config.dataset.load_test()

    rows = []
    for rep in range(reps):
        result = train(genome, train_set, validation_set, config.training, init=init, seed=seed + rep)
        if result.diverged:
            val_accuracy = test_accuracy = 0.0
            test_loss = math.inf
        else:
            val_accuracy = result.accuracy
            test_loss, test_accuracy = evaluate(result.genome, test_set, config.training)
        rows.append(
            {
                "rep": rep,
                "init": init,
                "val_loss": result.fitness,
                "test_loss": test_loss,
                "val_error": 1.0 - val_accuracy,
                "test_error": 1.0 - test_accuracy,
                "val_accuracy": val_accuracy,
                "test_accuracy": test_accuracy,
            }
        )
        logger.info(
            "Retrain %s: validation loss %.4f (accuracy %.4f), test loss %.4f (accuracy %.4f)",
            rep, result.fitness, val_accuracy, test_loss, test_accuracy,
        )

    write_csv(rows, output, RETRAIN_COLUMNS)
    log_retrain_stats_stdout(rows)
    return EXIT_OK


@cli.command()
@click.argument("genome_path", type=click.Path(dir_okay=False))
@click.option("--output", default=None, help="DOT file (stdout by default)")
def export(genome_path, output):
    """Renders a genome archive as Graphviz DOT."""
    from .genome import export_dot, load_genome

    dot = export_dot(load_genome(genome_path))
    if output:
        with open(output, "w", encoding="utf-8") as f:
            f.write(dot)
    else:
        click.echo(dot, nl=False)
    return EXIT_OK


@cli.command()
@click.argument("checkpoint_dir", type=click.Path(file_okay=False))
@click.option("--output", default=None, help="CSV file (stdout by default)")
def stats(checkpoint_dir, output):
    """Writes the operator statistics of a checkpoint as CSV (operator, generated, inserted, insertion_rate)."""
    from .search.master import Master
    from .search.stats_logger import OPERATOR_COLUMNS, log_search_stats_stdout, write_csv

    if not os.path.isdir(checkpoint_dir):
        raise FileNotFoundError(f"no checkpoint directory {checkpoint_dir}")
    master = Master.load_checkpoint(checkpoint_dir)
    snapshot = master.snapshot_stats()
    if output:
        write_csv(snapshot.operators, output, OPERATOR_COLUMNS)
        log_search_stats_stdout(snapshot, master.best(), 0.0)
    else:
        click.echo(",".join(OPERATOR_COLUMNS))
        for row in snapshot.operators:
            click.echo(",".join(str(row[column]) for column in OPERATOR_COLUMNS))
    return EXIT_OK


def main(argv=None):
    """
    Runs the CLI and maps failures onto exit codes.

    Returns:
        int: 0 on success, 1 on usage/config errors, 2 on data errors, 3 on protocol errors.
    """
    try:
        code = cli.main(args=argv, prog_name="evodag", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except ConfigError as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_USAGE
    except (ProtocolError, SearchInterrupted) as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_PROTOCOL
    except (DatasetError, GenomeError, OSError) as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_DATA
    except EvodagError as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_USAGE
    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
