import argparse
import logging
import sys

from config import LOG_FORMAT, VERSION
from core.errors import ConfigError, LabError
from core.experiments.ExperimentConfig import COMMANDS, ExperimentConfig
from core.experiments.Runner import run

logger = logging.getLogger("matcomp-lab")


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):  # raise instead of exiting so main() owns the exit code
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = ArgumentParser(prog="matcomp-lab", description="Matrix completion with a BERT-style encoder")
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("overrides", nargs="*", help="key=value config overrides (values parsed as JSON)")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_intermixed_args(argv)
    except UsageError as e:
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
        logger.error("usage error: %s", e)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        config = ExperimentConfig.from_sources(args.command, args.config, args.overrides, args.out, args.seed)
    except ConfigError as e:
        logger.error("invalid config: %s", e)
        return 2
    try:
        run(config)
    except ConfigError as e:
        logger.error("invalid config: %s", e)
        return 2
    except LabError as e:
        logger.error("%s failed: %s", config.command, e)
        return 1
    logger.info("%s finished, artifacts in %s", config.command, config.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
