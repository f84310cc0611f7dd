"""
Command-line entry point
kessel --config run.yaml --mode simulate|sweep|check|compare-ode
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from kessel import __version__
from kessel.config.manager import MODES, RUN_PROFILES, parse_config
from kessel.core.command_router import CommandRouter
from kessel.utils.errors import EXIT_OK, BlowUpSuspected, KesselError
from kessel.utils.logger import KesselLogger, get_logger

logger = get_logger(__name__)

BLOWUP_FLAG = "blowup: flagged (exploratory report)"

FLAG_KEYS = {
    'mode': 'run.mode',
    'profile': 'run.profile',
    'workers': 'sweep.workers',
    'out_dir': 'output.out_dir',
    'scenario': 'output.scenario',
    'run_dir': 'check.run_dir',
    'eps': 'model.eps',
    'chi': 'model.chi',
    'log_level': 'logging.level',
    'solver_tol': 'tolerances.solver_tol',
    'mass_rel': 'tolerances.mass_rel',
    'lemma35_allowance': 'tolerances.lemma35_allowance',
    'weak_constant': 'tolerances.weak_constant',
    'id_constant': 'tolerances.id_constant',
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='kessel',
        description='Regularized Keller-Segel simulator and weak-solution verification harness',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--config', help='YAML config, or a meta.json from an earlier run')
    parser.add_argument('--mode', choices=MODES)
    parser.add_argument('--profile', choices=RUN_PROFILES,
                        help='ci fails fast on invariant violations; exploratory warns and continues')
    parser.add_argument('--workers', type=int, help='sweep worker processes')
    parser.add_argument('--allow-supercritical', action='store_true',
                        help='accept chi >= n/(n-2) and tag the run exploratory')
    parser.add_argument('--out-dir', help='artifact root (default $KESSEL_OUT_DIR or ./runs)')
    parser.add_argument('--scenario', help='scenario tag of the run directory')
    parser.add_argument('--run-dir', help='run directory read by check mode')
    parser.add_argument('--eps', type=float)
    parser.add_argument('--chi', type=float)
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])

    tolerances = parser.add_argument_group('tolerance overrides')
    tolerances.add_argument('--solver-tol', type=float)
    tolerances.add_argument('--mass-rel', type=float)
    tolerances.add_argument('--lemma35-allowance', type=float)
    tolerances.add_argument('--weak-constant', type=float)
    tolerances.add_argument('--id-constant', type=float)
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {key: getattr(args, flag) for flag, key in FLAG_KEYS.items()}
    if args.allow_supercritical:
        overrides['run.allow_supercritical'] = True
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse flags, run the selected mode and map failures to exit codes.

    Returns:
        0 ok, 2 config error, 3 invariant violation, 4 blow-up ceiling
    """
    load_dotenv()
    args = build_parser().parse_args(argv)
    if args.log_level:
        KesselLogger.set_level(getattr(logging, args.log_level))

    try:
        config = parse_config(args.config, overrides_from_args(args))
    except KesselError as e:
        logger.error(f"Configuration error: {e}")
        return e.exit_code

    KesselLogger.configure(config.logging.level, config.logging.max_file_size_mb, config.logging.backup_count)

    try:
        payload = CommandRouter(config).route()
    except BlowUpSuspected as e:
        logger.error(f"Blow-up suspected at t={e.t:.6g} (max u={e.max_u:.3e})")
        if not config.exploratory:
            return e.exit_code
        print(BLOWUP_FLAG)
        return EXIT_OK
    except KesselError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code

    print(payload['text'])
    if payload.get("blowup"):
        print(BLOWUP_FLAG)
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
