"""Run optimizer, parallel repetition, protocol and encoding experiments.

Results go to stdout (or --out); progress and timing go to stderr.

    poetry run python experiment.py optimize data/operators/accept_example.json
    poetry run python experiment.py parrep data/operators/accept_example.json --one-party --fold 3
    poetry run python experiment.py bellqma data/protocols/two_qubit_provers.json --merlin lying-x
"""

import argparse
from datetime import datetime, timezone
import json
import os
import sys

from rich.markup import escape

from bellqma import (
    MERLIN_PRESETS,
    BellProtocol,
    ParamOverflowError,
    ProtocolParams,
    TableCapacityError,
    completeness_lower_bound,
    derive_params,
    estimate_acceptance,
    precision_slack,
    soundness_upper_bound,
)
from encoding import (
    ClassicalStateDescription,
    decode_state,
    encode_state,
    encoding_error,
    preparation_plan,
)
from formatting import (
    SWEEP_FIELDS,
    TRIAL_FIELDS,
    dump_csv,
    dump_json,
    sweep_trace_rows,
    trial_rows,
    write_output,
)
import linalg
from linalg import CapacityError, HermitianOperator, PureState, fidelity
from parrep import PartyCountError, repeat_operator, verify_perfect_repetition
from seesaw import brute_force_max, seesaw_max
from separable import SeparableOperator, densify
from settings import ExperimentConfig
from util import Timer, log, make_rng, spawn_generators

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')
DEFAULT_CONFIG = os.path.join(DATA_DIR, 'config.json5')

EXIT_PARSE = 2
EXIT_CAPACITY = 3
EXIT_PARTY_COUNT = 4
EXIT_TABLE_CAPACITY = 5


def load_json(path: str):
    with open(path) as f:
        return json.load(f)


def load_operator(path: str) -> HermitianOperator:
    """Either a dense operator or a separable decomposition (densified)."""
    data = load_json(path)
    if 'terms' in data:
        return densify(SeparableOperator.from_json(data))
    return HermitianOperator.from_json(data)


def load_separable(path: str) -> 'SeparableOperator | HermitianOperator':
    data = load_json(path)
    if 'terms' in data:
        return SeparableOperator.from_json(data)
    return HermitianOperator.from_json(data)


def load_protocol(path: str) -> tuple[BellProtocol, list[HermitianOperator]]:
    data = load_json(path)
    protocol = BellProtocol.from_json(data)
    proofs = [HermitianOperator.from_json(p) for p in data['proofs']]
    return protocol, proofs


def cmd_optimize(args, config: ExperimentConfig):
    c = load_operator(args.operator)
    result = seesaw_max(
        c, config.restarts, make_rng(config.seed), workers=config.workers
    )
    log(f'Seesaw value {result.value:.10f} after {result.iterations} sweeps')
    if config.format == 'csv':
        return dump_csv(sweep_trace_rows(result.trace), SWEEP_FIELDS), None
    return None, {'restarts': config.restarts, **result.to_json()}


def cmd_oracle(args, config: ExperimentConfig):
    c = load_operator(args.operator)
    g_seesaw, g_brute = spawn_generators(make_rng(config.seed), 2)
    result = seesaw_max(c, config.restarts, g_seesaw, workers=config.workers)
    brute = brute_force_max(c, samples=args.samples, rng=g_brute, refine=config.refine)
    log(f'seesaw {result.value:.10f} vs brute force {brute:.10f}')
    return None, {
        'seesaw': result.value,
        'brute_force': brute,
        'samples': args.samples,
        'difference': result.value - brute,
        'agree': abs(result.value - brute) <= config.tol,
    }


def cmd_parrep(args, config: ExperimentConfig):
    if args.one_party:
        return None, _one_party_repetition(args, config)
    if args.fold != 2:
        raise ValueError('--fold other than 2 needs --one-party')
    c1 = load_separable(args.first)
    c2 = load_separable(args.second) if args.second else c1
    report = verify_perfect_repetition(
        c1,
        c2,
        tol=config.tol,
        rng=make_rng(config.seed),
        restarts=config.restarts,
        samples=args.samples or config.samples,
        refine=config.refine,
        streams=config.streams,
        workers=config.workers,
    )
    log(f'v1={report.v1:.8f} v2={report.v2:.8f} v={report.v:.8f}: {report.verdict}')
    return None, report.to_json()


def _one_party_repetition(args, config: ExperimentConfig) -> dict:
    """Treat the whole operator as a single prover's and repeat it k times."""
    c = load_operator(args.first)
    c = c.with_dims(c.total)
    g1, g2 = spawn_generators(make_rng(config.seed), 2)
    single = seesaw_max(c, config.restarts, g1, workers=config.workers)
    repeated = seesaw_max(
        repeat_operator(c, args.fold), config.restarts, g2, workers=config.workers
    )
    expected = single.value**args.fold
    verdict = 'perfect' if abs(repeated.value - expected) <= config.tol else 'inconclusive'
    log(f'{args.fold}-fold value {repeated.value:.10f}, single value^{args.fold} = {expected:.10f}')
    return {
        'mode': 'one-party',
        'fold': args.fold,
        'v1': single.value,
        'v': repeated.value,
        'expected': expected,
        'tol': config.tol,
        'verdict': verdict,
    }


def cmd_bellqma(args, config: ExperimentConfig):
    protocol, proofs = load_protocol(args.protocol)
    params = derive_params(protocol.n, protocol.m, protocol.r)
    overrides = {'p': args.p, 'k': args.k, 'q': args.q, 'alpha': args.alpha}
    params = ProtocolParams(
        **{**params.to_json(), **{k: v for k, v in overrides.items() if v is not None}}
    )
    message = MERLIN_PRESETS[args.merlin](protocol, proofs, params)
    estimate = estimate_acceptance(
        protocol,
        message,
        params,
        config.trials,
        make_rng(config.seed),
        workers=config.workers,
        progress=not args.quiet,
    )
    log(f'acceptance {estimate.mean:.4f} ± {estimate.ci95:.4f} over {estimate.trials} trials')
    rows = trial_rows(estimate.outcomes)
    if args.trials_csv:
        write_output(dump_csv(rows, TRIAL_FIELDS), args.trials_csv)
    if config.format == 'csv':
        return dump_csv(rows, TRIAL_FIELDS), None
    return None, {
        'merlin': args.merlin,
        'params': params.to_json(),
        'estimate': estimate.to_json(),
        'completeness_lower_bound': completeness_lower_bound(params),
        'soundness_upper_bound': soundness_upper_bound(protocol.m, protocol.r),
        'precision_slack': precision_slack(protocol.m, protocol.r, params.alpha),
    }


def cmd_encode(args, config: ExperimentConfig):
    psi = PureState.from_json(load_json(args.state))
    bits = args.bits or config.precision_bits
    desc = encode_state(psi, bits)
    error = encoding_error(psi, desc)
    log(f'encoding error {error.distance:.3g} (bound {error.bound:.3g})')
    doc = {'description': desc.to_json(), 'error': error.to_json()}
    if args.round_trip:
        doc['fidelity'] = fidelity(psi, decode_state(desc))
    return None, doc


def cmd_decode(args, config: ExperimentConfig):
    desc = ClassicalStateDescription.from_json(load_json(args.description))
    psi = decode_state(desc)
    return None, {'state': psi.to_json(), 'plan': preparation_plan(psi).to_json()}


COMMANDS = {
    'optimize': cmd_optimize,
    'oracle': cmd_oracle,
    'parrep': cmd_parrep,
    'bellqma': cmd_bellqma,
    'encode': cmd_encode,
    'decode': cmd_decode,
}


common = argparse.ArgumentParser(add_help=False)
common.add_argument('--seed', type=int, help='Root seed for every random stream')
common.add_argument('--trials', type=int, help='Monte Carlo trials')
common.add_argument('--tol', type=float, help='Verdict tolerance')
common.add_argument('--max-dim', type=int, help='Cap on total Hilbert space dimension')
common.add_argument('--format', choices=['json', 'csv'])
common.add_argument('--restarts', type=int, help='Seesaw restarts')
common.add_argument('--workers', type=int, help='Worker threads')
common.add_argument('--out', default='-', help='Output path, - for stdout')
common.add_argument('--no-meta', action='store_true', help='Omit timestamp and argv')
common.add_argument('--config', default=DEFAULT_CONFIG, help='json5 settings file')
common.add_argument('--quiet', action='store_true', help='No progress or timing on stderr')

parser = argparse.ArgumentParser(
    prog='experiment',
    description='Small-scale experiments on multi-prover QMA protocols',
)
subparsers = parser.add_subparsers(dest='command', required=True)

p = subparsers.add_parser('optimize', parents=[common], help='Maximize over product states')
p.add_argument('operator', help='Operator or separable operator JSON file')

p = subparsers.add_parser('oracle', parents=[common], help='Seesaw vs. brute-force sampling')
p.add_argument('operator', help='Operator or separable operator JSON file')
p.add_argument('--samples', type=int, default=10**6)

p = subparsers.add_parser('parrep', parents=[common], help='Check perfect parallel repetition')
p.add_argument('first', help='Accept operator of the first protocol')
p.add_argument('second', nargs='?', help='Accept operator of the second protocol')
p.add_argument('--fold', type=int, default=2, help='Repetitions (with --one-party)')
p.add_argument('--one-party', action='store_true', help='Treat the operator as one prover')
p.add_argument('--samples', type=int, help='Witness samples')

p = subparsers.add_parser('bellqma', parents=[common], help='Estimate protocol acceptance')
p.add_argument('protocol', help='Protocol JSON file with proofs')
p.add_argument('--merlin', choices=sorted(MERLIN_PRESETS), default='honest')
p.add_argument('--p', type=int)
p.add_argument('--k', type=int)
p.add_argument('--q', type=int)
p.add_argument('--alpha', type=int)
p.add_argument('--trials-csv', help='Also write per-trial rows to this CSV file')

p = subparsers.add_parser('encode', parents=[common], help='Fixed-point state description')
p.add_argument('state', help='Pure state JSON file')
p.add_argument('--bits', type=int, help='Fractional bits per real/imaginary part')
p.add_argument('--round-trip', action='store_true', help='Report decode(encode) fidelity')

p = subparsers.add_parser('decode', parents=[common], help='Decode a description')
p.add_argument('description', help='Description JSON file')


def load_config(args) -> ExperimentConfig:
    config = (
        ExperimentConfig.load(args.config)
        if os.path.exists(args.config) or args.config != DEFAULT_CONFIG
        else ExperimentConfig({})
    )
    return config.override(
        seed=args.seed,
        trials=args.trials,
        tol=args.tol,
        max_dim=args.max_dim,
        format=args.format,
        restarts=args.restarts,
        workers=args.workers,
    )


def run(args, config: ExperimentConfig, argv: list[str]) -> str:
    text, doc = COMMANDS[args.command](args, config)
    if text is not None:
        return text
    out = {'command': args.command, 'seed': config.seed, **doc}
    if not args.no_meta:
        out['meta'] = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'argv': argv,
            'config': config.to_json(),
        }
    return dump_json(out)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    previous_max_dim = linalg.max_dim()
    try:
        config = load_config(args)
        linalg.set_max_dim(config.max_dim)
        if args.quiet:
            text = run(args, config, argv)
        else:
            with Timer(args.command):
                text = run(args, config, argv)
        write_output(text, args.out)
    except TableCapacityError as e:
        log(f'[bold red]table capacity[/bold red]: {escape(str(e))}')
        return EXIT_TABLE_CAPACITY
    except CapacityError as e:
        log(f'[bold red]capacity[/bold red]: {escape(str(e))}')
        return EXIT_CAPACITY
    except PartyCountError as e:
        log(f'[bold red]party count[/bold red]: {escape(str(e))}')
        return EXIT_PARTY_COUNT
    except (ValueError, KeyError, TypeError, OSError, ParamOverflowError) as e:
        log(f'[bold red]error[/bold red]: {escape(str(e))}')
        return EXIT_PARSE
    finally:
        linalg.set_max_dim(previous_max_dim)
    return 0


if __name__ == '__main__':
    sys.exit(main())
