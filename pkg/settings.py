import json5

DEFAULTS = {
    'seed': 0,
    'trials': 1000,
    'tol': 1e-3,
    'max_dim': 2**14,
    'format': 'json',
    'restarts': 32,
    'samples': 20000,
    'refine': 10,
    'streams': 4,
    'workers': 1,
    'precision_bits': None,
}

COUNT_KEYS = ('trials', 'max_dim', 'restarts', 'samples', 'streams', 'workers')


class ExperimentConfig:
    """Run settings shared by every subcommand, read from a json5 file."""

    def __init__(self, data: dict):
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ValueError(f'Unknown config keys: {sorted(unknown)}')
        self.data = {**DEFAULTS, **data}
        d = self.data
        self.seed = int(d['seed'])
        self.trials = int(d['trials'])
        self.tol = float(d['tol'])
        self.max_dim = int(d['max_dim'])
        self.format = d['format']
        self.restarts = int(d['restarts'])
        self.samples = int(d['samples'])
        self.refine = int(d['refine'])
        self.streams = int(d['streams'])
        self.workers = int(d['workers'])
        self.precision_bits = None if d['precision_bits'] is None else int(d['precision_bits'])

        if not 0 <= self.seed < 2**64:
            raise ValueError(f'seed must be a 64-bit value, got {self.seed}')
        for key in COUNT_KEYS:
            if getattr(self, key) < 1:
                raise ValueError(f'{key} must be >= 1, got {getattr(self, key)}')
        if self.refine < 0:
            raise ValueError(f'refine must be >= 0, got {self.refine}')
        if self.tol <= 0:
            raise ValueError(f'tol must be positive, got {self.tol}')
        if self.format not in ('json', 'csv'):
            raise ValueError(f'format must be json or csv, got {self.format!r}')
        if self.precision_bits is not None and self.precision_bits < 1:
            raise ValueError(f'precision_bits must be >= 1, got {self.precision_bits}')

    @classmethod
    def load(cls, path: str) -> 'ExperimentConfig':
        with open(path) as f:
            return cls(json5.load(f))

    def override(self, **kwargs) -> 'ExperimentConfig':
        """A copy with every non-None keyword replacing the stored value."""
        return ExperimentConfig(
            {**self.data, **{k: v for k, v in kwargs.items() if v is not None}}
        )

    def to_json(self) -> dict:
        return dict(self.data)
