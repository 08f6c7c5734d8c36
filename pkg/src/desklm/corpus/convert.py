"""Traditional-to-simplified conversion by greedy longest-match substitution."""

from importlib import resources

from ..errors import ConfigError

_TABLE_FILE = "t2s_table.tsv"


class ConversionTable:
    """Ordered map from traditional keys (1+ characters) to simplified values.

    Keys must be unique; lookup is longest-match-first, so multi-character
    entries win over their single-character prefixes.
    """

    def __init__(self, pairs):
        self.mapping = {}
        for key, value in pairs:
            if not key:
                raise ConfigError("conversion table key must be non-empty")
            if key in self.mapping:
                raise ConfigError(f"duplicate conversion table key: {key!r}")
            self.mapping[key] = value
        self.max_key_len = max((len(k) for k in self.mapping), default=0)

    def __len__(self):
        return len(self.mapping)

    def __contains__(self, key):
        return key in self.mapping

    @classmethod
    def from_file(cls, path):
        """Load "traditional<TAB>simplified" lines; '#' comments and blank lines skipped."""
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.rstrip("\n")
                if not body.strip() or body.lstrip().startswith("#"):
                    continue
                cols = body.split("\t")
                if len(cols) != 2:
                    raise ConfigError(f"line {lineno}: expected 2 tab-separated columns, got {len(cols)}")
                pairs.append((cols[0], cols[1]))
        return cls(pairs)


def default_table():
    """The bundled ~400-entry table; full tables are user-suppliable via from_file."""
    path = resources.files(__package__) / "data" / _TABLE_FILE
    with resources.as_file(path) as p:
        return ConversionTable.from_file(p)


def t2s_convert(text, table):
    """Greedy longest-match left-to-right substitution.

    At each position the longest key starting there is replaced; characters
    absent from the table pass through unchanged.
    """
    mapping = table.mapping
    n = len(text)
    out = []
    i = 0
    while i < n:
        # longest candidate first so {AB: x, A: y} maps "ABA" to "xy"
        matched = False
        for length in range(min(table.max_key_len, n - i), 0, -1):
            piece = text[i : i + length]
            if piece in mapping:
                out.append(mapping[piece])
                i += length
                matched = True
                break
        if not matched:
            out.append(text[i])
            i += 1
    return "".join(out)
