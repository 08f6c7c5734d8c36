"""Text cleaning: markup tags, emoji, URLs, e-mail addresses, whitespace.

The stage order is load-bearing for one-pass idempotence:

  1. tags        <...> spans removed first; afterwards no surviving "<" has
                 any ">" after it, so later deletions can never re-form a tag
  2. emoji       single code points anywhere, including inside tokens; removal
                 can splice a URL or address back together ("http\U0001F600://x"),
                 which is why it runs before the span removals
  3. urls        scheme or www. prefixed runs of non-space
  4. emails      local@domain.tld runs of non-space, after URLs so that a
                 stripped URL tail ("u@v.w") is still caught
  5. whitespace  runs collapsed to one space, ends trimmed; never merges tokens

clean_text(clean_text(x)) == clean_text(x) for every input.
"""

import re
from importlib import resources

import numpy as np

from ..errors import DecodeError

_TAG_RE = re.compile(r"<[^>]*>")
_URL_RE = re.compile(r"https?://\S+|www\.\S+")
_EMAIL_RE = re.compile(r"\S+@\S+\.\S+")

_RANGE_FILE = "emoji_ranges.txt"


def load_emoji_ranges():
    """Parse the bundled range list into an (n, 2) int array of code points.

    File format: one "U+XXXX..U+YYYY" range per line, '#' comments, blank
    lines ignored.  Ranges are inclusive on both ends.
    """
    text = (resources.files(__package__) / "data" / _RANGE_FILE).read_text("utf-8")
    rows = []
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        lo, hi = body.split("..")
        rows.append((int(lo.removeprefix("U+"), 16), int(hi.removeprefix("U+"), 16)))
    return np.array(rows, dtype=np.int64)


def _emoji_pattern(ranges):
    parts = []
    for lo, hi in ranges:
        if lo == hi:
            parts.append(re.escape(chr(lo)))
        else:
            parts.append(re.escape(chr(lo)) + "-" + re.escape(chr(hi)))
    return re.compile("[" + "".join(parts) + "]")


_EMOJI_RE = _emoji_pattern(load_emoji_ranges())


def clean_text(raw):
    """Strip tags, emoji, URLs, and e-mail addresses; normalize whitespace.

    Accepts str or UTF-8 bytes.  Invalid byte input raises DecodeError
    carrying the offset of the first offending byte.
    """
    if isinstance(raw, (bytes, bytearray)):
        try:
            raw = bytes(raw).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DecodeError(f"invalid UTF-8 at byte {e.start}: {e.reason}", offset=e.start) from e
    text = _TAG_RE.sub("", raw)
    text = _EMOJI_RE.sub("", text)
    text = _URL_RE.sub("", text)
    text = _EMAIL_RE.sub("", text)
    return " ".join(text.split())
