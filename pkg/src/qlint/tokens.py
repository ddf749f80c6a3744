"""Token counting for the context budget and the knowledge-base size filter."""

from __future__ import annotations

import math

TOKENIZER_NAME = "bytes/4"


def count_tokens(text: str) -> int:
    """Approximate token count: ceil(UTF-8 bytes / 4).

    The provider's own tokenizer is not bundled; the estimate is monotone under
    appending, which is the property the size filters rely on.
    """
    return math.ceil(len(text.encode("utf-8")) / 4)
